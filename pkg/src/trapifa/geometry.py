"""Thin-wire meshes for the printed inverted-F antenna and simple test wires.

Mesh coordinates are free-space-equivalent: physical lengths multiplied by
``length_scale`` (the electrical lengthening caused by the FR4 board).  The
equivalent wire radii are not scaled.  The antenna lies in the y = 0 plane
with the ground edge along z = 0 and the radiating arm at z = height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Union

import numpy as np
from scipy.constants import c as C0

from .circuit import TrapSpec

GROUND_MODES = ("infinite-image", "wire-grid", "free-space")
CONFIGS = ("A", "B")

Load = Union[TrapSpec, complex]


class MeshError(ValueError):
    def __init__(self, message: str, offending: tuple[int, ...] = ()):
        super().__init__(message)
        self.offending = offending


@dataclass(frozen=True)
class SubstrateSpec:
    eps_r: float = 4.3
    loss_tan: float = 0.025
    strip_width: float = 13.5e-3
    board_thickness: float = 1.6e-3

    def __post_init__(self) -> None:
        if self.eps_r < 1:
            raise MeshError("eps_r must be >= 1")
        if self.loss_tan < 0:
            raise MeshError("loss_tan must be >= 0")
        if self.strip_width <= 0 or self.board_thickness <= 0:
            raise MeshError("substrate dimensions must be positive")


@dataclass(frozen=True)
class GroundSpec:
    size_x: float = 0.1
    size_y: float = 0.1
    thickness: float = 1.6e-3
    model: str = "infinite-image"
    # Wire-grid pitch as a fraction of the free-space wavelength at f_max.
    pitch_fraction: float = 0.1

    def __post_init__(self) -> None:
        if min(self.size_x, self.size_y, self.thickness) <= 0:
            raise MeshError("ground dimensions must be positive")
        if self.model not in GROUND_MODES:
            raise MeshError(f"unknown ground model {self.model!r}")
        if not 0 < self.pitch_fraction <= 0.1:
            raise MeshError("wire-grid pitch must be at most lambda/10")


@dataclass(frozen=True)
class AntennaParams:
    """Inverted-F geometry in physical metres.

    ``short_pin_offset`` is the distance from the shorting pin to the feed.
    ``extension_length`` is the conductor length of the low-band section
    beyond the trap (for config B this includes the drop from the arm).
    """

    footprint_length: float = 59.4e-3
    footprint_height: float = 11e-3
    trace_width: float = 2.7e-3
    feed_width: float = 0.65e-3
    conductor_thickness: float = 0.035e-3
    short_pin_offset: float = 5e-3
    trap_position_fraction: float = 0.6
    extension_length: float = 10e-3
    config: str = "B"
    branch_gap: float = 4e-3
    length_scale: float | None = None

    def __post_init__(self) -> None:
        for name in ("footprint_length", "footprint_height", "trace_width", "feed_width",
                     "conductor_thickness", "short_pin_offset", "extension_length", "branch_gap"):
            if not getattr(self, name) > 0:
                raise MeshError(f"{name} must be positive")
        if not 0 < self.trap_position_fraction < 1:
            raise MeshError("trap_position_fraction must lie strictly inside (0, 1)")
        if self.config not in CONFIGS:
            raise MeshError(f"config must be 'A' or 'B', got {self.config!r}")
        if self.short_pin_offset >= self.trap_position_fraction * self.footprint_length:
            raise MeshError("feed must sit between the shorting pin and the trap")
        if self.config == "B" and self.extension_length <= self.branch_gap:
            raise MeshError("config B extension must be longer than the branch drop")
        if self.config == "B" and self.branch_gap >= self.footprint_height:
            raise MeshError("config B branch drop must stay above the ground edge")
        if self.length_scale is not None and not self.length_scale > 0:
            raise MeshError("length_scale must be positive")


@dataclass(frozen=True, eq=False)
class SegmentMesh:
    """Straight wire segments plus feed and lumped-load attachments.

    The feed gap and each load sit at the *start* node of the named segment.
    """

    starts: np.ndarray
    ends: np.ndarray
    radii: np.ndarray
    feed_segment: int
    loads: Mapping[int, Load] = field(default_factory=dict)
    ground_mode: str = "infinite-image"
    length_scale: float = 1.0
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        starts = np.array(self.starts, dtype=float).reshape(-1, 3)
        ends = np.array(self.ends, dtype=float).reshape(-1, 3)
        radii = np.array(self.radii, dtype=float).reshape(-1)
        for arr in (starts, ends, radii):
            arr.setflags(write=False)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "loads", dict(sorted(self.loads.items())))
        tags = tuple(self.tags) if self.tags else ("wire",) * len(radii)
        object.__setattr__(self, "tags", tags)
        if not (len(starts) == len(ends) == len(radii) == len(tags)):
            raise MeshError("segment arrays have inconsistent lengths")
        if self.ground_mode not in GROUND_MODES:
            raise MeshError(f"unknown ground mode {self.ground_mode!r}")

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def length_of(self, tag: str) -> float:
        mask = np.array([t == tag for t in self.tags])
        return float(self.lengths[mask].sum())

    def trap_segments(self) -> list[int]:
        return [i for i, load in self.loads.items() if isinstance(load, TrapSpec)]

    def with_loads(self, loads: Mapping[int, Load]) -> "SegmentMesh":
        return replace(self, loads=dict(loads))

    def with_segment(self, index: int, start, end) -> "SegmentMesh":
        starts = self.starts.copy()
        ends = self.ends.copy()
        starts[index] = start
        ends[index] = end
        return replace(self, starts=starts, ends=ends)

    def fingerprint(self) -> bytes:
        parts = [self.starts.tobytes(), self.ends.tobytes(), self.radii.tobytes(),
                 repr((self.feed_segment, self.ground_mode, self.length_scale, self.tags)).encode(),
                 repr(sorted((k, repr(v)) for k, v in self.loads.items())).encode()]
        return b"|".join(parts)


def effective_permittivity_scale(substrate: SubstrateSpec) -> float:
    """1/sqrt((eps_r + 1)/2): guided-to-free-space wavelength ratio."""
    if substrate.eps_r < 1:
        raise MeshError("eps_r must be >= 1")
    return 1.0 / math.sqrt((substrate.eps_r + 1.0) / 2.0)


def wavelength(f: float) -> float:
    return C0 / f


# --- construction helpers -------------------------------------------------


class _Builder:
    def __init__(self, max_len: float):
        self.max_len = max_len
        self.starts: list[np.ndarray] = []
        self.ends: list[np.ndarray] = []
        self.radii: list[float] = []
        self.tags: list[str] = []

    def run(self, p0, p1, radius: float, tag: str, min_segments: int = 1) -> list[int]:
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        length = float(np.linalg.norm(p1 - p0))
        if math.isfinite(self.max_len):
            # min_segments times a power of two: halving max_len doubles every run
            # longer than the new max_len
            need = math.ceil(length / (self.max_len * min_segments) - 1e-9)
            n = min_segments << max(0, math.ceil(math.log2(max(need, 1))))
        else:
            n = min_segments
        first = len(self.radii)
        for i in range(n):
            self.starts.append(p0 + (p1 - p0) * (i / n))
            self.ends.append(p0 + (p1 - p0) * ((i + 1) / n))
            self.radii.append(radius)
            self.tags.append(tag)
        return list(range(first, first + n))

    def mesh(self, feed: int, loads, ground_mode: str, length_scale: float) -> SegmentMesh:
        return SegmentMesh(np.array(self.starts), np.array(self.ends), np.array(self.radii),
                           feed, loads, ground_mode, length_scale, tuple(self.tags))


def build_dipole(length: float, radius: float, n_segments: int,
                 loads: Mapping[int, Load] | None = None) -> SegmentMesh:
    """Centre-fed straight dipole along z in free space (even segment count)."""
    if n_segments < 2 or n_segments % 2:
        raise MeshError("dipole needs an even number of segments >= 2")
    b = _Builder(math.inf)
    b.run((0, 0, -length / 2), (0, 0, length / 2), radius, "wire", n_segments)
    return b.mesh(n_segments // 2, loads or {}, "free-space", 1.0)


def build_monopole(length: float, radius: float, n_segments: int,
                   loads: Mapping[int, Load] | None = None) -> SegmentMesh:
    """Base-fed vertical monopole over the infinite ground plane."""
    b = _Builder(math.inf)
    b.run((0, 0, 0), (0, 0, length), radius, "wire", n_segments)
    return b.mesh(0, loads or {}, "infinite-image", 1.0)


def build_polyline(points, radius: float, segments_per_run, feed_segment: int,
                   loads: Mapping[int, Load] | None = None,
                   ground_mode: str = "free-space") -> SegmentMesh:
    b = _Builder(math.inf)
    pts = [np.asarray(p, dtype=float) for p in points]
    if isinstance(segments_per_run, int):
        segments_per_run = [segments_per_run] * (len(pts) - 1)
    for p0, p1, n in zip(pts[:-1], pts[1:], segments_per_run):
        b.run(p0, p1, radius, "wire", n)
    return b.mesh(feed_segment, loads or {}, ground_mode, 1.0)


def resolve_length_scale(params: AntennaParams, substrate: SubstrateSpec) -> float:
    if params.length_scale is not None:
        return params.length_scale
    return 1.0 / effective_permittivity_scale(substrate)


def build_ifa_mesh(
    params: AntennaParams,
    substrate: SubstrateSpec = SubstrateSpec(),
    ground: GroundSpec = GroundSpec(),
    max_seg_fraction: float = 1 / 20,
    f_max: float = 1e9,
    trap: Load | None = None,
) -> SegmentMesh:
    """Inverted-F antenna with one trap.

    Layout (mesh coordinates, y = 0 plane): shorting pin at x = 0, feed at
    x = short_pin_offset, both running from the ground edge up to the arm at
    z = height.  Config A puts the trap on the arm at the trap fraction with
    the extension continuing straight past the arm end.  Config B hangs the
    trap and extension on a branch that drops ``branch_gap`` below the arm at
    the trap fraction and then runs towards the tip, while the arm itself
    continues to its end.
    """
    if not 0 < max_seg_fraction <= 0.1:
        raise MeshError("max_seg_fraction must be in (0, 1/10]")
    if not f_max > 0:
        raise MeshError("f_max must be positive")
    if trap is None:
        from .circuit import reference_trap

        trap = reference_trap()
    scale = resolve_length_scale(params, substrate)
    max_len = max_seg_fraction * wavelength(f_max)
    h = params.footprint_height * scale
    la = params.footprint_length * scale
    d = params.short_pin_offset * scale
    xt = params.trap_position_fraction * la
    ext = params.extension_length * scale
    r_arm = params.trace_width / 4
    r_feed = params.feed_width / 4

    b = _Builder(max_len)
    feed = b.run((d, 0, 0), (d, 0, h), r_feed, "feed")[0]
    b.run((0, 0, 0), (0, 0, h), r_arm, "short")
    b.run((0, 0, h), (d, 0, h), r_arm, "arm")
    if params.config == "A":
        b.run((d, 0, h), (xt, 0, h), r_arm, "arm")
        trap_seg = b.run((xt, 0, h), (la, 0, h), r_arm, "arm")[0]
        b.run((la, 0, h), (la + ext, 0, h), r_arm, "extension")
    else:
        b.run((d, 0, h), (xt, 0, h), r_arm, "arm")
        b.run((xt, 0, h), (la, 0, h), r_arm, "arm")
        gap = params.branch_gap * scale
        drop = b.run((xt, 0, h), (xt, 0, h - gap), r_arm, "extension", min_segments=2)
        trap_seg = drop[1]
        b.run((xt, 0, h - gap), (xt + ext - gap, 0, h - gap), r_arm, "extension")

    mode = ground.model
    if mode == "wire-grid":
        _add_ground_grid(b, ground, params, scale, d, f_max)
    mesh = b.mesh(feed, {trap_seg: trap}, mode, scale)
    report = validate_mesh(mesh, f_max)
    if not report.ok:
        raise MeshError("invalid antenna mesh: " + "; ".join(report.failures()),
                        report.offending_segments())
    return mesh


def _add_ground_grid(b: _Builder, ground: GroundSpec, params: AntennaParams,
                     scale: float, d: float, f_max: float) -> None:
    """Wire-grid ground in the antenna plane below the ground edge (z < 0)."""
    pitch = ground.pitch_fraction * wavelength(f_max)
    gx = ground.size_x * scale
    gz = ground.size_y * scale
    x0 = 0.5 * (params.footprint_length * scale - gx)
    nx = max(2, int(math.ceil(gx / pitch)))
    nz = max(1, int(math.ceil(gz / pitch)))
    uniform = x0 + gx * np.arange(nx + 1) / nx
    forced = [0.0, d]
    keep = [x for i, x in enumerate(uniform)
            if i in (0, nx) or min(abs(x - fx) for fx in forced) > pitch / 3]
    xs = sorted(set(np.round(np.concatenate([keep, forced]), 12)))
    zs = [-gz * j / nz for j in range(nz + 1)]
    radius = min(params.trace_width / 4, 0.2 * min(np.diff(xs)))
    for z in zs:
        for xa, xb in zip(xs[:-1], xs[1:]):
            b.run((xa, 0, z), (xb, 0, z), radius, "ground")
    for x in xs:
        for za, zb in zip(zs[:-1], zs[1:]):
            b.run((x, 0, za), (x, 0, zb), radius, "ground")


# --- validation -------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""
    segments: tuple[int, ...] = ()


@dataclass
class MeshReport:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[str]:
        return [f"{c.name}: {c.detail}" for c in self.checks if not c.ok]

    def offending_segments(self) -> tuple[int, ...]:
        out: set[int] = set()
        for c in self.checks:
            if not c.ok:
                out.update(c.segments)
        return tuple(sorted(out))

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def node_ids(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Integer node id per point; points closer than ``tol`` share an id."""
    keys = np.round(points / tol).astype(np.int64)
    ids = np.empty(len(points), dtype=np.int64)
    seen: dict[tuple[int, int, int], int] = {}
    for i, k in enumerate(map(tuple, keys)):
        ids[i] = seen.setdefault(k, len(seen))
    return ids


def segment_distances(p0: np.ndarray, p1: np.ndarray, q0: np.ndarray, q1: np.ndarray) -> np.ndarray:
    """Closest distance between segment pairs (broadcasting over leading axes)."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("...i,...i", d1, d1)
    e = np.einsum("...i,...i", d2, d2)
    f = np.einsum("...i,...i", d2, r)
    c = np.einsum("...i,...i", d1, r)
    b = np.einsum("...i,...i", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-14 * a * e, np.clip((b * f - c * e) / denom, 0, 1), 0.0)
        t = (b * s + f) / e
        t_c = np.clip(t, 0, 1)
        s = np.where(t != t_c, np.clip((b * t_c - c) / a, 0, 1), s)
    c1 = p0 + s[..., None] * d1
    c2 = q0 + t_c[..., None] * d2
    return np.linalg.norm(c1 - c2, axis=-1)


def validate_mesh(mesh: SegmentMesh, f_max: float, max_fraction: float = 0.1) -> MeshReport:
    """Run every structural check and report each one; never raises."""
    checks: list[CheckResult] = []
    n = len(mesh)
    lengths = mesh.lengths
    lam = wavelength(f_max) if f_max > 0 else math.inf

    bad = tuple(int(i) for i in np.nonzero(lengths > max_fraction * lam)[0])
    checks.append(CheckResult("electrical_length", not bad,
                              f"segments longer than {max_fraction:g} wavelength: {list(bad)}" if bad else "", bad))

    bad = tuple(int(i) for i in np.nonzero(~(lengths > 2.5 * mesh.radii))[0])
    checks.append(CheckResult("radius_ratio", not bad,
                              f"segments not longer than 2.5 radii: {list(bad)}" if bad else "", bad))

    idx_bad = []
    if not 0 <= mesh.feed_segment < n:
        idx_bad.append(f"feed segment {mesh.feed_segment} out of range")
    for k in mesh.loads:
        if not 0 <= k < n:
            idx_bad.append(f"load segment {k} out of range")
    if mesh.feed_segment in mesh.loads:
        idx_bad.append("feed and load share a segment")
    checks.append(CheckResult("indices", not idx_bad, "; ".join(idx_bad)))

    if n == 0:
        checks.append(CheckResult("connectivity", False, "empty mesh"))
        return MeshReport(checks)

    ids = node_ids(np.vstack([mesh.starts, mesh.ends]))
    s_id, e_id = ids[:n], ids[n:]
    parent = list(range(int(ids.max()) + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(s_id, e_id):
        parent[find(int(a))] = find(int(b))
    root = find(int(s_id[mesh.feed_segment])) if 0 <= mesh.feed_segment < n else find(int(s_id[0]))
    bad = tuple(i for i in range(n) if find(int(s_id[i])) != root)
    checks.append(CheckResult("connectivity", not bad,
                              f"segments not connected to the feed: {list(bad)}" if bad else "", bad))

    # Overlap: non-adjacent segments closer than their radii, or adjacent ones folding back.
    i_idx, j_idx = np.triu_indices(n, k=1)
    dist = segment_distances(mesh.starts[i_idx], mesh.ends[i_idx], mesh.starts[j_idx], mesh.ends[j_idx])
    shares = ((s_id[i_idx] == s_id[j_idx]) | (s_id[i_idx] == e_id[j_idx])
              | (e_id[i_idx] == s_id[j_idx]) | (e_id[i_idx] == e_id[j_idx]))
    touching = dist < np.maximum(mesh.radii[i_idx], mesh.radii[j_idx])
    coincident = (((s_id[i_idx] == s_id[j_idx]) & (e_id[i_idx] == e_id[j_idx]))
                  | ((s_id[i_idx] == e_id[j_idx]) & (e_id[i_idx] == s_id[j_idx])))
    u = (mesh.ends - mesh.starts) / np.where(lengths > 0, lengths, 1.0)[:, None]
    cosang = np.abs(np.einsum("ij,ij->i", u[i_idx], u[j_idx]))
    folded = shares & (cosang > 1 - 1e-9) & (dist < 1e-12) & _overlapping_colinear(mesh, i_idx, j_idx)
    bad_pairs = (touching & ~shares) | coincident | folded
    pairs = [(int(a), int(b)) for a, b in zip(i_idx[bad_pairs], j_idx[bad_pairs])]
    segs = tuple(sorted({x for p in pairs for x in p}))
    checks.append(CheckResult("overlap", not pairs,
                              f"overlapping or intersecting segment pairs: {pairs[:10]}" if pairs else "", segs))

    if mesh.ground_mode == "infinite-image":
        tol = 1e-12
        below = tuple(int(i) for i in np.nonzero((mesh.starts[:, 2] < -tol) | (mesh.ends[:, 2] < -tol))[0])
        flat = tuple(int(i) for i in np.nonzero((np.abs(mesh.starts[:, 2]) <= tol) & (np.abs(mesh.ends[:, 2]) <= tol))[0])
        bad = tuple(sorted(set(below + flat)))
        checks.append(CheckResult("ground_plane", not bad,
                                  f"segments below or lying in the ground plane: {list(bad)}" if bad else "", bad))
    return MeshReport(checks)


def _overlapping_colinear(mesh: SegmentMesh, i_idx: np.ndarray, j_idx: np.ndarray) -> np.ndarray:
    """For colinear segment pairs: does the projection of one overlap the other?"""
    p0, p1 = mesh.starts[i_idx], mesh.ends[i_idx]
    q0, q1 = mesh.starts[j_idx], mesh.ends[j_idx]
    d = p1 - p0
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd > 0, dd, 1.0)
    ta = np.einsum("ij,ij->i", q0 - p0, d) / dd
    tb = np.einsum("ij,ij->i", q1 - p0, d) / dd
    lo = np.minimum(ta, tb)
    hi = np.maximum(ta, tb)
    return (np.minimum(hi, 1.0) - np.maximum(lo, 0.0)) > 1e-9
