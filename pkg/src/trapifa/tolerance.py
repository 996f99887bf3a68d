"""Corner and Monte Carlo tolerance analysis of a trap-loaded antenna.

Band judgement uses the worst (highest) S11 in dB anywhere inside the band,
with the band edges added to the sweep grid.  The dip that belongs to a band
is the deepest local minimum in that band's capture region; capture regions
split the grid halfway between neighbouring band centres.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import CANONICAL_CORNERS, NOMINAL, ComponentValue, Corner, TrapSpec
from .geometry import SegmentMesh
from .solver import Sweep, SweepEngine, find_resonances

DEFAULT_THRESHOLD_DB = -10.0
DISTRIBUTIONS = ("uniform", "corner-weighted")


class ToleranceError(ValueError):
    pass


class IncompleteReportError(ToleranceError):
    pass


class UntunedDesignError(ToleranceError):
    pass


@dataclass(frozen=True)
class BandSpec:
    name: str
    f_lo: float
    f_hi: float

    def __post_init__(self) -> None:
        if not self.f_lo < self.f_hi:
            raise ToleranceError(f"band {self.name!r}: f_lo must be below f_hi")

    @property
    def center(self) -> float:
        return 0.5 * (self.f_lo + self.f_hi)


def default_bands() -> list[BandSpec]:
    return [BandSpec("868", 865e6, 870e6), BandSpec("915", 902e6, 928e6)]


# --- per-sweep band metrics --------------------------------------------------


@dataclass(frozen=True)
class BandResult:
    worst_rl_db: float
    dip_f: float | None
    dip_rl_db: float | None

    def as_dict(self) -> dict:
        return {"worst_rl_db": self.worst_rl_db, "dip_f_hz": self.dip_f, "dip_rl_db": self.dip_rl_db}


def analysis_grid(grid: Sequence[float], bands: Sequence[BandSpec]) -> np.ndarray:
    """Sweep grid with every band edge inserted."""
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size == 0:
        raise ToleranceError("empty frequency grid")
    for b in bands:
        if b.f_lo < g[0] or b.f_hi > g[-1]:
            raise ToleranceError(f"band {b.name!r} lies outside the sweep grid")
    edges = [x for b in bands for x in (b.f_lo, b.f_hi)]
    return np.unique(np.concatenate([g, edges]))


def _capture_limits(bands: Sequence[BandSpec]) -> list[tuple[float, float]]:
    order = sorted(range(len(bands)), key=lambda i: bands[i].center)
    limits: list[tuple[float, float]] = [(0.0, 0.0)] * len(bands)
    for pos, i in enumerate(order):
        lo = -math.inf if pos == 0 else 0.5 * (bands[order[pos - 1]].center + bands[i].center)
        hi = math.inf if pos == len(order) - 1 else 0.5 * (bands[i].center + bands[order[pos + 1]].center)
        limits[i] = (lo, hi)
    return limits


def band_results(freqs: np.ndarray, rl_db: np.ndarray, bands: Sequence[BandSpec]) -> list[BandResult]:
    dips = find_resonances(freqs, rl_db, threshold_db=math.inf)
    out = []
    for band, (lo, hi) in zip(bands, _capture_limits(bands)):
        mask = (freqs >= band.f_lo) & (freqs <= band.f_hi)
        worst = float(rl_db[mask].max())
        mine = [d for d in dips if lo <= d.f_dip < hi]
        if mine:
            best = min(mine, key=lambda d: (d.rl_db, d.f_dip))
            out.append(BandResult(worst, best.f_dip, best.rl_db))
        else:
            out.append(BandResult(worst, None, None))
    return out


# --- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class CornerRow:
    label: str
    bands: tuple[BandResult, ...]

    def as_dict(self, names: Sequence[str]) -> dict:
        return {"corner": self.label, "bands": {n: b.as_dict() for n, b in zip(names, self.bands)}}


@dataclass(frozen=True)
class MonteCarloSummary:
    n: int
    seed: int
    distribution: str
    pass_rate: float
    dip_min: tuple[float | None, ...]
    dip_max: tuple[float | None, ...]
    worst_rl_db: tuple[float, ...]
    missing_dips: tuple[int, ...]

    def as_dict(self, names: Sequence[str]) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "distribution": self.distribution,
            "pass_rate": self.pass_rate,
            "bands": {
                n: {"dip_min_hz": lo, "dip_max_hz": hi, "worst_rl_db": w, "missing_dips": m}
                for n, lo, hi, w, m in zip(names, self.dip_min, self.dip_max, self.worst_rl_db, self.missing_dips)
            },
        }


@dataclass
class ToleranceReport:
    bands: tuple[BandSpec, ...]
    threshold_db: float
    corners: list[CornerRow]
    failures: list[tuple[str, str]] = field(default_factory=list)
    monte_carlo: MonteCarloSummary | None = None

    @property
    def complete(self) -> bool:
        return not self.failures and len(self.corners) == len(CANONICAL_CORNERS)

    @property
    def verdict(self) -> str:
        if not self.complete:
            return "incomplete"
        return "pass" if pass_fail(self, self.threshold_db) else "fail"

    def row(self, label: str) -> CornerRow:
        for r in self.corners:
            if r.label == label:
                return r
        raise KeyError(label)

    def subset(self, names: Sequence[str]) -> "ToleranceReport":
        """Same corners, restricted to the named bands (dips keep their assignment)."""
        idx = [i for i, b in enumerate(self.bands) if b.name in names]
        if len(idx) != len(set(names)):
            raise ToleranceError(f"unknown band in {list(names)}")
        rows = [CornerRow(r.label, tuple(r.bands[i] for i in idx)) for r in self.corners]
        return ToleranceReport(tuple(self.bands[i] for i in idx), self.threshold_db, rows,
                               list(self.failures), self.monte_carlo if len(idx) == len(self.bands) else None)

    def dip_envelope(self, band_index: int) -> tuple[float, float]:
        f = [r.bands[band_index].dip_f for r in self.corners]
        if any(x is None for x in f):
            raise ToleranceError(f"band {self.bands[band_index].name!r} has a corner without a dip")
        return min(f), max(f)

    def dip_shift(self, band_index: int) -> float:
        """Largest |dip(corner) - dip(nominal)| over the corners."""
        nominal = self.row(NOMINAL.label).bands[band_index].dip_f
        if nominal is None:
            raise ToleranceError(f"no nominal dip in band {self.bands[band_index].name!r}")
        lo, hi = self.dip_envelope(band_index)
        return max(nominal - lo, hi - nominal)

    def worst_rl(self, band_index: int) -> float:
        return max(r.bands[band_index].worst_rl_db for r in self.corners)

    def margin_db(self) -> float:
        """threshold minus the worst in-band value; positive means passing."""
        return self.threshold_db - max(self.worst_rl(i) for i in range(len(self.bands)))

    def as_dict(self) -> dict:
        names = [b.name for b in self.bands]
        return {
            "bands": [{"name": b.name, "f_lo_hz": b.f_lo, "f_hi_hz": b.f_hi} for b in self.bands],
            "threshold_db": self.threshold_db,
            "corners": [r.as_dict(names) for r in self.corners],
            "failures": [{"corner": c, "message": m} for c, m in self.failures],
            "monte_carlo": self.monte_carlo.as_dict(names) if self.monte_carlo else None,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def pass_fail(report: ToleranceReport, threshold_db: float = DEFAULT_THRESHOLD_DB) -> bool:
    """True iff every corner stays at or below ``threshold_db`` across every band."""
    if not report.complete:
        names = ", ".join(c for c, _ in report.failures) or "missing corners"
        raise IncompleteReportError(f"report is incomplete ({names})")
    return all(b.worst_rl_db <= threshold_db for r in report.corners for b in r.bands)


# --- analyses ----------------------------------------------------------------


_ENGINES: dict[tuple, tuple[SegmentMesh, SweepEngine]] = {}


def sweep_engine(mesh: SegmentMesh, grid: np.ndarray, threads: int = 1) -> SweepEngine:
    """Shared engine per (mesh, grid) so corners and samples reuse one set of matrices."""
    key = (id(mesh), grid.tobytes())
    hit = _ENGINES.get(key)
    if hit is not None and hit[0] is mesh:
        return hit[1]
    engine = SweepEngine(mesh, grid, threads)
    if len(_ENGINES) > 8:
        _ENGINES.clear()
    _ENGINES[key] = (mesh, engine)
    return engine


def _trap_of(mesh: SegmentMesh, trap: TrapSpec | None) -> TrapSpec:
    traps = mesh.trap_segments()
    if len(traps) != 1:
        raise ToleranceError(f"mesh must carry exactly one trap load, found {len(traps)}")
    return trap if trap is not None else mesh.loads[traps[0]]


def _run(engine: SweepEngine, trap: TrapSpec, values: tuple[float, float, float], label: str) -> Sweep:
    return engine.run(trap_values=(*values, trap.r_series_ind, trap.r_series_cap), label=label)


def corner_analysis(mesh: SegmentMesh, trap: TrapSpec | None, bands: Sequence[BandSpec],
                    grid: Sequence[float], threshold_db: float = DEFAULT_THRESHOLD_DB,
                    threads: int = 1, corners: Sequence[Corner] = CANONICAL_CORNERS,
                    sweeps: dict[str, Sweep] | None = None) -> ToleranceReport:
    """Sweep the antenna at each LC corner and collect per-band worst S11.

    ``trap`` overrides the component values of the mesh's trap load; pass
    None to use the trap stored on the mesh.  Completed sweeps are stored
    in ``sweeps`` when a dict is supplied.
    """
    trap = _trap_of(mesh, trap)
    bands = tuple(bands)
    if not bands:
        raise ToleranceError("at least one band is required")
    g = analysis_grid(grid, bands)
    engine = sweep_engine(mesh, g, threads)
    rows: list[CornerRow] = []
    failures: list[tuple[str, str]] = []
    for corner in corners:
        sw = _run(engine, trap, trap.values(corner), corner.label)
        if sweeps is not None:
            sweeps[corner.label] = sw
        if not sw.ok:
            failures.append((corner.label, "; ".join(m for _, m in sw.failures)))
            continue
        rows.append(CornerRow(corner.label, tuple(band_results(sw.freqs, sw.rl_db, bands))))
    return ToleranceReport(bands, threshold_db, rows, failures)


def _draw(rng: np.random.Generator, value: ComponentValue, distribution: str) -> float:
    u = rng.uniform(-1.0, 1.0)
    if distribution == "corner-weighted":
        # arcsine law on [-1, 1]: density piles up at the tolerance limits
        u = math.sin(0.5 * math.pi * u)
    return value.nominal + u * value.half_width


def sample_values(trap: TrapSpec, n: int, seed: int, distribution: str = "uniform") -> list[tuple[float, float, float]]:
    """(L1, L2, C) draws; each part varies independently inside its tolerance."""
    if n < 1:
        raise ToleranceError("Monte Carlo needs n >= 1")
    if distribution not in DISTRIBUTIONS:
        raise ToleranceError(f"unknown distribution {distribution!r}")
    rng = np.random.default_rng(seed)
    return [(_draw(rng, trap.ind1, distribution), _draw(rng, trap.ind2, distribution),
             _draw(rng, trap.cap, distribution)) for _ in range(n)]


def monte_carlo(mesh: SegmentMesh, trap: TrapSpec | None, bands: Sequence[BandSpec],
                grid: Sequence[float], n: int = 200, seed: int = 0, distribution: str = "uniform",
                threshold_db: float = DEFAULT_THRESHOLD_DB, threads: int = 1) -> ToleranceReport:
    """Corner report plus a seeded Monte Carlo summary."""
    trap = _trap_of(mesh, trap)
    draws = sample_values(trap, n, seed, distribution)
    report = corner_analysis(mesh, trap, bands, grid, threshold_db, threads)
    g = analysis_grid(grid, report.bands)
    engine = sweep_engine(mesh, g, threads)
    nb = len(report.bands)
    dips: list[list[float]] = [[] for _ in range(nb)]
    worst = [-math.inf] * nb
    missing = [0] * nb
    passed = 0
    for i, values in enumerate(draws):
        sw = _run(engine, trap, values, f"sample-{i}")
        if not sw.ok:
            report.failures.append((f"sample-{i}", "; ".join(m for _, m in sw.failures)))
            continue
        res = band_results(sw.freqs, sw.rl_db, report.bands)
        ok = True
        for b, r in enumerate(res):
            worst[b] = max(worst[b], r.worst_rl_db)
            ok = ok and r.worst_rl_db <= threshold_db
            if r.dip_f is None:
                missing[b] += 1
            else:
                dips[b].append(r.dip_f)
        passed += ok
    report.monte_carlo = MonteCarloSummary(
        n, int(seed), distribution, passed / n,
        tuple(min(d) if d else None for d in dips),
        tuple(max(d) if d else None for d in dips),
        tuple(worst), tuple(missing))
    return report


# --- configuration comparison -------------------------------------------------


@dataclass(frozen=True)
class DesignSummary:
    name: str
    nominal_dips: tuple[float, ...]
    dip_shifts: tuple[float, ...]
    worst_rl_db: tuple[float, ...]
    margin_db: float
    passes: bool

    def as_dict(self, names: Sequence[str]) -> dict:
        return {
            "name": self.name,
            "margin_db": self.margin_db,
            "pass": self.passes,
            "bands": {n: {"nominal_dip_hz": d, "dip_shift_hz": s, "worst_rl_db": w}
                      for n, d, s, w in zip(names, self.nominal_dips, self.dip_shifts, self.worst_rl_db)},
        }


@dataclass
class Comparison:
    bands: tuple[BandSpec, ...]
    threshold_db: float
    a: DesignSummary
    b: DesignSummary
    reports: tuple[ToleranceReport, ToleranceReport]

    @property
    def low_band(self) -> int:
        return min(range(len(self.bands)), key=lambda i: self.bands[i].f_lo)

    @property
    def thesis(self) -> str:
        """How B's low-band corner shift compares with A's: smaller, equal or larger."""
        sa = self.a.dip_shifts[self.low_band]
        sb = self.b.dip_shifts[self.low_band]
        if sb < sa:
            return "smaller"
        return "equal" if sb == sa else "larger"

    def as_dict(self) -> dict:
        names = [b.name for b in self.bands]
        return {
            "bands": [{"name": b.name, "f_lo_hz": b.f_lo, "f_hi_hz": b.f_hi} for b in self.bands],
            "threshold_db": self.threshold_db,
            "design_a": self.a.as_dict(names),
            "design_b": self.b.as_dict(names),
            "low_band": names[self.low_band],
            "b_low_band_shift_vs_a": self.thesis,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def summarize(name: str, report: ToleranceReport) -> DesignSummary:
    if not report.complete:
        raise IncompleteReportError(f"design {name}: report is incomplete")
    nominal = report.row(NOMINAL.label)
    dips = []
    for band, res in zip(report.bands, nominal.bands):
        if res.dip_f is None or not band.f_lo <= res.dip_f <= band.f_hi:
            raise UntunedDesignError(f"design {name}: no nominal dip inside band {band.name!r}")
        dips.append(res.dip_f)
    shifts = tuple(report.dip_shift(i) for i in range(len(report.bands)))
    worst = tuple(report.worst_rl(i) for i in range(len(report.bands)))
    return DesignSummary(name, tuple(dips), shifts, worst, report.margin_db(),
                         pass_fail(report, report.threshold_db))


def compare_configs(design_a: tuple[SegmentMesh, TrapSpec | None], design_b: tuple[SegmentMesh, TrapSpec | None],
                    bands: Sequence[BandSpec], grid: Sequence[float],
                    threshold_db: float = DEFAULT_THRESHOLD_DB, threads: int = 1) -> Comparison:
    ra = corner_analysis(design_a[0], design_a[1], bands, grid, threshold_db, threads)
    rb = corner_analysis(design_b[0], design_b[1], bands, grid, threshold_db, threads)
    return Comparison(tuple(bands), threshold_db, summarize("A", ra), summarize("B", rb), (ra, rb))


__all__ = [
    "BandSpec", "BandResult", "CornerRow", "MonteCarloSummary", "ToleranceReport", "Comparison",
    "DesignSummary", "ToleranceError", "IncompleteReportError", "UntunedDesignError",
    "analysis_grid", "band_results", "corner_analysis", "monte_carlo", "compare_configs",
    "pass_fail", "default_bands", "sample_values", "summarize", "DEFAULT_THRESHOLD_DB",
]
