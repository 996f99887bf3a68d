"""Thin-wire method-of-moments solver.

Mixed-potential electric-field integral equation with the reduced thin-wire
kernel exp(-jkR)/R, R = sqrt(|r - r'|^2 + a^2).  Currents are expanded in
overlapping triangle functions centred on interior nodes and tested with the
same functions (Galerkin), which makes the impedance matrix symmetric.

The static part 1/R of the kernel is integrated in closed form over the
source segment; the smooth remainder (exp(-jkR) - 1)/R and the outer
(testing) integral use fixed-order Gauss-Legendre rules.  Segment pairs that
are close to each other get a composite outer rule.

Over the infinite ground plane the structure is mirrored.  Each unknown on
the real structure is paired with its image, and a wire touching the plane
gets one unknown that straddles the contact point.  The reduced matrix is
half the Galerkin reaction of the doubled problem, so a delta gap of V volts
at a ground contact sees the monopole impedance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.constants import c as C0, epsilon_0 as EPS0, mu_0 as MU0

from .circuit import NOMINAL, Corner, TrapSpec, trap_impedance, trap_impedance_values
from .geometry import SegmentMesh, node_ids, segment_distances, validate_mesh

ETA0 = MU0 * C0
DEFAULT_Z0 = 50.0
MAX_CONDITION = 1e12

# Slot layout: every segment owns two linear shapes, rising (s/L) and falling (1 - s/L).
RISE, FALL = 0, 1


class SolverError(RuntimeError):
    pass


class NumericalError(SolverError):
    def __init__(self, message: str, f: float | None = None, condition: float | None = None):
        super().__init__(message)
        self.f = f
        self.condition = condition


@dataclass
class Topology:
    """Unknowns of a mesh and how they map onto segment shapes."""

    starts: np.ndarray  # segments of the (possibly mirrored) structure
    ends: np.ndarray
    radii: np.ndarray
    n_real: int  # first n_real segments are the mesh's own
    T: np.ndarray  # (2 * n_seg, n_basis) slot -> basis coefficients
    scale: float  # 0.5 for the mirrored problem
    port: np.ndarray  # (n_basis,) feed gap coupling
    load_basis: dict[int, int]  # mesh segment -> basis carrying its load
    basis_nodes: np.ndarray  # (n_basis, 3) node position of each basis

    @property
    def n_basis(self) -> int:
        return self.T.shape[1]

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)


def _mirror(p: np.ndarray) -> np.ndarray:
    q = np.array(p, dtype=float)
    q[..., 2] *= -1
    return q


def build_topology(mesh: SegmentMesh) -> Topology:
    n = len(mesh)
    image = mesh.ground_mode == "infinite-image"
    if image:
        starts = np.vstack([mesh.starts, _mirror(mesh.starts)])
        ends = np.vstack([mesh.ends, _mirror(mesh.ends)])
        radii = np.concatenate([mesh.radii, mesh.radii])
    else:
        starts, ends, radii = mesh.starts.copy(), mesh.ends.copy(), mesh.radii.copy()
    n_all = len(radii)
    ids = node_ids(np.vstack([starts, ends]))
    s_id, e_id = ids[:n_all], ids[n_all:]
    positions = np.empty((int(ids.max()) + 1, 3))
    positions[s_id] = starts
    positions[e_id] = ends

    attached: dict[int, list[int]] = {}
    for seg in range(n_all):
        attached.setdefault(int(s_id[seg]), []).append(seg)
        attached.setdefault(int(e_id[seg]), []).append(seg)

    def toward(seg: int, node: int) -> tuple[int, float]:
        # current flowing along seg into node
        return (2 * seg + RISE, 1.0) if e_id[seg] == node else (2 * seg + FALL, -1.0)

    def away(seg: int, node: int) -> tuple[int, float]:
        return (2 * seg + FALL, 1.0) if s_id[seg] == node else (2 * seg + RISE, -1.0)

    feed_node = int(s_id[mesh.feed_segment])
    load_nodes = {int(s_id[k]): k for k in mesh.loads}
    columns: list[list[tuple[int, float]]] = []
    nodes_of_basis: list[int] = []
    port: list[float] = []
    load_basis: dict[int, int] = {}

    def mirror_seg(seg: int) -> int:
        return seg + n if seg < n else seg - n

    for node in sorted(attached):
        segs = attached[node]
        real = [s for s in segs if s < n]
        if not real:
            continue  # image-only node
        if image and abs(positions[node, 2]) < 1e-12:
            # ground contact: one straddling unknown per real wire
            for seg in sorted(real):
                col = [toward(mirror_seg(seg), node), away(seg, node)]
                _add_column(columns, nodes_of_basis, port, node, col,
                            1.0 if (node == feed_node and seg == mesh.feed_segment) else 0.0)
                if node in load_nodes and seg == load_nodes[node]:
                    load_basis[seg] = len(columns) - 1
            continue
        if len(segs) < 2:
            continue  # free end
        ref = mesh.feed_segment if (node == feed_node and mesh.feed_segment in segs) else min(segs)
        if node in load_nodes:
            if len(segs) != 2:
                raise SolverError(f"load on segment {load_nodes[node]} sits at a junction of {len(segs)} wires")
            ref = load_nodes[node]
        for other in sorted(s for s in segs if s != ref):
            col = [toward(other, node), away(ref, node)]
            if image:
                img_node = int(s_id[mirror_seg(ref)]) if s_id[ref] == node else int(e_id[mirror_seg(ref)])
                col += [toward(mirror_seg(ref), img_node), away(mirror_seg(other), img_node)]
            _add_column(columns, nodes_of_basis, port, node, col,
                        1.0 if node == feed_node and ref == mesh.feed_segment else 0.0)
            if node in load_nodes:
                load_basis[load_nodes[node]] = len(columns) - 1

    if not columns:
        raise SolverError("mesh has no interior nodes: nothing to solve for")
    T = np.zeros((2 * n_all, len(columns)))
    for j, col in enumerate(columns):
        for slot, sign in col:
            T[slot, j] += sign
    port_arr = np.array(port)
    if not port_arr.any():
        raise SolverError("feed segment does not start at an interior node or ground contact")
    missing = [k for k in mesh.loads if k not in load_basis]
    if missing:
        raise SolverError(f"loads on segments {missing} do not start at an interior node")
    for k, b in load_basis.items():
        if port_arr[b] != 0:
            raise SolverError("feed and load must sit on distinct unknowns")
    return Topology(starts, ends, radii, n, T, 0.5 if image else 1.0, port_arr, load_basis,
                    positions[np.array(nodes_of_basis)])


def _add_column(columns, nodes_of_basis, port, node, col, port_value) -> None:
    columns.append(col)
    nodes_of_basis.append(node)
    port.append(port_value)


# --- quadrature --------------------------------------------------------------


@dataclass
class _PairGroup:
    p: np.ndarray
    q: np.ndarray
    w_out: np.ndarray  # (P, n_out) outer weights including Lp
    x_out: np.ndarray  # (P, n_out) s/Lp
    j0: np.ndarray  # (P, n_out) closed-form int 1/R dt
    j1: np.ndarray  # (P, n_out) closed-form int t/R dt
    r_in: np.ndarray  # (P, n_out, n_in)
    t_in: np.ndarray  # (P, n_in)
    w_in: np.ndarray  # (P, n_in) inner weights including Lq


@dataclass
class _Quadrature:
    groups: list[_PairGroup]
    n_seg: int


def _gauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1), 0.5 * w


def _composite(order: int, panels: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gauss(order)
    xs = np.concatenate([(i + x) / panels for i in range(panels)])
    ws = np.concatenate([w / panels for _ in range(panels)])
    return xs, ws


def _build_group(top: Topology, p: np.ndarray, q: np.ndarray, x_out: np.ndarray, w_out: np.ndarray,
                 x_in: np.ndarray, w_in: np.ndarray) -> _PairGroup:
    L = top.lengths
    u = (top.ends - top.starts) / L[:, None]
    a2 = 0.5 * (top.radii[p] ** 2 + top.radii[q] ** 2)
    Lp, Lq = L[p], L[q]
    obs = top.starts[p][:, None, :] + (x_out[None, :, None] * Lp[:, None, None]) * u[p][:, None, :]
    w = obs - top.starts[q][:, None, :]
    z = np.einsum("pik,pk->pi", w, u[q])
    rho2 = np.maximum(np.einsum("pik,pik->pi", w, w) - z * z, 0.0) + a2[:, None]
    rho = np.sqrt(rho2)
    Lq_ = Lq[:, None]
    j0 = np.arcsinh((Lq_ - z) / rho) + np.arcsinh(z / rho)
    r_end = np.sqrt(rho2 + (Lq_ - z) ** 2)
    r_start = np.sqrt(rho2 + z * z)
    j1 = r_end - r_start + z * j0
    t = x_in[None, :] * Lq[:, None]
    r_in = np.sqrt(rho2[:, :, None] + (t[:, None, :] - z[:, :, None]) ** 2)
    return _PairGroup(p, q, w_out[None, :] * Lp[:, None], np.broadcast_to(x_out, (len(p), len(x_out))).copy(),
                      j0, j1, r_in, t, w_in[None, :] * Lq[:, None])


def build_quadrature(top: Topology, order: int = 8, near_panels: int = 8,
                     far_ratio: float = 4.0) -> _Quadrature:
    """Pair groups by separation: composite outer rule when close, half order when far."""
    n = len(top.radii)
    p, q = np.triu_indices(n)
    L = top.lengths
    dist = segment_distances(top.starts[p], top.ends[p], top.starts[q], top.ends[q])
    span = np.maximum(L[p], L[q])
    near = dist < span
    far = dist >= far_ratio * span
    mid = ~near & ~far
    x, w = _gauss(order)
    xf, wf = _gauss(max(2, order // 2))
    xc, wc = _composite(order, near_panels)
    groups = []
    if far.any():
        groups.append(_build_group(top, p[far], q[far], xf, wf, xf, wf))
    if mid.any():
        groups.append(_build_group(top, p[mid], q[mid], x, w, x, w))
    if near.any():
        groups.append(_build_group(top, p[near], q[near], xc, wc, x, w))
    return _Quadrature(groups, n)


def _pair_integrals(quad: _Quadrature, k: float) -> tuple[np.ndarray, ...]:
    n = quad.n_seg
    A = np.empty((n, n), dtype=complex)
    B = np.empty_like(A)
    Cm = np.empty_like(A)
    D = np.empty_like(A)
    for g in quad.groups:
        smooth = np.expm1(-1j * k * g.r_in) / g.r_in
        s0 = np.einsum("pij,pj->pi", smooth, g.w_in)
        s1 = np.einsum("pij,pj->pi", smooth, g.w_in * g.t_in)
        Lq = g.w_in.sum(axis=1)[:, None]
        k0 = g.j0 + s0
        k1 = (g.j1 + s1) / Lq
        a = np.einsum("pi,pi->p", g.w_out, k0)
        b = np.einsum("pi,pi->p", g.w_out * g.x_out, k0)
        c = np.einsum("pi,pi->p", g.w_out, k1)
        d = np.einsum("pi,pi->p", g.w_out * g.x_out, k1)
        A[g.p, g.q] = a
        A[g.q, g.p] = a
        B[g.p, g.q] = b
        B[g.q, g.p] = c
        Cm[g.p, g.q] = c
        Cm[g.q, g.p] = b
        D[g.p, g.q] = d
        D[g.q, g.p] = d
    return A, B, Cm, D


# --- public API --------------------------------------------------------------


@dataclass
class ImpedanceMatrix:
    values: np.ndarray
    f: float
    port: np.ndarray

    @property
    def order(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "ImpedanceMatrix":
        return ImpedanceMatrix(self.values.copy(), self.f, self.port.copy())


@dataclass
class DriveResult:
    f: float
    z_in: complex
    s11: complex
    currents: np.ndarray
    p_in: float
    p_load_loss: float
    condition: float = float("nan")
    z0: float = DEFAULT_Z0

    @property
    def rl_db(self) -> float:
        return float(20 * np.log10(max(abs(self.s11), 1e-300)))


class MoMSolver:
    """Caches topology and quadrature of one mesh; evaluates matrices per frequency."""

    def __init__(self, mesh: SegmentMesh, order: int = 8, conductivity: float | None = None,
                 check: bool = True, f_check: float | None = None):
        if check and f_check is not None:
            report = validate_mesh(mesh, f_check)
            if not report.ok:
                raise SolverError("mesh rejected: " + "; ".join(report.failures()))
        self.mesh = mesh
        self.order = order
        self.conductivity = conductivity
        self.top = build_topology(mesh)
        self.quad = build_quadrature(self.top, order)
        top = self.top
        L = top.lengths
        u = (top.ends - top.starts) / L[:, None]
        self._uu = u @ u.T
        d = np.empty(2 * len(L))
        d[0::2] = 1.0 / L
        d[1::2] = -1.0 / L
        self._div = d

    def matrix(self, f: float) -> np.ndarray:
        if not f > 0:
            raise SolverError("frequency must be positive")
        w = 2 * math.pi * f
        k = w / C0
        A, B, Cm, D = _pair_integrals(self.quad, k)
        n = A.shape[0]
        vec = np.empty((2 * n, 2 * n), dtype=complex)
        vec[0::2, 0::2] = D
        vec[0::2, 1::2] = B - D
        vec[1::2, 0::2] = Cm - D
        vec[1::2, 1::2] = A - B - Cm + D
        uu = np.repeat(np.repeat(self._uu, 2, axis=0), 2, axis=1)
        a_full = np.repeat(np.repeat(A, 2, axis=0), 2, axis=1)
        zslot = (1j * w * MU0 / (4 * math.pi)) * uu * vec \
            + (1.0 / (1j * w * EPS0 * 4 * math.pi)) * np.outer(self._div, self._div) * a_full
        if self.conductivity:
            zslot += self._conductor_loss(w)
        T = self.top.T
        z = self.top.scale * (T.T @ zslot @ T)
        return 0.5 * (z + z.T)

    def _conductor_loss(self, w: float) -> np.ndarray:
        top = self.top
        rs = math.sqrt(w * MU0 / (2 * self.conductivity))
        rp = rs / (2 * math.pi * top.radii) * top.lengths
        n = len(rp)
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        idx = np.arange(n)
        out[2 * idx, 2 * idx] = rp / 3
        out[2 * idx + 1, 2 * idx + 1] = rp / 3
        out[2 * idx, 2 * idx + 1] = rp / 6
        out[2 * idx + 1, 2 * idx] = rp / 6
        return out

    def load_impedances(self, f: float, corner: Corner = NOMINAL,
                        trap_values: tuple[float, ...] | None = None) -> dict[int, complex]:
        out = {}
        for seg, load in self.mesh.loads.items():
            if isinstance(load, TrapSpec):
                if trap_values is not None:
                    # (L1, L2, C) keeps the mesh trap's ESR; (L1, L2, C, R_L, R_C) overrides it
                    l1, l2, c, *esr = trap_values
                    r_ind, r_cap = esr if esr else (load.r_series_ind, load.r_series_cap)
                    z = trap_impedance_values(l1, l2, c, f, r_ind, r_cap)
                else:
                    z = trap_impedance(load, f, corner)
            else:
                z = complex(load)
            out[self.top.load_basis[seg]] = complex(z)
        return out


_SOLVERS: dict[int, tuple[SegmentMesh, MoMSolver]] = {}


def get_solver(mesh: SegmentMesh, **kwargs) -> MoMSolver:
    key = id(mesh)
    hit = _SOLVERS.get(key)
    if hit is not None and hit[0] is mesh and not kwargs:
        return hit[1]
    solver = MoMSolver(mesh, **kwargs)
    if not kwargs:
        if len(_SOLVERS) > 32:
            _SOLVERS.clear()
        _SOLVERS[key] = (mesh, solver)
    return solver


def assemble_impedance_matrix(mesh: SegmentMesh, f: float, order: int = 8) -> ImpedanceMatrix:
    if not f > 0:
        raise SolverError("frequency must be positive")
    report = validate_mesh(mesh, f)
    if not report.ok:
        raise SolverError("mesh rejected: " + "; ".join(report.failures()))
    solver = get_solver(mesh) if order == 8 else MoMSolver(mesh, order=order)
    return ImpedanceMatrix(solver.matrix(f), f, solver.top.port.copy())


def apply_lumped_loads(matrix: ImpedanceMatrix, mesh: SegmentMesh, f: float,
                       corner: Corner = NOMINAL) -> ImpedanceMatrix:
    solver = get_solver(mesh)
    out = matrix.copy()
    for b, z in solver.load_impedances(f, corner).items():
        if out.port[b] != 0:
            raise SolverError("feed and load must be distinct")
        out.values[b, b] += z
    return out


def _solve_stack(z: np.ndarray, port: np.ndarray, v_feed: complex, freqs: np.ndarray,
                 z0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched solve; returns currents (F, N), feed current (F,), condition (F,)."""
    rhs = np.broadcast_to((v_feed * port)[None, :, None], (z.shape[0], z.shape[1], 1))
    zinv = np.linalg.inv(z)
    cond = np.abs(z).sum(axis=1).max(axis=1) * np.abs(zinv).sum(axis=1).max(axis=1)
    bad = ~(cond < MAX_CONDITION)
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        raise NumericalError(
            f"impedance matrix ill-conditioned at {freqs[i] / 1e6:.6g} MHz (cond1 = {cond[i]:.3g})",
            float(freqs[i]), float(cond[i]))
    currents = np.linalg.solve(z, rhs)[..., 0]
    i_feed = currents @ port
    return currents, i_feed, cond


def _result(f, v_feed, currents, i_feed, cond, loads, z0, conductor_loss=0.0) -> DriveResult:
    z_in = complex(v_feed / i_feed)
    s11 = (z_in - z0) / (z_in + z0)
    p_in = 0.5 * float((v_feed * np.conj(i_feed)).real)
    p_load = sum(0.5 * z.real * abs(currents[b]) ** 2 for b, z in loads.items())
    return DriveResult(float(f), z_in, complex(s11), currents, p_in, float(p_load) + conductor_loss,
                       float(cond), z0)


def solve_drive(matrix: ImpedanceMatrix, feed: int | None = None, v_feed: complex = 1.0,
                z0: float = DEFAULT_Z0, loads: dict[int, complex] | None = None) -> DriveResult:
    """Delta-gap solve.  ``feed`` selects a single basis; default is the mesh port."""
    port = matrix.port if feed is None else np.eye(matrix.order)[feed]
    currents, i_feed, cond = _solve_stack(matrix.values[None], port, v_feed, np.array([matrix.f]), z0)
    return _result(matrix.f, v_feed, currents[0], i_feed[0], cond[0], loads or {}, z0)


def _check_grid(grid: Sequence[float]) -> np.ndarray:
    f = np.asarray(grid, dtype=float).reshape(-1)
    if f.size == 0:
        raise SolverError("empty frequency grid")
    if np.any(f <= 0):
        raise SolverError("frequencies must be positive")
    if np.any(np.diff(f) <= 0):
        raise SolverError("frequency grid must be strictly increasing")
    return f


@dataclass
class Sweep:
    freqs: np.ndarray
    results: list[DriveResult]
    label: str = "nominal"
    failures: list[tuple[float, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def z_in(self) -> np.ndarray:
        return np.array([r.z_in for r in self.results])

    @property
    def s11(self) -> np.ndarray:
        return np.array([r.s11 for r in self.results])

    @property
    def rl_db(self) -> np.ndarray:
        return 20 * np.log10(np.maximum(np.abs(self.s11), 1e-300))

    def __len__(self) -> int:
        return len(self.results)

    def __getitem__(self, i: int) -> DriveResult:
        return self.results[i]


class SweepEngine:
    """Unloaded matrices of one mesh on one grid, reused across load values."""

    def __init__(self, mesh: SegmentMesh, grid: Sequence[float], threads: int = 1,
                 z0: float = DEFAULT_Z0, conductivity: float | None = None):
        self.mesh = mesh
        self.freqs = _check_grid(grid)
        report = validate_mesh(mesh, float(self.freqs[-1]))
        if not report.ok:
            raise SolverError("mesh rejected: " + "; ".join(report.failures()))
        self.solver = get_solver(mesh) if conductivity is None else MoMSolver(mesh, conductivity=conductivity)
        self.z0 = z0
        self.threads = max(1, int(threads))
        self.failures: list[tuple[float, str]] = []
        self.matrices = self._assemble()

    def _assemble(self) -> np.ndarray:
        n = self.solver.top.n_basis
        out = np.empty((len(self.freqs), n, n), dtype=complex)

        def work(i: int) -> None:
            out[i] = self.solver.matrix(float(self.freqs[i]))

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(work, range(len(self.freqs))))
        else:
            for i in range(len(self.freqs)):
                work(i)
        return out

    def run(self, corner: Corner = NOMINAL, trap_values: tuple[float, ...] | None = None,
            v_feed: complex = 1.0, label: str | None = None) -> Sweep:
        z = self.matrices.copy()
        loads = [self.solver.load_impedances(float(f), corner, trap_values) for f in self.freqs]
        for i, ld in enumerate(loads):
            for b, zl in ld.items():
                z[i, b, b] += zl
        port = self.solver.top.port
        results: list[DriveResult | None] = [None] * len(self.freqs)
        failures: list[tuple[float, str]] = []
        ok = np.ones(len(self.freqs), dtype=bool)
        try:
            currents, i_feed, cond = _solve_stack(z, port, v_feed, self.freqs, self.z0)
        except NumericalError:
            # fall back to per-point solves so a single bad point is reported, not fatal
            currents = np.zeros((len(self.freqs), z.shape[1]), dtype=complex)
            i_feed = np.zeros(len(self.freqs), dtype=complex)
            cond = np.zeros(len(self.freqs))
            for i in range(len(self.freqs)):
                try:
                    c, fi, cd = _solve_stack(z[i:i + 1], port, v_feed, self.freqs[i:i + 1], self.z0)
                    currents[i], i_feed[i], cond[i] = c[0], fi[0], cd[0]
                except NumericalError as exc:
                    ok[i] = False
                    failures.append((float(self.freqs[i]), str(exc)))
        loss = [self.conductor_loss(currents[i], float(f)) for i, f in enumerate(self.freqs)]
        for i, f in enumerate(self.freqs):
            if ok[i]:
                results[i] = _result(f, v_feed, currents[i], i_feed[i], cond[i], loads[i], self.z0, loss[i])
        if label is None:
            label = corner.label if trap_values is None else "sample"
        kept = [r for r in results if r is not None]
        freqs = np.array([r.f for r in kept])
        return Sweep(freqs, kept, label, failures)

    def conductor_loss(self, currents: np.ndarray, f: float) -> float:
        if not self.solver.conductivity:
            return 0.0
        zl = self.solver._conductor_loss(2 * math.pi * f)
        slots = self.solver.top.T @ currents
        return float(self.solver.top.scale * 0.5 * np.real(np.conj(slots) @ zl @ slots))


def frequency_sweep(mesh: SegmentMesh, grid: Sequence[float], corner: Corner = NOMINAL,
                    threads: int = 1, z0: float = DEFAULT_Z0) -> Sweep:
    return SweepEngine(mesh, grid, threads, z0).run(corner)


def solve_at(mesh: SegmentMesh, f: float, corner: Corner = NOMINAL, z0: float = DEFAULT_Z0,
             v_feed: complex = 1.0, conductivity: float | None = None) -> DriveResult:
    """Single-frequency solve with loads applied (no mesh-size check beyond validity at f)."""
    return SweepEngine(mesh, [f], 1, z0, conductivity).run(corner, v_feed=v_feed).results[0]


# --- post-processing -----------------------------------------------------------


@dataclass(frozen=True)
class Resonance:
    f_dip: float
    rl_db: float
    bandwidth: float
    f_lo: float
    f_hi: float
    truncated: bool = False


def find_resonances(freqs: Sequence[float], rl_db: Sequence[float], threshold_db: float = -10.0) -> list[Resonance]:
    """Interior local minima of the S11 curve that reach ``threshold_db`` or below.

    The dip is refined with a parabola through the three nearest samples.  The
    bandwidth is the span around the dip where the curve stays at or below the
    threshold, with linearly interpolated edges; two dips sharing one span are
    split at the highest sample between them.
    """
    f = np.asarray(freqs, dtype=float)
    y = np.asarray(rl_db, dtype=float)
    if f.size == 0:
        raise SolverError("empty sweep")
    if np.any(np.diff(f) <= 0):
        raise SolverError("sweep must be strictly increasing in frequency")
    minima = []
    i = 1
    while i < len(y) - 1:
        if y[i] < y[i - 1]:
            j = i
            while j + 1 < len(y) and y[j + 1] == y[i]:
                j += 1
            if j + 1 < len(y) and y[j + 1] > y[i] and y[i] <= threshold_db:
                minima.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    out = []
    for n, m in enumerate(minima):
        x0, x1, x2 = f[m - 1], f[m], f[m + 1]
        y0, y1, y2 = y[m - 1], y[m], y[m + 1]
        den = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
        b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den
        if a > 0:
            fd = -b / (2 * a)
            fd = min(max(fd, x0), x2)
            c = y1 - a * x1 * x1 - b * x1
            yd = a * fd * fd + b * fd + c
        else:
            fd, yd = x1, y1
        lo_lim = minima[n - 1] if n > 0 else 0
        hi_lim = minima[n + 1] if n + 1 < len(minima) else len(y) - 1
        lo_bound = lo_lim + int(np.argmax(y[lo_lim:m + 1])) if n > 0 else 0
        hi_bound = m + int(np.argmax(y[m:hi_lim + 1])) if n + 1 < len(minima) else len(y) - 1
        lo = m
        while lo > lo_bound and y[lo - 1] <= threshold_db:
            lo -= 1
        hi = m
        while hi < hi_bound and y[hi + 1] <= threshold_db:
            hi += 1
        truncated = False
        if lo > 0 and y[lo - 1] > threshold_db:
            f_lo = f[lo - 1] + (threshold_db - y[lo - 1]) * (f[lo] - f[lo - 1]) / (y[lo] - y[lo - 1])
        else:
            f_lo = f[lo]
            truncated = lo == 0
        if hi < len(y) - 1 and y[hi + 1] > threshold_db:
            f_hi = f[hi] + (threshold_db - y[hi]) * (f[hi + 1] - f[hi]) / (y[hi + 1] - y[hi])
        else:
            f_hi = f[hi]
            truncated = truncated or hi == len(y) - 1
        out.append(Resonance(float(fd), float(yd), float(f_hi - f_lo), float(f_lo), float(f_hi), truncated))
    return out


def sweep_resonances(sweep: Sweep, threshold_db: float = -10.0) -> list[Resonance]:
    return find_resonances(sweep.freqs, sweep.rl_db, threshold_db)


def segment_end_currents(mesh: SegmentMesh, currents: np.ndarray) -> np.ndarray:
    """(n_seg, 2) complex current at each segment's start and end, along the segment."""
    top = get_solver(mesh).top
    if currents.shape != (top.n_basis,):
        raise SolverError("currents do not belong to this mesh")
    slots = top.T @ currents
    n = top.n_real
    rise = slots[0:2 * n:2]
    fall = slots[1:2 * n:2]
    return np.stack([fall, rise], axis=1)


def current_distribution(result: DriveResult, mesh: SegmentMesh) -> np.ndarray:
    """|I| at each segment midpoint (amperes)."""
    ends = segment_end_currents(mesh, result.currents)
    return np.abs(ends.mean(axis=1))


def trap_sides(mesh: SegmentMesh) -> tuple[list[int], list[int]]:
    """Split segments at the trap node into (feed side, far side)."""
    traps = mesh.trap_segments()
    if len(traps) != 1:
        raise SolverError(f"expected exactly one trap load, found {len(traps)}")
    return split_at_load(mesh, traps[0])


def split_at_load(mesh: SegmentMesh, load_seg: int) -> tuple[list[int], list[int]]:
    n = len(mesh)
    ids = node_ids(np.vstack([mesh.starts, mesh.ends]))
    s_id, e_id = ids[:n], ids[n:]
    cut = int(s_id[load_seg])
    parent = list(range(int(ids.max()) + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    # join segments through every node except the cut node
    node_owner: dict[int, int] = {}
    seg_parent = list(range(n))

    def sfind(x: int) -> int:
        while seg_parent[x] != x:
            seg_parent[x] = seg_parent[seg_parent[x]]
            x = seg_parent[x]
        return x

    for seg in range(n):
        for node in (int(s_id[seg]), int(e_id[seg])):
            if node == cut:
                continue
            if node in node_owner:
                seg_parent[sfind(seg)] = sfind(node_owner[node])
            else:
                node_owner[node] = seg
    feed_root = sfind(mesh.feed_segment)
    near = [i for i in range(n) if sfind(i) == feed_root]
    far = [i for i in range(n) if sfind(i) != feed_root]
    return near, far


def isolation_from_result(mesh: SegmentMesh, result: DriveResult, load_seg: int | None = None) -> float:
    if load_seg is None:
        near, far = trap_sides(mesh)
    else:
        near, far = split_at_load(mesh, load_seg)
    if not far:
        raise SolverError("nothing beyond the trap")
    mag = np.abs(segment_end_currents(mesh, result.currents))
    i_near = mag[near].max()
    i_far = mag[far].max()
    return float(20 * np.log10(i_near / max(i_far, 1e-300)))


def trap_isolation(mesh: SegmentMesh, f: float, corner: Corner = NOMINAL) -> float:
    """20 log10 of peak current on the feed side of the trap over the far side."""
    trap_sides(mesh)
    result = solve_at(mesh, f, corner)
    return isolation_from_result(mesh, result)
