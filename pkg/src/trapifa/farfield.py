"""Far-zone fields, radiated power, directivity and efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C0, mu_0 as MU0

from .geometry import SegmentMesh
from .solver import ETA0, DriveResult, SolverError, get_solver

POWER_BALANCE_TOL = 0.02


class FarFieldError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n_theta: int = 37
    n_phi: int = 72


@dataclass
class FarFieldGrid:
    """Fields at 1 m (phase reference at the origin) on a theta x phi grid.

    ``theta_weights`` integrate f(theta) sin(theta) d(theta).
    """

    f: float
    theta: np.ndarray
    phi: np.ndarray
    theta_weights: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray
    U: np.ndarray

    @property
    def phi_weight(self) -> float:
        return 2 * math.pi / len(self.phi)

    def scaled(self, alpha: complex) -> "FarFieldGrid":
        a = abs(alpha) ** 2
        return FarFieldGrid(self.f, self.theta, self.phi, self.theta_weights,
                            self.e_theta * alpha, self.e_phi * alpha, self.U * a)


def theta_nodes(n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes in cos(theta), one panel per hemisphere."""
    n = max(1, math.ceil(n_theta / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    upper = 0.5 * (x + 1)  # cos(theta) in (0, 1)
    cos_t = np.concatenate([upper[::-1], -upper])
    weights = np.concatenate([0.5 * w[::-1], 0.5 * w])
    return np.arccos(cos_t), weights


def phi_nodes(n_phi: int) -> np.ndarray:
    return 2 * math.pi * np.arange(n_phi) / n_phi


def _f0_f1(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """int_0^1 exp(jxt) dt and int_0^1 t exp(jxt) dt."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.1
    xs = np.where(small, 1.0, x)
    e = np.exp(1j * xs)
    f0 = (e - 1) / (1j * xs)
    f1 = e * (1 / (1j * xs) + 1 / xs ** 2) - 1 / xs ** 2
    if small.any():
        xx = x[small]
        s0 = np.zeros_like(xx, dtype=complex)
        s1 = np.zeros_like(xx, dtype=complex)
        term = np.ones_like(xx, dtype=complex)
        for n in range(10):
            if n:
                term = term * (1j * xx) / n
            s0 += term / (n + 1)
            s1 += term / (n + 2)
        f0 = np.where(small, 0, f0)
        f1 = np.where(small, 0, f1)
        f0[small] = s0
        f1[small] = s1
    return f0, f1


def directions(theta: np.ndarray, phi: np.ndarray):
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    r_hat = np.stack([st * cp, st * sp, ct], axis=-1)
    t_hat = np.stack([ct * cp, ct * sp, -st], axis=-1)
    p_hat = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return th, r_hat, t_hat, p_hat


def radiation_vector(mesh: SegmentMesh, currents: np.ndarray, f: float, r_hat: np.ndarray) -> np.ndarray:
    """Sum over segments (and images) of int I(s) u exp(+jk r_hat . r') ds."""
    top = get_solver(mesh).top
    if currents.shape != (top.n_basis,):
        raise FarFieldError("currents do not belong to this mesh")
    k = 2 * math.pi * f / C0
    slots = top.T @ currents
    c_rise = slots[0::2]
    c_fall = slots[1::2]
    L = top.lengths
    u = (top.ends - top.starts) / L[:, None]
    flat = r_hat.reshape(-1, 3)
    out = np.zeros((len(flat), 3), dtype=complex)
    for p in range(len(L)):
        if c_rise[p] == 0 and c_fall[p] == 0:
            continue
        phase = np.exp(1j * k * flat @ top.starts[p])
        f0, f1 = _f0_f1(k * L[p] * (flat @ u[p]))
        amp = L[p] * phase * (c_fall[p] * (f0 - f1) + c_rise[p] * f1)
        out += amp[:, None] * u[p][None, :]
    return out.reshape(r_hat.shape)


def radiate(mesh: SegmentMesh, currents, f: float, grid: GridSpec = GridSpec()) -> FarFieldGrid:
    if isinstance(currents, DriveResult):
        if currents.f != f:
            raise FarFieldError("drive result frequency does not match")
        currents = currents.currents
    currents = np.asarray(currents, dtype=complex)
    if not f > 0:
        raise FarFieldError("frequency must be positive")
    theta, w_theta = theta_nodes(grid.n_theta)
    phi = phi_nodes(grid.n_phi)
    th, r_hat, t_hat, p_hat = directions(theta, phi)
    try:
        n_vec = radiation_vector(mesh, currents, f, r_hat)
    except SolverError as exc:
        raise FarFieldError(str(exc)) from exc
    coef = -1j * 2 * math.pi * f * MU0 / (4 * math.pi)
    e_t = coef * np.einsum("ijk,ijk->ij", n_vec, t_hat)
    e_p = coef * np.einsum("ijk,ijk->ij", n_vec, p_hat)
    if mesh.ground_mode == "infinite-image":
        below = th > math.pi / 2
        e_t[below] = 0
        e_p[below] = 0
    U = (np.abs(e_t) ** 2 + np.abs(e_p) ** 2) / (2 * ETA0)
    return FarFieldGrid(f, theta, phi, w_theta, e_t, e_p, U)


def grid_from_intensity(U_func, grid: GridSpec = GridSpec(), f: float = 1.0) -> FarFieldGrid:
    """Grid holding a prescribed intensity U(theta, phi); fields left at zero."""
    theta, w = theta_nodes(grid.n_theta)
    phi = phi_nodes(grid.n_phi)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    U = np.broadcast_to(np.asarray(U_func(th, ph), dtype=float), th.shape).copy()
    zeros = np.zeros_like(U, dtype=complex)
    return FarFieldGrid(f, theta, phi, w, zeros, zeros.copy(), U)


def radiated_power(grid: FarFieldGrid) -> float:
    """Integral of U over the sphere."""
    if abs(grid.theta_weights.sum() - 2.0) > 1e-9:
        raise FarFieldError("theta samples do not cover [0, pi]")
    n_phi = len(grid.phi)
    expected = 2 * math.pi * np.arange(n_phi) / n_phi
    if n_phi < 1 or not np.allclose(grid.phi, expected, atol=1e-12):
        raise FarFieldError("phi samples do not cover [0, 2 pi) uniformly")
    return float(grid.phi_weight * np.sum(grid.theta_weights[:, None] * grid.U))


@dataclass
class GainSummary:
    D: np.ndarray
    G: np.ndarray
    efficiency: float
    max_D: float
    max_G: float
    p_rad: float
    p_in: float

    @property
    def max_D_dbi(self) -> float:
        return 10 * math.log10(self.max_D)

    @property
    def max_G_dbi(self) -> float:
        return 10 * math.log10(self.max_G)

    @property
    def efficiency_db(self) -> float:
        return 10 * math.log10(self.efficiency)


def directivity_gain(grid: FarFieldGrid, p_in: float, p_rad: float | None = None) -> GainSummary:
    if p_rad is None:
        p_rad = radiated_power(grid)
    if not p_rad > 0:
        raise FarFieldError("radiated power must be positive")
    if p_rad > p_in * (1 + POWER_BALANCE_TOL):
        raise FarFieldError(
            f"power balance violated: radiated {p_rad:.6g} W exceeds input {p_in:.6g} W by more than 2 %")
    D = 4 * math.pi * grid.U / p_rad
    eff = min(p_rad / p_in, 1.0)
    G = eff * D
    return GainSummary(D, G, eff, float(D.max()), float(G.max()), p_rad, p_in)


def azimuth_cut(mesh: SegmentMesh, currents: np.ndarray, f: float, theta: float = math.pi / 2,
                n_phi: int = 72) -> np.ndarray:
    """U(theta, phi) along one cone, evaluated directly."""
    phi = phi_nodes(n_phi)
    th, r_hat, t_hat, p_hat = directions(np.array([theta]), phi)
    n_vec = radiation_vector(mesh, currents, f, r_hat)
    coef = 2 * math.pi * f * MU0 / (4 * math.pi)
    e_t = coef * np.einsum("ijk,ijk->ij", n_vec, t_hat)
    e_p = coef * np.einsum("ijk,ijk->ij", n_vec, p_hat)
    return ((np.abs(e_t) ** 2 + np.abs(e_p) ** 2) / (2 * ETA0))[0]


def azimuth_spread_db(mesh: SegmentMesh, currents: np.ndarray, f: float, theta: float = math.pi / 2) -> float:
    u = azimuth_cut(mesh, currents, f, theta)
    return float(10 * math.log10(u.max() / max(u.min(), 1e-300)))


@dataclass
class PatternSummary:
    f: float
    z_in: complex
    p_in: float
    p_rad: float
    p_load_loss: float
    efficiency: float
    max_directivity_dbi: float
    max_gain_dbi: float
    azimuth_spread_db: float

    @property
    def efficiency_db(self) -> float:
        return 10 * math.log10(self.efficiency)

    @property
    def power_balance_error(self) -> float:
        """Relative mismatch between input power and radiated plus dissipated power."""
        return abs(self.p_in - self.p_rad - self.p_load_loss) / self.p_in


def pattern_summary(mesh: SegmentMesh, result: DriveResult, grid: GridSpec = GridSpec()) -> tuple[FarFieldGrid, PatternSummary]:
    ff = radiate(mesh, result.currents, result.f, grid)
    p_rad = radiated_power(ff)
    gains = directivity_gain(ff, result.p_in, p_rad)
    spread = azimuth_spread_db(mesh, result.currents, result.f)
    return ff, PatternSummary(result.f, result.z_in, result.p_in, p_rad, result.p_load_loss,
                              gains.efficiency, gains.max_D_dbi, gains.max_G_dbi, spread)
