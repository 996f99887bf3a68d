"""Lumped model of the parallel-LC trap.

A trap is one capacitor in parallel with a pair of paralleled inductors.
Everything here is a closed-form, side-effect free function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Magnitude used for the ideal trap exactly at resonance.
OPEN_CIRCUIT_OHMS = 1e9

E24: tuple[float, ...] = (
    1.0, 1.1, 1.2, 1.3, 1.5, 1.6, 1.8, 2.0, 2.2, 2.4, 2.7, 3.0,
    3.3, 3.6, 3.9, 4.3, 4.7, 5.1, 5.6, 6.2, 6.8, 7.5, 8.2, 9.1,
)


class CircuitError(ValueError):
    """Invalid component value or unrealizable trap."""


class SynthesisError(CircuitError):
    """No catalog part satisfies the requested trap."""


@dataclass(frozen=True)
class ComponentValue:
    """A nominal value with either an absolute or a relative tolerance."""

    nominal: float
    tol_abs: float = 0.0
    tol_rel: float = 0.0

    def __post_init__(self) -> None:
        if not (self.nominal > 0 and math.isfinite(self.nominal)):
            raise CircuitError(f"nominal value must be positive, got {self.nominal!r}")
        if self.tol_abs < 0 or self.tol_rel < 0:
            raise CircuitError("tolerances must be non-negative")
        if self.tol_abs > 0 and self.tol_rel > 0:
            raise CircuitError("give either an absolute or a relative tolerance, not both")

    @property
    def half_width(self) -> float:
        return self.tol_abs + self.tol_rel * self.nominal

    @property
    def lower(self) -> float:
        return self.nominal - self.half_width

    @property
    def upper(self) -> float:
        return self.nominal + self.half_width

    def at(self, sign: float) -> float:
        """Value shifted by ``sign`` half-widths (``sign`` in [-1, 1])."""
        return self.nominal + sign * self.half_width

    def scaled_tolerance(self, factor: float) -> "ComponentValue":
        return ComponentValue(self.nominal, self.tol_abs * factor, self.tol_rel * factor)


@dataclass(frozen=True)
class Corner:
    """Sign of the tolerance deviation applied to the inductors and the capacitor.

    Both inductors move together.
    """

    delta_L: int = 0
    delta_C: int = 0

    def __post_init__(self) -> None:
        if self.delta_L not in (-1, 0, 1) or self.delta_C not in (-1, 0, 1):
            raise CircuitError("corner deltas must be -1, 0 or +1")

    @property
    def label(self) -> str:
        if self.delta_L == 0 and self.delta_C == 0:
            return "nominal"
        sym = {-1: "-", 0: "0", 1: "+"}
        return f"L{sym[self.delta_L]}C{sym[self.delta_C]}"

    @classmethod
    def parse(cls, text: str) -> "Corner":
        text = text.strip()
        if text == "nominal":
            return cls(0, 0)
        sym = {"-": -1, "0": 0, "+": 1}
        if len(text) == 4 and text[0] == "L" and text[2] == "C" and text[1] in sym and text[3] in sym:
            return cls(sym[text[1]], sym[text[3]])
        raise CircuitError(f"unrecognised corner {text!r} (expected e.g. 'nominal', 'L+C-')")


NOMINAL = Corner(0, 0)
EXTREME_CORNERS: tuple[Corner, ...] = (Corner(1, 1), Corner(1, -1), Corner(-1, 1), Corner(-1, -1))
CANONICAL_CORNERS: tuple[Corner, ...] = (NOMINAL,) + EXTREME_CORNERS


@dataclass(frozen=True)
class TrapSpec:
    cap: ComponentValue
    ind1: ComponentValue
    ind2: ComponentValue
    r_series_ind: float = 0.0
    r_series_cap: float = 0.0

    def __post_init__(self) -> None:
        if self.r_series_ind < 0 or self.r_series_cap < 0:
            raise CircuitError("series resistances must be non-negative")

    def values(self, corner: Corner = NOMINAL) -> tuple[float, float, float]:
        """(L1, L2, C) shifted to ``corner``."""
        return (
            self.ind1.at(corner.delta_L),
            self.ind2.at(corner.delta_L),
            self.cap.at(corner.delta_C),
        )

    @property
    def l_eff(self) -> float:
        return parallel_inductance(self.ind1.nominal, self.ind2.nominal)

    def with_tolerance_scale(self, factor: float) -> "TrapSpec":
        return TrapSpec(
            self.cap.scaled_tolerance(factor),
            self.ind1.scaled_tolerance(factor),
            self.ind2.scaled_tolerance(factor),
            self.r_series_ind,
            self.r_series_cap,
        )

    def with_q(self, q: float, f: float) -> "TrapSpec":
        """Same trap with inductor ESR set for an unloaded Q of ``q`` at ``f``."""
        r = 2 * math.pi * f * self.ind1.nominal / q
        return TrapSpec(self.cap, self.ind1, self.ind2, r, self.r_series_cap)


def reference_trap() -> TrapSpec:
    """9.1 pF +/-0.05 pF with 2 x 6.8 nH +/-2 %."""
    return TrapSpec(
        cap=ComponentValue(9.1e-12, tol_abs=0.05e-12),
        ind1=ComponentValue(6.8e-9, tol_rel=0.02),
        ind2=ComponentValue(6.8e-9, tol_rel=0.02),
    )


def parallel_inductance(l1: float, l2: float) -> float:
    if not (l1 > 0 and l2 > 0):
        raise CircuitError(f"inductances must be positive, got {l1!r}, {l2!r}")
    return l1 * l2 / (l1 + l2)


def resonance_from_values(l_eff: float, c: float) -> float:
    return 1.0 / (2 * math.pi * math.sqrt(l_eff * c))


def trap_resonance(spec: TrapSpec, corner: Corner = NOMINAL) -> float:
    l1, l2, c = spec.values(corner)
    return resonance_from_values(parallel_inductance(l1, l2), c)


def trap_impedance_values(l1: float, l2: float, c: float, f, r_ind: float = 0.0, r_cap: float = 0.0):
    """Impedance of (L1 || L2) || C at ``f`` (scalar or array) for explicit values."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise CircuitError("frequency must be positive")
    w = 2 * np.pi * f
    # Each inductor carries its own ESR; the pair is combined as impedances.
    z1 = r_ind + 1j * w * l1
    z2 = r_ind + 1j * w * l2
    zl = z1 * z2 / (z1 + z2)
    if r_ind == 0.0 and r_cap == 0.0:
        # Closed form keeps the ideal result purely imaginary.
        l_eff = l1 * l2 / (l1 + l2)
        den = 1.0 - w * w * l_eff * c
        with np.errstate(divide="ignore", invalid="ignore"):
            x = w * l_eff / den
        x = np.where(den == 0.0, OPEN_CIRCUIT_OHMS, x)
        x = np.clip(x, -OPEN_CIRCUIT_OHMS, OPEN_CIRCUIT_OHMS)
        z = 1j * x
    else:
        zc = r_cap + 1.0 / (1j * w * c)
        z = zl * zc / (zl + zc)
    z = np.asarray(z, dtype=complex)
    return complex(z) if z.ndim == 0 else z


def trap_impedance(spec: TrapSpec, f, corner: Corner = NOMINAL):
    """Impedance of the trap at ``f`` with values shifted to ``corner``.

    Exactly at resonance an ideal trap returns the open-circuit sentinel
    ``1j * OPEN_CIRCUIT_OHMS`` instead of dividing by zero.
    """
    l1, l2, c = spec.values(corner)
    return trap_impedance_values(l1, l2, c, f, spec.r_series_ind, spec.r_series_cap)


def resonance_sensitivity(spec: TrapSpec) -> tuple[float, float, float]:
    """Return (d ln f0 / d ln L, d ln f0 / d ln C, worst fractional corner shift).

    The worst shift is the first-order magnitude; the extreme corners move f0
    by roughly plus or minus this fraction.
    """
    rel_l = spec.ind1.half_width / spec.ind1.nominal
    rel_c = spec.cap.half_width / spec.cap.nominal
    return -0.5, -0.5, 0.5 * (rel_l + rel_c)


def series_element_sparams(z, z0: float = 50.0):
    """(S11, S21) of an impedance in series between two ``z0`` ports."""
    if not z0 > 0:
        raise CircuitError("reference impedance must be positive")
    z = np.asarray(z, dtype=complex)
    den = 2 * z0 + z
    s11 = z / den
    s21 = 2 * z0 / den
    if s11.ndim == 0:
        return complex(s11), complex(s21)
    return s11, s21


@dataclass
class TrapSweep:
    freqs: np.ndarray
    corners: tuple[Corner, ...]
    s21: np.ndarray  # (n_corner, n_freq)
    s11: np.ndarray

    def min_location(self, corner_index: int) -> float:
        return float(self.freqs[int(np.argmin(np.abs(self.s21[corner_index])))])


def _check_grid(grid: Sequence[float]) -> np.ndarray:
    f = np.asarray(grid, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise CircuitError("frequency grid is empty")
    if np.any(f <= 0):
        raise CircuitError("frequencies must be positive")
    if f.size > 1 and np.any(np.diff(f) <= 0):
        raise CircuitError("frequency grid must be strictly increasing")
    return f


def trap_s21_sweep(
    spec: TrapSpec,
    grid: Sequence[float],
    corners: Iterable[Corner] = CANONICAL_CORNERS,
    z0: float = 50.0,
) -> TrapSweep:
    f = _check_grid(grid)
    corners = tuple(corners)
    s11 = np.empty((len(corners), f.size), dtype=complex)
    s21 = np.empty_like(s11)
    for i, corner in enumerate(corners):
        z = np.atleast_1d(trap_impedance(spec, f, corner))
        s11[i], s21[i] = series_element_sparams(z, z0)
    return TrapSweep(f, corners, s21, s11)


# --- component selection -------------------------------------------------


@dataclass(frozen=True)
class CapacitorOption:
    """A capacitor value offered with an absolute tolerance up to ``max_tight_value``."""

    value: float
    tol_abs: float
    max_tight_value: float


@dataclass(frozen=True)
class InductorCatalog:
    values: tuple[float, ...]
    tol_rel: float = 0.02

    @classmethod
    def e_series(cls, lo: float = 1e-9, hi: float = 100e-9, series: Sequence[float] = E24,
                 tol_rel: float = 0.02) -> "InductorCatalog":
        out = []
        exp = math.floor(math.log10(lo) + 1e-9)
        while 10.0 ** exp <= hi * (1 + 1e-9):
            for v in series:
                x = float(f"{v}e{exp}")
                if lo * (1 - 1e-9) <= x <= hi * (1 + 1e-9):
                    out.append(x)
            exp += 1
        return cls(tuple(sorted(set(out))), tol_rel)


def default_capacitor_catalog() -> list[CapacitorOption]:
    """E24 capacitors 1-100 pF; the +/-0.05 pF class stops at 9.1 pF."""
    caps = InductorCatalog.e_series(1e-12, 100e-12).values
    return [CapacitorOption(v, 0.05e-12, 9.1e-12) for v in caps]


def default_inductor_catalog() -> InductorCatalog:
    return InductorCatalog.e_series(1e-9, 100e-9, tol_rel=0.02)


def snap_log_nearest(x: float, catalog: Sequence[float]) -> float:
    """Nearest catalog value in log distance; ties go to the larger value."""
    if not catalog:
        raise SynthesisError("empty catalog")
    best = None
    best_d = math.inf
    lx = math.log(x)
    for v in sorted(catalog):
        d = abs(math.log(v) - lx)
        if d < best_d - 1e-12 or (abs(d - best_d) <= 1e-12 and best is not None and v > best):
            best, best_d = v, d
    return best


def select_trap_components(
    target_f0: float,
    cap_catalog: Sequence[CapacitorOption],
    ind_catalog: InductorCatalog,
) -> TrapSpec:
    """Pick the largest tight-tolerance capacitor, then two equal E-series inductors.

    The capacitor is chosen as large as the tight (absolute) tolerance class
    allows so that the fixed absolute tolerance is the smallest possible
    fraction of the value.
    """
    if not target_f0 > 0:
        raise SynthesisError("target frequency must be positive")
    tight = [c for c in cap_catalog if c.value <= c.max_tight_value * (1 + 1e-9)]
    if not tight:
        raise SynthesisError("capacitor catalog has no value in the tight-tolerance class")
    cap = max(tight, key=lambda c: c.value)
    l_eff = 1.0 / ((2 * math.pi * target_f0) ** 2 * cap.value)
    per_ind = 2 * l_eff
    values = ind_catalog.values
    if not values:
        raise SynthesisError("inductor catalog is empty")
    lo, hi = min(values), max(values)
    # Allow snapping to an edge value only when it is within half a catalog step.
    if per_ind < lo / 1.05 or per_ind > hi * 1.05:
        raise SynthesisError(
            f"required inductor {per_ind * 1e9:.4g} nH lies outside catalog range "
            f"{lo * 1e9:.4g}-{hi * 1e9:.4g} nH"
        )
    ind = snap_log_nearest(per_ind, values)
    comp_l = ComponentValue(ind, tol_rel=ind_catalog.tol_rel)
    return TrapSpec(
        cap=ComponentValue(cap.value, tol_abs=cap.tol_abs),
        ind1=comp_l,
        ind2=comp_l,
    )


def required_inductance(target_f0: float, c: float) -> float:
    """Effective inductance that resonates ``c`` at ``target_f0``."""
    return 1.0 / ((2 * math.pi * target_f0) ** 2 * c)


def parse_catalog(text: str) -> list[tuple[float, str, str]]:
    """Parse ``value,unit,tolerance`` lines; blank lines and ``#`` comments are skipped."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise CircuitError(f"catalog line {lineno}: expected 'value,unit,tolerance'")
        try:
            value = float(parts[0])
        except ValueError:
            raise CircuitError(f"catalog line {lineno}: bad value {parts[0]!r}") from None
        rows.append((value, parts[1], parts[2]))
    return rows


_UNIT = {"pf": 1e-12, "nf": 1e-9, "uf": 1e-6, "nh": 1e-9, "uh": 1e-6, "ph": 1e-12, "f": 1.0, "h": 1.0}


def catalogs_from_text(cap_text: str, ind_text: str) -> tuple[list[CapacitorOption], InductorCatalog]:
    """Build catalogs from the plain-text format.

    Capacitor tolerances are absolute (``0.05pF``) or relative (``5%``); only
    absolute-tolerance rows belong to the tight class.  Inductor tolerances
    must be relative.
    """
    caps = []
    for value, unit, tol in parse_catalog(cap_text):
        scale = _UNIT.get(unit.lower())
        if scale is None or not unit.lower().endswith("f"):
            raise CircuitError(f"unknown capacitor unit {unit!r}")
        v = value * scale
        tol = tol.lower().replace(" ", "")
        if tol.endswith("%"):
            continue
        m = next((u for u in sorted(_UNIT, key=len, reverse=True) if tol.endswith(u)), None)
        tol_abs = float(tol[: -len(m)]) * _UNIT[m] if m else float(tol) * scale
        caps.append(CapacitorOption(v, tol_abs, v))
    inds = []
    tol_rel = None
    for value, unit, tol in parse_catalog(ind_text):
        scale = _UNIT.get(unit.lower())
        if scale is None or not unit.lower().endswith("h"):
            raise CircuitError(f"unknown inductor unit {unit!r}")
        if not tol.strip().endswith("%"):
            raise CircuitError("inductor tolerance must be relative, e.g. '2%'")
        t = float(tol.strip()[:-1]) / 100
        if tol_rel is not None and t != tol_rel:
            raise CircuitError("mixed inductor tolerance classes are not supported")
        tol_rel = t
        inds.append(value * scale)
    return caps, InductorCatalog(tuple(sorted(inds)), tol_rel if tol_rel is not None else 0.02)
