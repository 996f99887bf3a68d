"""INI run configuration.

Units at this boundary are mm, MHz, pF, nH, ohm and dB.  Everything is
converted to SI once, here.  Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import ComponentValue, TrapSpec
from .geometry import AntennaParams, GroundSpec, MeshError, SubstrateSpec
from .tolerance import BandSpec, DISTRIBUTIONS, ToleranceError

MM, MHZ, PF, NH = 1e-3, 1e6, 1e-12, 1e-9


class ConfigError(ValueError):
    pass


_GEOMETRY = {
    "config": str, "footprint_length_mm": float, "footprint_height_mm": float, "trace_width_mm": float,
    "feed_width_mm": float, "conductor_thickness_mm": float, "short_pin_offset_mm": float,
    "trap_position_fraction": float, "extension_length_mm": float, "branch_gap_mm": float,
    "length_scale": float, "eps_r": float, "loss_tan": float, "strip_width_mm": float,
    "board_thickness_mm": float, "ground_model": str, "ground_size_x_mm": float,
    "ground_size_y_mm": float, "ground_thickness_mm": float, "ground_pitch_fraction": float,
    "max_seg_fraction": float, "f_max_mhz": float,
}
_TRAP = {
    "cap_pf": float, "cap_tol_pf": float, "cap_tol_pct": float, "ind1_nh": float, "ind2_nh": float,
    "ind_tol_pct": float, "ind_tol_nh": float, "r_series_ind_ohm": float, "r_series_cap_ohm": float,
    "inductor_q": float, "q_freq_mhz": float, "tolerance_scale": float, "target_f0_mhz": float,
    "cap_catalog": str, "ind_catalog": str,
}
_SWEEP = {"f_lo_mhz": float, "f_hi_mhz": float, "step_mhz": float, "z0_ohm": float}
_ANALYSIS = {
    "threshold_db": float, "mc_samples": int, "seed": int, "distribution": str, "pattern_f_mhz": float,
    "pattern_n_theta": int, "pattern_n_phi": int, "conductivity_s_per_m": float,
}
_OUTPUT = {"prefix": str, "formats": str}
_SECTIONS = {"geometry": _GEOMETRY, "trap": _TRAP, "sweep": _SWEEP, "bands": None,
             "analysis": _ANALYSIS, "output": _OUTPUT}


@dataclass
class SweepConfig:
    f_lo: float = 840e6
    f_hi: float = 950e6
    step: float = 0.25e6
    z0: float = 50.0

    def grid(self) -> np.ndarray:
        n = int(round((self.f_hi - self.f_lo) / self.step))
        g = self.f_lo + self.step * np.arange(n + 1)
        return g[g <= self.f_hi * (1 + 1e-12)]


@dataclass
class AnalysisConfig:
    threshold_db: float = -10.0
    mc_samples: int = 200
    seed: int = 0
    distribution: str = "uniform"
    pattern_f: float | None = None
    pattern_n_theta: int = 37
    pattern_n_phi: int = 72
    conductivity: float | None = None


@dataclass
class OutputConfig:
    prefix: str = "run"
    formats: tuple[str, ...] = ("csv", "s1p")


@dataclass
class RunConfig:
    params: AntennaParams = field(default_factory=AntennaParams)
    substrate: SubstrateSpec = field(default_factory=SubstrateSpec)
    ground: GroundSpec = field(default_factory=GroundSpec)
    max_seg_fraction: float = 1 / 20
    f_max: float = 1e9
    trap: TrapSpec | None = None
    target_f0: float = 915e6
    cap_catalog: Path | None = None
    ind_catalog: Path | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    bands: list[BandSpec] = field(default_factory=list)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    sections: frozenset[str] = frozenset()
    source_text: str = ""

    def require(self, *names: str) -> None:
        for n in names:
            if n not in self.sections:
                raise ConfigError(f"[{n}] section is required for this command")

    def require_trap(self) -> TrapSpec:
        if self.trap is None:
            raise ConfigError("[trap] cap_pf: missing (a trap is required)")
        return self.trap


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    p.optionxform = str  # keep key case, so band names survive
    return p


def _typed(section: str, key: str, raw: str, kind):
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def _values(cp: configparser.ConfigParser, section: str) -> dict:
    schema = _SECTIONS[section]
    out = {}
    for key, raw in cp.items(section):
        if key not in schema:
            raise ConfigError(f"[{section}] {key}: unknown key")
        out[key] = _typed(section, key, raw, schema[key])
    return out


def _component(section: str, key: str, nominal: float, tol_abs: float, tol_rel: float) -> ComponentValue:
    try:
        return ComponentValue(nominal, tol_abs, tol_rel)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _trap(v: dict) -> TrapSpec | None:
    if not any(k in v for k in ("cap_pf", "ind1_nh", "ind2_nh")):
        return None
    for k in ("cap_pf", "ind1_nh"):
        if k not in v:
            raise ConfigError(f"[trap] {k}: missing")
    if "cap_tol_pf" in v and "cap_tol_pct" in v:
        raise ConfigError("[trap] cap_tol_pf: give either cap_tol_pf or cap_tol_pct, not both")
    if "ind_tol_pct" in v and "ind_tol_nh" in v:
        raise ConfigError("[trap] ind_tol_pct: give either ind_tol_pct or ind_tol_nh, not both")
    c = v["cap_pf"] * PF
    cap = _component("trap", "cap_pf", c, v.get("cap_tol_pf", 0.0) * PF, v.get("cap_tol_pct", 0.0) / 100)
    l1 = v["ind1_nh"] * NH
    l2 = v.get("ind2_nh", v["ind1_nh"]) * NH
    t_abs = v.get("ind_tol_nh", 0.0) * NH
    t_rel = v.get("ind_tol_pct", 0.0 if "ind_tol_nh" in v else 2.0) / 100
    spec = TrapSpec(cap, _component("trap", "ind1_nh", l1, t_abs, t_rel),
                    _component("trap", "ind2_nh", l2, t_abs, t_rel),
                    v.get("r_series_ind_ohm", 0.0), v.get("r_series_cap_ohm", 0.0))
    if "inductor_q" in v:
        if "r_series_ind_ohm" in v:
            raise ConfigError("[trap] inductor_q: conflicts with r_series_ind_ohm")
        if not v["inductor_q"] > 0:
            raise ConfigError("[trap] inductor_q: must be positive")
        spec = spec.with_q(v["inductor_q"], v.get("q_freq_mhz", 915.0) * MHZ)
    if "tolerance_scale" in v:
        if v["tolerance_scale"] < 0:
            raise ConfigError("[trap] tolerance_scale: must be >= 0")
        spec = spec.with_tolerance_scale(v["tolerance_scale"])
    return spec


def _geometry(v: dict, rc: RunConfig) -> None:
    g = {}
    mm_keys = {"footprint_length_mm": "footprint_length", "footprint_height_mm": "footprint_height",
               "trace_width_mm": "trace_width", "feed_width_mm": "feed_width",
               "conductor_thickness_mm": "conductor_thickness", "short_pin_offset_mm": "short_pin_offset",
               "extension_length_mm": "extension_length", "branch_gap_mm": "branch_gap"}
    for k, name in mm_keys.items():
        if k in v:
            g[name] = v[k] * MM
    for k in ("config", "trap_position_fraction", "length_scale"):
        if k in v:
            g[k] = v[k]
    if "config" in g:
        g["config"] = g["config"].upper()
    sub = {}
    for k, name, scale in (("eps_r", "eps_r", 1), ("loss_tan", "loss_tan", 1),
                           ("strip_width_mm", "strip_width", MM), ("board_thickness_mm", "board_thickness", MM)):
        if k in v:
            sub[name] = v[k] * scale
    gr = {}
    for k, name, scale in (("ground_size_x_mm", "size_x", MM), ("ground_size_y_mm", "size_y", MM),
                           ("ground_thickness_mm", "thickness", MM),
                           ("ground_pitch_fraction", "pitch_fraction", 1)):
        if k in v:
            gr[name] = v[k] * scale
    if "ground_model" in v:
        gr["model"] = v["ground_model"]
    for label, build, kwargs, attr in (("geometry", AntennaParams, g, "params"),
                                       ("geometry", SubstrateSpec, sub, "substrate"),
                                       ("geometry", GroundSpec, gr, "ground")):
        try:
            setattr(rc, attr, build(**kwargs))
        except MeshError as exc:
            key = _guess_key(str(exc), v)
            raise ConfigError(f"[{label}] {key}: {exc}") from None
    if "max_seg_fraction" in v:
        rc.max_seg_fraction = v["max_seg_fraction"]
    if "f_max_mhz" in v:
        rc.f_max = v["f_max_mhz"] * MHZ


def _guess_key(message: str, v: dict) -> str:
    for k in sorted(v, key=len, reverse=True):
        stem = k.removesuffix("_mm").removesuffix("_mhz")
        if stem in message:
            return k
    return "geometry"


def _bands(cp: configparser.ConfigParser) -> list[BandSpec]:
    out = []
    for name, raw in cp.items("bands"):
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"[bands] {name}: expected 'f_lo_mhz, f_hi_mhz'")
        lo, hi = (_typed("bands", name, p, float) for p in parts)
        try:
            out.append(BandSpec(name, lo * MHZ, hi * MHZ))
        except ToleranceError as exc:
            raise ConfigError(f"[bands] {name}: {exc}") from None
    return out


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax: {exc}") from None
    for s in cp.sections():
        if s not in _SECTIONS:
            raise ConfigError(f"[{s}]: unknown section")
    rc = RunConfig(sections=frozenset(cp.sections()), source_text=text)
    base = Path(base_dir)
    if cp.has_section("geometry"):
        _geometry(_values(cp, "geometry"), rc)
    if cp.has_section("trap"):
        v = _values(cp, "trap")
        rc.trap = _trap(v)
        if "target_f0_mhz" in v:
            rc.target_f0 = v["target_f0_mhz"] * MHZ
        for k in ("cap_catalog", "ind_catalog"):
            if k in v:
                setattr(rc, k, base / v[k])
    if cp.has_section("sweep"):
        v = _values(cp, "sweep")
        sw = SweepConfig(v.get("f_lo_mhz", 840.0) * MHZ, v.get("f_hi_mhz", 950.0) * MHZ,
                         v.get("step_mhz", 0.25) * MHZ, v.get("z0_ohm", 50.0))
        if not 0 < sw.f_lo <= sw.f_hi:
            raise ConfigError("[sweep] f_hi_mhz: must be >= f_lo_mhz > 0")
        if not sw.step > 0:
            raise ConfigError("[sweep] step_mhz: must be positive")
        if not sw.z0 > 0:
            raise ConfigError("[sweep] z0_ohm: must be positive")
        rc.sweep = sw
    if cp.has_section("bands"):
        rc.bands = _bands(cp)
    if cp.has_section("analysis"):
        v = _values(cp, "analysis")
        a = AnalysisConfig()
        for k in ("threshold_db", "mc_samples", "seed", "distribution", "pattern_n_theta", "pattern_n_phi"):
            if k in v:
                setattr(a, k, v[k])
        if "pattern_f_mhz" in v:
            a.pattern_f = v["pattern_f_mhz"] * MHZ
        if "conductivity_s_per_m" in v:
            a.conductivity = v["conductivity_s_per_m"]
        if a.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"[analysis] distribution: must be one of {', '.join(DISTRIBUTIONS)}")
        if a.mc_samples < 0:
            raise ConfigError("[analysis] mc_samples: must be >= 0")
        rc.analysis = a
    if cp.has_section("output"):
        v = _values(cp, "output")
        o = OutputConfig()
        if "prefix" in v:
            o.prefix = v["prefix"]
        if "formats" in v:
            o.formats = tuple(x.strip().lower() for x in v["formats"].split(",") if x.strip())
            bad = [x for x in o.formats if x not in ("csv", "s1p", "json")]
            if bad:
                raise ConfigError(f"[output] formats: unknown format {bad[0]!r}")
        rc.output = o
    return rc


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)
