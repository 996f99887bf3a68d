"""File formats: trap and antenna sweep CSV, Touchstone one-port, pattern CSV, mesh JSON.

Numbers in the text formats use 9 significant digits.  Every file starts
with a comment carrying the tool version and a hash of the run config.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .circuit import ComponentValue, TrapSpec, TrapSweep
from .farfield import FarFieldGrid, GainSummary, PatternSummary
from .geometry import SegmentMesh
from .solver import Sweep

MESH_FORMAT = "trapifa-mesh"
MESH_VERSION = 1

TRAP_COLUMNS = ("freq_hz", "corner", "s21_re", "s21_im", "s21_db", "s11_re", "s11_im")
SWEEP_COLUMNS = ("freq_hz", "corner", "zin_re", "zin_im", "s11_re", "s11_im", "rl_db")
PATTERN_COLUMNS = ("theta_deg", "phi_deg", "U_w_per_sr", "D_dBi", "G_dBi")


class FormatError(ValueError):
    pass


def fmt(x: float) -> str:
    return f"{float(x):.9g}"


def _db(x: float) -> str:
    return fmt(20 * math.log10(x)) if x > 0 else "-inf"


def config_hash(text: str | bytes) -> str:
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()[:16]


def header_line(config_digest: str, prefix: str = "#") -> str:
    return f"{prefix} trapifa {__version__} config {config_digest}\n"


def _csv_text(header: str, columns: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _write(path: Path | str, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def read_csv(path: Path | str) -> tuple[list[str], list[dict[str, str]]]:
    """Comment lines (leading '#') are skipped; returns (columns, rows)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    return list(reader.fieldnames or []), rows


# --- trap sweep ----------------------------------------------------------------


def trap_csv_text(sweep: TrapSweep, config_digest: str = "none") -> str:
    rows = []
    for ci, corner in enumerate(sweep.corners):
        for fi, f in enumerate(sweep.freqs):
            s21 = complex(sweep.s21[ci, fi])
            s11 = complex(sweep.s11[ci, fi])
            rows.append((fmt(f), corner.label, fmt(s21.real), fmt(s21.imag), _db(abs(s21)),
                         fmt(s11.real), fmt(s11.imag)))
    return _csv_text(header_line(config_digest), TRAP_COLUMNS, rows)


def write_trap_csv(path, sweep: TrapSweep, config_digest: str = "none") -> Path:
    return _write(path, trap_csv_text(sweep, config_digest))


# --- antenna sweeps ------------------------------------------------------------


def sweep_csv_text(sweeps: Sequence[Sweep], config_digest: str = "none") -> str:
    rows = []
    for sw in sweeps:
        for r in sw.results:
            rows.append((fmt(r.f), sw.label, fmt(r.z_in.real), fmt(r.z_in.imag),
                         fmt(r.s11.real), fmt(r.s11.imag), fmt(r.rl_db)))
    return _csv_text(header_line(config_digest), SWEEP_COLUMNS, rows)


def write_sweep_csv(path, sweeps: Sequence[Sweep], config_digest: str = "none") -> Path:
    return _write(path, sweep_csv_text(sweeps, config_digest))


def read_sweep_csv(path) -> dict[str, np.ndarray]:
    """Per-corner arrays of (freq_hz, s11) parsed back from a sweep CSV."""
    columns, rows = read_csv(path)
    if tuple(columns) != SWEEP_COLUMNS:
        raise FormatError(f"{path}: unexpected columns {columns}")
    out: dict[str, list] = {}
    for row in rows:
        out.setdefault(row["corner"], []).append(
            (float(row["freq_hz"]), complex(float(row["s11_re"]), float(row["s11_im"]))))
    return {k: np.array(v, dtype=complex) for k, v in out.items()}


def touchstone_text(sweep: Sweep, z0: float = 50.0, config_digest: str = "none") -> str:
    lines = [header_line(config_digest, "!"), f"! corner {sweep.label}\n", f"# HZ S RI R {z0:g}\n"]
    for r in sweep.results:
        lines.append(f"{fmt(r.f)} {fmt(r.s11.real)} {fmt(r.s11.imag)}\n")
    return "".join(lines)


def write_touchstone(path, sweep: Sweep, z0: float = 50.0, config_digest: str = "none") -> Path:
    return _write(path, touchstone_text(sweep, z0, config_digest))


_FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}


def read_touchstone(path) -> tuple[np.ndarray, np.ndarray, float]:
    """Parse a one-port Touchstone v1 file; returns (freq_hz, s11, z0)."""
    unit, fmt_kind, z0 = 1e9, "MA", 50.0
    freqs, s11 = [], []
    seen_option = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("!", 1)[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                if seen_option:
                    raise FormatError(f"{path}:{lineno}: second option line")
                seen_option = True
                tok = line[1:].upper().split()
                i = 0
                while i < len(tok):
                    t = tok[i]
                    if t in _FREQ_UNITS:
                        unit = _FREQ_UNITS[t]
                    elif t in ("MA", "DB", "RI"):
                        fmt_kind = t
                    elif t == "R":
                        z0 = float(tok[i + 1])
                        i += 1
                    elif t != "S":
                        raise FormatError(f"{path}:{lineno}: unsupported option {t!r}")
                    i += 1
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns for a one-port file")
            f, a, b = (float(p) for p in parts)
            if fmt_kind == "RI":
                v = complex(a, b)
            elif fmt_kind == "MA":
                v = a * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))
            else:
                v = 10 ** (a / 20) * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))
            freqs.append(f * unit)
            s11.append(v)
    return np.array(freqs), np.array(s11, dtype=complex), z0


# --- pattern -------------------------------------------------------------------


def pattern_csv_text(grid: FarFieldGrid, gains: GainSummary, config_digest: str = "none") -> str:
    rows = []
    for i, th in enumerate(grid.theta):
        for j, ph in enumerate(grid.phi):
            d = gains.D[i, j]
            g = gains.G[i, j]
            rows.append((fmt(math.degrees(th)), fmt(math.degrees(ph)), fmt(grid.U[i, j]),
                         fmt(10 * math.log10(d)) if d > 0 else "-inf",
                         fmt(10 * math.log10(g)) if g > 0 else "-inf"))
    return _csv_text(header_line(config_digest), PATTERN_COLUMNS, rows)


def pattern_summary_dict(summary: PatternSummary) -> dict:
    return {
        "freq_hz": summary.f,
        "zin_re": summary.z_in.real,
        "zin_im": summary.z_in.imag,
        "p_in_w": summary.p_in,
        "p_rad_w": summary.p_rad,
        "p_load_loss_w": summary.p_load_loss,
        "efficiency": summary.efficiency,
        "efficiency_db": summary.efficiency_db,
        "max_directivity_dbi": summary.max_directivity_dbi,
        "max_gain_dbi": summary.max_gain_dbi,
        "azimuth_spread_db": summary.azimuth_spread_db,
        "power_balance_error": summary.power_balance_error,
    }


def json_text(payload: dict, config_digest: str = "none") -> str:
    body = {"tool": "trapifa", "version": __version__, "config_hash": config_digest, **payload}
    return json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n"


# --- mesh ----------------------------------------------------------------------


def _component_dict(c: ComponentValue) -> dict:
    return {"nominal": c.nominal, "tol_abs": c.tol_abs, "tol_rel": c.tol_rel}


def _load_dict(load) -> dict:
    if isinstance(load, TrapSpec):
        return {"kind": "trap", "cap": _component_dict(load.cap), "ind1": _component_dict(load.ind1),
                "ind2": _component_dict(load.ind2), "r_series_ind": load.r_series_ind,
                "r_series_cap": load.r_series_cap}
    z = complex(load)
    return {"kind": "impedance", "re": z.real, "im": z.imag}


def _load_from(d: dict):
    kind = d.get("kind")
    if kind == "trap":
        comp = lambda k: ComponentValue(d[k]["nominal"], d[k]["tol_abs"], d[k]["tol_rel"])  # noqa: E731
        return TrapSpec(comp("cap"), comp("ind1"), comp("ind2"), d["r_series_ind"], d["r_series_cap"])
    if kind == "impedance":
        return complex(d["re"], d["im"])
    raise FormatError(f"unknown load kind {kind!r}")


def mesh_to_dict(mesh: SegmentMesh) -> dict:
    segs = [[*map(float, s), *map(float, e), float(r), t]
            for s, e, r, t in zip(mesh.starts, mesh.ends, mesh.radii, mesh.tags)]
    return {
        "format": MESH_FORMAT,
        "version": MESH_VERSION,
        "ground_mode": mesh.ground_mode,
        "length_scale": mesh.length_scale,
        "feed_segment": mesh.feed_segment,
        "loads": [{"segment": k, **_load_dict(v)} for k, v in mesh.loads.items()],
        "segments": segs,
    }


def mesh_from_dict(d: dict) -> SegmentMesh:
    if d.get("format") != MESH_FORMAT:
        raise FormatError("not a trapifa mesh document")
    if d.get("version") != MESH_VERSION:
        raise FormatError(f"unsupported mesh version {d.get('version')!r}")
    try:
        segs = d["segments"]
        starts = np.array([s[0:3] for s in segs], dtype=float).reshape(-1, 3)
        ends = np.array([s[3:6] for s in segs], dtype=float).reshape(-1, 3)
        radii = np.array([s[6] for s in segs], dtype=float)
        tags = tuple(str(s[7]) for s in segs)
        loads = {int(x["segment"]): _load_from(x) for x in d["loads"]}
        return SegmentMesh(starts, ends, radii, int(d["feed_segment"]), loads, d["ground_mode"],
                           float(d["length_scale"]), tags)
    except (KeyError, IndexError, TypeError) as exc:
        raise FormatError(f"malformed mesh document: {exc}") from exc


def mesh_text(mesh: SegmentMesh, config_digest: str = "none") -> str:
    # json writes floats with repr(), which round-trips exactly
    return json_text(mesh_to_dict(mesh), config_digest)


def write_mesh(path, mesh: SegmentMesh, config_digest: str = "none") -> Path:
    return _write(path, mesh_text(mesh, config_digest))


def read_mesh(path) -> SegmentMesh:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return mesh_from_dict(d)
