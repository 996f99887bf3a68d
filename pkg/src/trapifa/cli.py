"""Command-line driver.

Exit codes: 0 success or passing verdict, 1 failing tolerance verdict,
2 usage, configuration, geometry or numerical error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence


from . import __version__
from .circuit import (
    CANONICAL_CORNERS, NOMINAL, CircuitError, Corner, TrapSpec, catalogs_from_text,
    default_capacitor_catalog, default_inductor_catalog, resonance_sensitivity,
    select_trap_components, trap_resonance, trap_s21_sweep,
)
from .config import MHZ, ConfigError, RunConfig, load_config
from .farfield import FarFieldError, GridSpec, directivity_gain, pattern_summary
from .formats import (
    config_hash, json_text, mesh_text, pattern_csv_text, pattern_summary_dict, sweep_csv_text,
    touchstone_text, trap_csv_text,
)
from .geometry import MeshError, build_ifa_mesh, validate_mesh
from .solver import SolverError, SweepEngine, solve_at, sweep_resonances
from .tolerance import (
    ToleranceError, compare_configs, corner_analysis, monte_carlo, default_bands,
)

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _corners(text: str | None, default: Sequence[Corner]) -> tuple[Corner, ...]:
    if not text:
        return tuple(default)
    if text.strip() == "all":
        return CANONICAL_CORNERS
    out = []
    for part in text.split(","):
        c = Corner.parse(part)
        if c not in out:
            out.append(c)
    return tuple(out)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def build_mesh(rc: RunConfig):
    trap = rc.require_trap()
    return build_ifa_mesh(rc.params, rc.substrate, rc.ground, rc.max_seg_fraction, rc.f_max, trap)


def _mhz(f: float) -> str:
    return f"{f / MHZ:.3f} MHz"


# --- commands --------------------------------------------------------------------


def cmd_trap(rc: RunConfig, args, out: Path, digest: str) -> int:
    trap = rc.require_trap()
    corners = _corners(args.corners, CANONICAL_CORNERS)
    sweep = trap_s21_sweep(trap, rc.sweep.grid(), corners, rc.sweep.z0)
    path = _write(out, f"{rc.output.prefix}_trap.csv", trap_csv_text(sweep, digest))
    f0 = trap_resonance(trap)
    shift = resonance_sensitivity(trap)[2]
    print(f"nominal f0: {_mhz(f0)}")
    print(f"worst corner shift: +/-{100 * shift:.3f} % ({shift * f0 / MHZ:.3f} MHz, first order)")
    for c in corners:
        print(f"  {c.label:8s} f0 = {_mhz(trap_resonance(trap, c))}")
    print(f"wrote {path}")
    return EXIT_OK


def _trap_ini(spec: TrapSpec, target: float) -> str:
    cap, ind = spec.cap, spec.ind1
    lines = ["[trap]", f"cap_pf = {cap.nominal / 1e-12:.6g}"]
    if cap.tol_abs:
        lines.append(f"cap_tol_pf = {cap.tol_abs / 1e-12:.6g}")
    else:
        lines.append(f"cap_tol_pct = {100 * cap.tol_rel:.6g}")
    lines += [f"ind1_nh = {ind.nominal / 1e-9:.6g}", f"ind2_nh = {spec.ind2.nominal / 1e-9:.6g}",
              f"ind_tol_pct = {100 * ind.tol_rel:.6g}", f"target_f0_mhz = {target / MHZ:.6g}"]
    return "\n".join(lines) + "\n"


def cmd_design_trap(rc: RunConfig, args, out: Path, digest: str) -> int:
    if rc.cap_catalog or rc.ind_catalog:
        if not (rc.cap_catalog and rc.ind_catalog):
            raise ConfigError("[trap] cap_catalog: give both cap_catalog and ind_catalog")
        try:
            caps, inds = catalogs_from_text(rc.cap_catalog.read_text(), rc.ind_catalog.read_text())
        except OSError as exc:
            raise ConfigError(f"[trap] catalog: cannot read {exc.filename}") from None
    else:
        caps, inds = default_capacitor_catalog(), default_inductor_catalog()
    spec = select_trap_components(rc.target_f0, caps, inds)
    f0 = trap_resonance(spec)
    delta = f0 / rc.target_f0 - 1
    print(f"capacitor: {spec.cap.nominal / 1e-12:.4g} pF +/- {spec.cap.half_width / 1e-12:.3g} pF")
    print(f"inductors: 2 x {spec.ind1.nominal / 1e-9:.4g} nH +/- {100 * spec.ind1.tol_rel:.3g} %")
    print(f"target f0: {_mhz(rc.target_f0)}  achieved f0: {_mhz(f0)}  delta: {100 * delta:+.2f} %")
    path = _write(out, f"{rc.output.prefix}_designed_trap.ini",
                  f"# trapifa {__version__} config {digest}\n" + _trap_ini(spec, rc.target_f0))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_mesh(rc: RunConfig, args, out: Path, digest: str) -> int:
    mesh = build_mesh(rc)
    report = validate_mesh(mesh, rc.f_max)
    for c in report.checks:
        print(f"  {c.name:18s} {'ok' if c.ok else 'FAIL'}  {c.detail}")
    path = _write(out, f"{rc.output.prefix}_mesh.json", mesh_text(mesh, digest))
    print(f"{len(mesh)} segments, length_scale {mesh.length_scale:.6g}; wrote {path}")
    return EXIT_OK


def cmd_sweep(rc: RunConfig, args, out: Path, digest: str) -> int:
    mesh = build_mesh(rc)
    corners = _corners(args.corners, (NOMINAL,))
    engine = SweepEngine(mesh, rc.sweep.grid(), args.threads, rc.sweep.z0)
    sweeps = [engine.run(c) for c in corners]
    failed = [(sw.label, f, m) for sw in sweeps for f, m in sw.failures]
    for label, f, m in failed:
        print(f"error: {label} at {_mhz(f)}: {m}", file=sys.stderr)
    if "csv" in rc.output.formats:
        print(f"wrote {_write(out, f'{rc.output.prefix}_sweep.csv', sweep_csv_text(sweeps, digest))}")
    for sw in sweeps:
        if "s1p" in rc.output.formats:
            name = f"{rc.output.prefix}_{sw.label}.s1p"
            print(f"wrote {_write(out, name, touchstone_text(sw, rc.sweep.z0, digest))}")
        print(f"{sw.label}:")
        dips = sweep_resonances(sw, rc.analysis.threshold_db) if len(sw) else []
        if not dips:
            print(f"  no dip at or below {rc.analysis.threshold_db:g} dB")
        for r in dips:
            note = " (clipped by sweep edge)" if r.truncated else ""
            print(f"  dip {_mhz(r.f_dip)}  {r.rl_db:.2f} dB  {rc.analysis.threshold_db:g} dB bandwidth "
                  f"{r.bandwidth / MHZ:.3f} MHz{note}")
    return EXIT_ERROR if failed else EXIT_OK


def cmd_pattern(rc: RunConfig, args, out: Path, digest: str) -> int:
    f = args.freq * MHZ if args.freq is not None else rc.analysis.pattern_f
    if f is None:
        raise UsageError("pattern needs --freq or [analysis] pattern_f_mhz")
    mesh = build_mesh(rc)
    result = solve_at(mesh, f, z0=rc.sweep.z0, conductivity=rc.analysis.conductivity)
    grid_spec = GridSpec(rc.analysis.pattern_n_theta, rc.analysis.pattern_n_phi)
    ff, summary = pattern_summary(mesh, result, grid_spec)
    gains = directivity_gain(ff, result.p_in, summary.p_rad)
    _write(out, f"{rc.output.prefix}_pattern.csv", pattern_csv_text(ff, gains, digest))
    _write(out, f"{rc.output.prefix}_pattern.json", json_text({"pattern": pattern_summary_dict(summary)}, digest))
    print(f"f = {_mhz(f)}  Zin = {result.z_in.real:.2f} {result.z_in.imag:+.2f}j ohm")
    print(f"max directivity {summary.max_directivity_dbi:.2f} dBi, max gain {summary.max_gain_dbi:.2f} dBi")
    print(f"efficiency {summary.efficiency:.4f} ({summary.efficiency_db:.2f} dB), "
          f"power balance error {100 * summary.power_balance_error:.3f} %")
    print(f"azimuth cut spread {summary.azimuth_spread_db:.2f} dB")
    return EXIT_OK


def _bands(rc: RunConfig):
    return rc.bands or default_bands()


def cmd_tolerance(rc: RunConfig, args, out: Path, digest: str) -> int:
    mesh = build_mesh(rc)
    n = args.mc if args.mc is not None else rc.analysis.mc_samples
    seed = args.seed if args.seed is not None else rc.analysis.seed
    grid = rc.sweep.grid()
    if n > 0:
        report = monte_carlo(mesh, None, _bands(rc), grid, n, seed, rc.analysis.distribution,
                             rc.analysis.threshold_db, args.threads)
    else:
        report = corner_analysis(mesh, None, _bands(rc), grid, rc.analysis.threshold_db, args.threads)
    path = _write(out, f"{rc.output.prefix}_tolerance.json", json_text({"report": report.as_dict()}, digest))
    for row in report.corners:
        cells = "  ".join(f"{b.name}: worst {r.worst_rl_db:7.2f} dB" for b, r in zip(report.bands, row.bands))
        print(f"  {row.label:8s} {cells}")
    for label, message in report.failures:
        print(f"error: {label}: {message}", file=sys.stderr)
    if report.monte_carlo:
        print(f"Monte Carlo n={report.monte_carlo.n} seed={report.monte_carlo.seed}: "
              f"pass rate {100 * report.monte_carlo.pass_rate:.1f} %")
    print(f"verdict: {report.verdict}  (wrote {path})")
    return {"pass": EXIT_OK, "fail": EXIT_FAIL}.get(report.verdict, EXIT_ERROR)


def cmd_compare(configs: list[RunConfig], args, out: Path, digest: str) -> int:
    if len(configs) != 2:
        raise UsageError("compare needs exactly two --config files (design A, then design B)")
    a, b = configs
    bands = _bands(b)
    grid = a.sweep.grid()
    cmp = compare_configs((build_mesh(a), None), (build_mesh(b), None), bands, grid,
                          a.analysis.threshold_db, args.threads)
    path = _write(out, f"{a.output.prefix}_compare.json", json_text({"comparison": cmp.as_dict()}, digest))
    for s in (cmp.a, cmp.b):
        shifts = ", ".join(f"{band.name}: {x / MHZ:.3f} MHz" for band, x in zip(bands, s.dip_shifts))
        print(f"design {s.name}: corner dip shift {shifts}; margin {s.margin_db:+.2f} dB; "
              f"{'pass' if s.passes else 'fail'}")
    print(f"low-band corner shift of B relative to A: {cmp.thesis}  (wrote {path})")
    return EXIT_OK


COMMANDS = {
    "trap": cmd_trap, "design-trap": cmd_design_trap, "mesh": cmd_mesh, "sweep": cmd_sweep,
    "pattern": cmd_pattern, "tolerance": cmd_tolerance,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trapifa", description="Dual-band trap IFA toolkit")
    p.add_argument("--version", action="version", version=f"trapifa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("trap", "design-trap", "mesh", "sweep", "pattern", "tolerance", "compare"):
        s = sub.add_parser(name)
        s.add_argument("--config", action="append", required=True, type=Path,
                       help="INI run configuration (compare takes two)")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        s.add_argument("--corners", default=None, help="comma list such as nominal,L+C+,L-C- or 'all'")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--threads", type=int, default=1)
        if name == "pattern":
            s.add_argument("--freq", type=float, default=None, help="frequency in MHz")
        if name == "tolerance":
            s.add_argument("--mc", type=int, default=None, help="Monte Carlo samples (0 skips)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        texts = []
        configs = []
        for path in args.config:
            rc = load_config(path)
            configs.append(rc)
            texts.append(rc.source_text)
        digest = config_hash("\x00".join(texts))
        if args.command == "compare":
            return cmd_compare(configs, args, args.out, digest)
        if len(configs) != 1:
            raise UsageError(f"{args.command} takes a single --config")
        return COMMANDS[args.command](configs[0], args, args.out, digest)
    except (UsageError, ConfigError, CircuitError, MeshError, SolverError, FarFieldError,
            ToleranceError) as exc:
        kind = type(exc).__name__
        print(f"error ({kind}): {exc}", file=sys.stderr)
        offending = getattr(exc, "offending", ())
        if offending:
            print(f"offending segments: {', '.join(map(str, offending))}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # last resort: report, never crash with a traceback
        print(f"internal error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
