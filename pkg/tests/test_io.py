import json
from pathlib import Path

import numpy as np
import pytest

from trapifa.circuit import reference_trap
from trapifa.config import ConfigError, parse_config
from trapifa.designs import design_mesh
from trapifa.formats import (
    FormatError, config_hash, mesh_from_dict, mesh_text, read_csv, read_mesh, read_sweep_csv,
    read_touchstone, write_mesh, write_sweep_csv, write_touchstone,
)
from trapifa.geometry import build_dipole
from trapifa.solver import SweepEngine


def test_mesh_round_trip_is_lossless(tmp_path):
    mesh = design_mesh("B", trap=reference_trap().with_q(60, 915e6))
    path = write_mesh(tmp_path / "m.json", mesh, "abc")
    back = read_mesh(path)
    assert back.fingerprint() == mesh.fingerprint()
    assert back.loads == mesh.loads
    plain = build_dipole(0.5, 1e-3, 8).with_loads({2: 12.5 - 3j})
    assert mesh_from_dict(json.loads(mesh_text(plain))).fingerprint() == plain.fingerprint()


def test_mesh_reader_rejects_foreign_documents(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(FormatError):
        read_mesh(p)
    p.write_text("{not json")
    with pytest.raises(FormatError):
        read_mesh(p)


def test_touchstone_matches_csv(tmp_path):
    mesh = design_mesh("B")
    sw = SweepEngine(mesh, np.arange(860e6, 920e6 + 1, 5e6)).run()
    csv_path = write_sweep_csv(tmp_path / "s.csv", [sw], "h")
    s1p = write_touchstone(tmp_path / "s.s1p", sw, 50.0, "h")
    f, s11, z0 = read_touchstone(s1p)
    table = read_sweep_csv(csv_path)["nominal"]
    assert z0 == 50.0
    assert np.array_equal(f, table[:, 0].real)
    assert np.array_equal(s11, table[:, 1])
    assert np.allclose(s11, sw.s11, rtol=1e-8)


def test_touchstone_units_and_formats(tmp_path):
    p = tmp_path / "a.s1p"
    p.write_text("! test\n# MHz S DB R 75\n100 -6.0206 90\n200 0 180\n")
    f, s11, z0 = read_touchstone(p)
    assert list(f) == [100e6, 200e6] and z0 == 75.0
    assert s11[0] == pytest.approx(0.5j, abs=1e-5)
    assert s11[1] == pytest.approx(-1, abs=1e-12)
    p.write_text("# GHz S MA R 50\n1 0.5 0\n")
    assert read_touchstone(p)[0][0] == 1e9
    p.write_text("# Hz S RI R 50\n1 0.5\n")
    with pytest.raises(FormatError):
        read_touchstone(p)


def test_headers_carry_version_and_hash(tmp_path):
    sw = SweepEngine(build_dipole(0.5, 1e-3, 8), [3e8]).run()
    path = write_sweep_csv(tmp_path / "s.csv", [sw], config_hash("x"))
    first = Path(path).read_text().splitlines()[0]
    assert first.startswith("# trapifa ") and config_hash("x") in first
    cols, rows = read_csv(path)
    assert cols[0] == "freq_hz" and len(rows) == 1
    assert len(config_hash("x")) == 16 and config_hash("x") != config_hash("y")


GOOD = """
[geometry]
config = b
short_pin_offset_mm = 1.8
length_scale = 1.15
max_seg_fraction = 0.0125
[trap]
cap_pf = 9.1
cap_tol_pf = 0.05
ind1_nh = 6.8
[sweep]
f_lo_mhz = 850
f_hi_mhz = 950
step_mhz = 0.5
[bands]
low = 865, 870
[analysis]
mc_samples = 0
"""


def test_config_parsing_units():
    rc = parse_config(GOOD)
    assert rc.params.config == "B"
    assert rc.params.short_pin_offset == pytest.approx(1.8e-3)
    assert rc.trap.ind2.nominal == pytest.approx(6.8e-9)
    assert rc.trap.ind1.tol_rel == 0.02
    assert rc.trap.cap.tol_abs == pytest.approx(0.05e-12)
    assert rc.sweep.grid()[0] == 850e6 and rc.sweep.grid()[-1] == 950e6 and len(rc.sweep.grid()) == 201
    assert rc.bands[0].f_lo == 865e6
    assert rc.analysis.mc_samples == 0


@pytest.mark.parametrize("text, where", [
    ("[geometry]\nwidth_mm = 3\n", "[geometry] width_mm"),
    ("[extras]\n", "[extras]"),
    ("[trap]\nind1_nh = 6.8\n", "[trap] cap_pf"),
    ("[trap]\ncap_pf = x\nind1_nh = 6.8\n", "[trap] cap_pf"),
    ("[sweep]\nf_lo_mhz = 900\nf_hi_mhz = 800\n", "[sweep] f_hi_mhz"),
    ("[bands]\nlow = 870\n", "[bands] low"),
    ("[geometry]\ntrap_position_fraction = 1.5\n", "[geometry] trap_position_fraction"),
    ("[analysis]\ndistribution = normal\n", "[analysis] distribution"),
])
def test_config_errors_name_section_and_key(text, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert where in str(exc.value)


def test_missing_trap_reported_on_demand():
    rc = parse_config("[sweep]\nstep_mhz = 1\n")
    with pytest.raises(ConfigError, match="cap_pf"):
        rc.require_trap()
