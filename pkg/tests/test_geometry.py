import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapifa.circuit import reference_trap
from trapifa.designs import CALIBRATED_LENGTH_SCALE, design_mesh, design_params
from trapifa.geometry import (
    AntennaParams, GroundSpec, MeshError, SegmentMesh, SubstrateSpec, build_dipole, build_ifa_mesh,
    build_polyline, effective_permittivity_scale, resolve_length_scale, validate_mesh, wavelength,
)

# 1/sqrt((4.3 + 1)/2), computed independently with mpmath
FR4_SCALE = 0.614295116834


def test_permittivity_scale():
    assert effective_permittivity_scale(SubstrateSpec(eps_r=4.3)) == pytest.approx(FR4_SCALE, rel=1e-11)
    assert effective_permittivity_scale(SubstrateSpec(eps_r=1.0)) == 1.0
    assert effective_permittivity_scale(SubstrateSpec(eps_r=7.0)) == pytest.approx(0.5)


def test_default_length_scale_is_electrical_stretch():
    assert resolve_length_scale(AntennaParams(), SubstrateSpec()) == pytest.approx(1 / FR4_SCALE)
    assert resolve_length_scale(AntennaParams(length_scale=1.15), SubstrateSpec()) == 1.15


def test_default_mesh_is_valid_and_sized():
    p = AntennaParams()
    mesh = build_ifa_mesh(p, trap=reference_trap())
    assert validate_mesh(mesh, 1e9).ok
    ls = mesh.length_scale
    arm = mesh.length_of("arm")
    assert arm == pytest.approx(59.4e-3 * ls, rel=1e-12)
    assert mesh.lengths.max() <= wavelength(1e9) / 20 * (1 + 1e-12)
    tags = np.array(mesh.tags)
    assert np.all(mesh.radii[tags == "arm"] == pytest.approx(2.7e-3 / 4))
    assert np.all(mesh.radii[tags == "feed"] == pytest.approx(0.65e-3 / 4))
    assert len(mesh.trap_segments()) == 1


@pytest.mark.parametrize("cfg", ["A", "B"])
def test_halving_segment_size_doubles_counts(cfg):
    # every run here is longer than the fine segment limit
    p = AntennaParams(config=cfg, short_pin_offset=10e-3, extension_length=30e-3, branch_gap=10e-3,
                      length_scale=1.6)
    coarse = build_ifa_mesh(p, max_seg_fraction=1 / 20, trap=reference_trap())
    fine = build_ifa_mesh(p, max_seg_fraction=1 / 40, trap=reference_trap())
    for tag in set(coarse.tags):
        assert fine.tags.count(tag) == 2 * coarse.tags.count(tag)


def test_refinement_never_coarsens():
    p = AntennaParams(config="A", short_pin_offset=3e-3, extension_length=8e-3, length_scale=1.2)
    counts = [len(build_ifa_mesh(p, max_seg_fraction=1 / n, trap=reference_trap())) for n in (10, 20, 40)]
    assert counts[0] < counts[1] < counts[2]


def test_mesh_is_deterministic():
    a = build_ifa_mesh(AntennaParams(), trap=reference_trap())
    b = build_ifa_mesh(AntennaParams(), trap=reference_trap())
    assert a.fingerprint() == b.fingerprint()


def test_configs_share_conductor_length():
    a = design_mesh("A", extension_length=8e-3, trap_position_fraction=0.6)
    b = design_mesh("B", extension_length=8e-3, trap_position_fraction=0.6)
    assert a.total_length == pytest.approx(b.total_length, rel=1e-12)
    assert a.trap_segments() != b.trap_segments() or not np.array_equal(a.starts, b.starts)


def test_config_b_trap_sits_on_branch():
    mesh = design_mesh("B")
    k = mesh.trap_segments()[0]
    assert mesh.tags[k] == "extension"
    height = 11e-3 * CALIBRATED_LENGTH_SCALE
    assert mesh.starts[k, 2] < height - 1e-9


@pytest.mark.parametrize("s", [0.0, 1.0, -0.1, 1.2])
def test_trap_fraction_outside_open_interval(s):
    with pytest.raises(MeshError):
        AntennaParams(trap_position_fraction=s)


def test_invalid_params():
    with pytest.raises(MeshError):
        AntennaParams(short_pin_offset=40e-3, trap_position_fraction=0.5)
    with pytest.raises(MeshError):
        AntennaParams(config="B", branch_gap=12e-3, extension_length=20e-3)
    with pytest.raises(MeshError):
        AntennaParams(config="C")
    with pytest.raises(MeshError):
        GroundSpec(pitch_fraction=0.2)


def test_radius_ratio_failure_names_segments():
    p = AntennaParams(short_pin_offset=0.5e-3, length_scale=1.0)
    with pytest.raises(MeshError) as exc:
        build_ifa_mesh(p, trap=reference_trap())
    assert exc.value.offending
    assert "radius_ratio" in str(exc.value)


def test_stretched_segment_flagged():
    mesh = build_dipole(0.5, 1e-3, 10)
    lam = 1.0
    long_mesh = build_polyline([(0, 0, 0), (0, 0, lam / 5), (0, 0, lam / 5 + 0.05)], 1e-3, 1, 0)
    report = validate_mesh(long_mesh, 3e8)
    assert not report["electrical_length"].ok
    assert report["electrical_length"].segments == (0,)
    assert validate_mesh(mesh, 3e8).ok


def _concat(mesh: SegmentMesh, starts, ends) -> SegmentMesh:
    starts = np.vstack([mesh.starts, np.atleast_2d(starts)])
    ends = np.vstack([mesh.ends, np.atleast_2d(ends)])
    radii = np.concatenate([mesh.radii, np.full(len(starts) - len(mesh), mesh.radii[0])])
    tags = mesh.tags + ("extra",) * (len(starts) - len(mesh))
    return SegmentMesh(starts, ends, radii, mesh.feed_segment, mesh.loads, mesh.ground_mode,
                       mesh.length_scale, tags)


def test_coincident_segments_flagged():
    mesh = build_dipole(0.5, 1e-3, 10)
    dup = _concat(mesh, mesh.starts[2], mesh.ends[2])
    report = validate_mesh(dup, 3e8)
    assert not report["overlap"].ok
    assert {2, 10} <= set(report["overlap"].segments)


def test_crossing_segments_flagged():
    mesh = build_polyline([(0, 0, 0), (0.1, 0, 0), (0.1, 0, 0.1), (0.05, 0, 0.1), (0.05, 0, -0.05)], 1e-3, 2, 0)
    report = validate_mesh(mesh, 3e8)
    assert not report["overlap"].ok


def test_disconnected_segment_flagged():
    mesh = build_dipole(0.5, 1e-3, 10)
    lonely = _concat(mesh, (0.3, 0, 0), (0.3, 0, 0.05))
    report = validate_mesh(lonely, 3e8)
    assert not report["connectivity"].ok
    assert report["connectivity"].segments == (10,)


def test_index_checks():
    mesh = build_dipole(0.5, 1e-3, 10)
    assert not validate_mesh(mesh.with_loads({12: 0j}), 3e8)["indices"].ok
    assert not validate_mesh(mesh.with_loads({5: 0j}), 3e8)["indices"].ok


def test_image_mode_rejects_segments_below_ground():
    mesh = build_polyline([(0, 0, -0.01), (0, 0, 0.1)], 1e-3, 4, 0, ground_mode="infinite-image")
    report = validate_mesh(mesh, 3e8)
    assert not report["ground_plane"].ok
    assert 0 in report.offending_segments()


def test_design_presets():
    assert design_params("A").config == "A"
    assert design_params("B").config == "B"
    with pytest.raises(ValueError):
        design_params("C")
    for c in "AB":
        assert validate_mesh(design_mesh(c), 1e9).ok


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.3, 0.95), ext=st.floats(6e-3, 20e-3), d=st.floats(2e-3, 8e-3),
       cfg=st.sampled_from("AB"))
def test_random_params_give_valid_meshes(s, ext, d, cfg):
    p = AntennaParams(config=cfg, trap_position_fraction=s, extension_length=ext, short_pin_offset=d,
                      branch_gap=4e-3, length_scale=1.2)
    mesh = build_ifa_mesh(p, trap=reference_trap(), max_seg_fraction=1 / 30)
    assert validate_mesh(mesh, 1e9).ok
    assert mesh.total_length == pytest.approx(
        1.2 * (2 * 11e-3 + 59.4e-3 + ext), rel=1e-9)
    assert mesh.length_of("arm") + mesh.length_of("extension") == pytest.approx(1.2 * (59.4e-3 + ext), rel=1e-9)
