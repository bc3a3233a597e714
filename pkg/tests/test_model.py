import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from equikin.errors import ChainConfigError
from equikin.model import (AnatomicalConvention, build_chain, chain_to_config,
                           convention_mismatches, default_chain_config, from_anatomical,
                           inertial_from_body_mass, reference_convention_rows, to_anatomical)


def test_four_segment_chain_from_bundled_config(chain4):
    assert chain4.joint_names == ["elbow", "carpus", "fetlock", "coffin"]
    lengths = [s.length for s in chain4.segments]
    np.testing.assert_allclose(lengths, [0.369, 0.282, 0.114, 0.080])
    assert chain4.body_mass == 433.0
    assert chain4.joint("elbow").translations_enabled
    assert not chain4.joint("carpus").translations_enabled


def test_five_joint_chain_inserts_pastern(chain5):
    assert chain5.joint_names == ["elbow", "carpus", "fetlock", "pastern", "coffin"]
    assert chain5.convention.size == 30


def test_duplicate_segment_rejected():
    cfg = default_chain_config(4)
    cfg["segments"].append(copy.deepcopy(cfg["segments"][1]))
    with pytest.raises(ChainConfigError, match="duplicate"):
        build_chain(cfg)


def test_branching_topology_rejected():
    cfg = default_chain_config(5)
    cfg["joints"][3]["proximal"] = "cannon"
    with pytest.raises(ChainConfigError):
        build_chain(cfg)


def test_cycle_rejected():
    cfg = default_chain_config(4)
    cfg["joints"][0]["proximal"] = "hoof"
    with pytest.raises(ChainConfigError):
        build_chain(cfg)


@pytest.mark.parametrize("key, value", [("mass", 0.0), ("length", -0.1)])
def test_non_positive_mass_or_length_rejected(key, value):
    cfg = default_chain_config(4)
    seg = cfg["segments"][0]
    seg[key] = value
    seg.setdefault("inertia", [0.01, 0.01, 0.001])
    with pytest.raises(ChainConfigError):
        build_chain(cfg)


def test_collinear_marker_template_rejected():
    cfg = default_chain_config(4)
    cfg["segments"][2]["markers"] = {"a": [0, 0, -0.01], "b": [0, 0, -0.05], "c": [0, 0, -0.09]}
    with pytest.raises(ChainConfigError, match="collinear"):
        build_chain(cfg)


def test_asymmetric_inertia_rejected():
    cfg = default_chain_config(4)
    cfg["segments"][0]["mass"] = 8.0
    cfg["segments"][0]["inertia"] = [[0.1, 0.02, 0], [0, 0.1, 0], [0, 0, 0.01]]
    with pytest.raises(ChainConfigError, match="symmetric"):
        build_chain(cfg)


def test_millimeter_config_matches_meters():
    cfg = default_chain_config(4)
    mm = copy.deepcopy(cfg)
    mm["length_unit"] = "mm"
    mm["parent"]["length"] *= 1e3
    mm["parent"]["markers"] = {k: [1e3 * v for v in p] for k, p in mm["parent"]["markers"].items()}
    for seg in mm["segments"]:
        seg["length"] *= 1e3
        seg["markers"] = {k: [1e3 * v for v in p] for k, p in seg["markers"].items()}
    a, b = build_chain(cfg), build_chain(mm)
    for sa, sb in zip(a.segments, b.segments):
        assert sb.length == pytest.approx(sa.length)
        np.testing.assert_allclose(sb.marker_template, sa.marker_template, atol=1e-15)
        np.testing.assert_allclose(sb.inertia, sa.inertia, rtol=1e-12)


def test_config_round_trip(chain5):
    rebuilt = build_chain(chain_to_config(chain5))
    assert rebuilt.joint_names == chain5.joint_names
    for a, b in zip(rebuilt.segments, chain5.segments):
        assert a.mass == b.mass
        np.testing.assert_array_equal(a.inertia, b.inertia)


# --- inertial parameters ---------------------------------------------------

def test_segment_mass_from_coefficient():
    out = inertial_from_body_mass(433.0, {"radius": {"mass_fraction": 0.02}}, {"radius": 0.369})
    assert out["radius"].mass == pytest.approx(8.66)


def test_zero_body_mass_rejected():
    with pytest.raises(ValueError):
        inertial_from_body_mass(0.0, {"radius": {"mass_fraction": 0.02}}, {"radius": 0.369})


def test_missing_coefficient_rejected():
    with pytest.raises(ChainConfigError, match="cannon"):
        inertial_from_body_mass(433.0, {"radius": {"mass_fraction": 0.02}},
                                {"radius": 0.369, "cannon": 0.282})


def test_mass_linearity_and_bookkeeping():
    cfg = default_chain_config(5)
    table, lengths = cfg["inertia_model"], {s["name"]: s["length"] for s in cfg["segments"]}
    one = inertial_from_body_mass(400.0, table, lengths)
    two = inertial_from_body_mass(800.0, table, lengths)
    for name in lengths:
        assert two[name].mass == pytest.approx(2 * one[name].mass, rel=1e-15)
    total = sum(p.mass for p in one.values())
    expected = 400.0 * sum(float(c["mass_fraction"]) for c in table.values())
    assert total == pytest.approx(expected, rel=1e-12)


# --- sign convention -------------------------------------------------------

def test_convention_matches_reference_table_row_for_row(chain5):
    rows = reference_convention_rows()
    assert len(rows) == 30
    assert convention_mismatches(chain5.convention, rows) == []
    assert chain5.convention.table() == list(rows)


def test_elbow_flexion_coordinate_is_negated(chain5):
    q = np.zeros(30)
    q[3] = 0.2  # q4
    a = to_anatomical(q, chain5.convention)
    assert a[4] == -0.2  # beta of the elbow
    q = np.zeros(30)
    q[4] = 0.2  # q5 = +alpha
    assert to_anatomical(q, chain5.convention)[3] == 0.2


def test_zero_vector_is_fixed(chain4):
    assert not to_anatomical(np.zeros(24), chain4.convention).any()


def test_length_mismatch_rejected(chain4):
    with pytest.raises(ValueError):
        to_anatomical(np.zeros(23), chain4.convention)


_CONVENTION = AnatomicalConvention.for_joints(["elbow", "carpus", "fetlock", "pastern", "coffin"])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (30,), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_sign_mapping_round_trip_is_bit_exact(q):
    back = from_anatomical(to_anatomical(q, _CONVENTION), _CONVENTION)
    assert np.array_equal(back, q)
    forward = to_anatomical(from_anatomical(q, _CONVENTION), _CONVENTION)
    assert np.array_equal(forward, q)
