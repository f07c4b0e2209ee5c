import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdris import scenario as sc

from conftest import tiny_doc


def test_subcarrier_edges_at_default_grid():
    f = sc.subcarrier_frequencies(sc.OfdmParams(f_c=2.4e9, bandwidth=100e6, n_sub=16))
    assert f[0] == pytest.approx(2.353125e9, abs=1e-3)
    assert f[-1] == pytest.approx(2.446875e9, abs=1e-3)
    assert np.all(np.diff(f) > 0)


def test_single_subcarrier_is_carrier():
    f = sc.subcarrier_frequencies(sc.OfdmParams(n_sub=1, n_taps=1, cyclic_prefix=0))
    np.testing.assert_array_equal(f, [2.4e9])


@given(n_sub=st.integers(1, 256), f_c=st.floats(1e8, 1e11), bw=st.floats(1e5, 1e9))
def test_grid_symmetric_about_carrier(n_sub, f_c, bw):
    f = sc.subcarrier_frequencies(sc.OfdmParams(f_c=f_c, bandwidth=bw, n_sub=n_sub, n_taps=1, cyclic_prefix=0))
    np.testing.assert_allclose(f + f[::-1], 2 * f_c, rtol=1e-14)
    assert np.mean(f) == pytest.approx(f_c, rel=1e-13)


def test_reference_default_has_fourteen_ues():
    scn = sc.build_scenario(sc.default_config_dict(), 0)
    assert scn.n_cells == 4
    assert scn.n_ue == 14
    np.testing.assert_array_equal(np.bincount(scn.ue_cell), [2, 3, 4, 5])


def test_default_circuit_and_grid_constants():
    cfg = sc.parse_scenario_config(sc.default_config_dict())
    c = cfg.circuit
    assert (c.l1, c.l2, c.r, c.z0) == (2.5e-9, 0.7e-9, 1.0, 50.0)
    assert cfg.ofdm.n_sub == 16 and cfg.ofdm.bandwidth == 100e6 and cfg.ofdm.f_c == 2.4e9
    assert cfg.power.pathloss_exponents == (3.7, 2.6, 2.2)


def test_zero_radius_puts_ue_on_center():
    doc = sc.scale_config(sc.default_config_dict(), 1)
    doc["geometry"]["ue_counts_per_cell"] = [1]
    doc["geometry"]["cluster_radius"] = 0.0
    doc["arrays"] = {"n_tx": 2, "ris_shape": [2, 2]}
    doc["ofdm"].update(n_sub=2, n_taps=2, cyclic_prefix=2)
    scn = sc.build_scenario(doc, 5)
    np.testing.assert_array_equal(scn.ue_positions[0, :2], doc["geometry"]["ue_cluster_centers"][0])


@given(seed=st.integers(0, 2**63 - 1))
def test_ues_inside_their_cluster(seed):
    geo = sc.parse_scenario_config(sc.default_config_dict()).geometry
    pos, cells = sc.place_ues(geo, seed)
    d = np.linalg.norm(pos[:, :2] - geo.ue_cluster_centers[cells], axis=1)
    assert np.all(d <= geo.cluster_radius)


def test_build_is_deterministic():
    a = sc.build_scenario(tiny_doc(), 123)
    b = sc.build_scenario(tiny_doc(), 123)
    for name in ("ue_positions", "h", "H", "g", "h_taps", "H_taps", "g_taps"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    c = sc.build_scenario(tiny_doc(), 124)
    assert not np.array_equal(a.h, c.h)


def test_rng_streams_independent_of_other_names():
    a = sc.rng_stream(3, "scenario/ue-placement", 0).random(4)
    _ = sc.rng_stream(3, "new-module").random(100)
    b = sc.rng_stream(3, "scenario/ue-placement", 0).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sc.rng_stream(3, "scenario/ue-placement", 1).random(4))


def test_array_shapes(tiny_scenario):
    s = tiny_scenario
    assert s.h.shape == (2, 2, 2, 2)
    assert s.H.shape == (2, 2, 4, 2)
    assert s.g.shape == (2, 2, 2, 4)


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["circuit"].pop("c_max"), "circuit.c_max"),
        (lambda d: d["circuit"].update(c_min=3e-12, c_max=3e-12), "circuit.c_min"),
        (lambda d: d["geometry"]["ue_counts_per_cell"].__setitem__(0, 0), "geometry.ue_counts_per_cell"),
        (lambda d: d["geometry"].update(cluster_radius=-1.0), "geometry.cluster_radius"),
        (lambda d: d["ofdm"].update(n_taps=20), "ofdm.n_taps"),
        (lambda d: d["geometry"]["ris_positions"].pop(), "geometry"),
        (lambda d: d["arrays"].update(n_tx="8"), "arrays.n_tx"),
    ],
)
def test_invalid_configs_name_the_field(mutate, field):
    doc = sc.default_config_dict()
    mutate(doc)
    with pytest.raises(sc.ConfigError) as err:
        sc.parse_scenario_config(doc)
    assert err.value.field.startswith(field)


def test_taps_beyond_cyclic_prefix_rejected():
    doc = sc.default_config_dict()
    doc["ofdm"].update(n_taps=8, cyclic_prefix=4)
    with pytest.raises(sc.ConfigError, match="cyclic prefix"):
        sc.parse_scenario_config(doc)


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "geometry": {,\n}')
    with pytest.raises(sc.ConfigError, match="line 2, column 16"):
        sc.load_config_document(p)
