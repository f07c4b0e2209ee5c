import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdris import metrics, ris

import oracles


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# Narrowband broadcast
# ---------------------------------------------------------------------------


def test_single_ue_unit_snr():
    m = np.array([[1.0, 0.0]])
    V = np.array([[1.0], [0.0]])
    assert metrics.sinr_narrowband(m[0], V, 0, 1.0, 1.0) == 1.0
    assert metrics.narrowband_sum_rate(m, V, 1.0, 1.0) == 1.0


def test_orthogonal_precoders_no_interference():
    M = np.array([[1.0, 0.0], [0.0, 2.0]])
    V = np.eye(2)
    sig2, p = 0.5, 2.0
    assert metrics.sinr_narrowband(M[0], V, 0, sig2, p) == pytest.approx(1.0 / (sig2 / p))
    assert metrics.sinr_narrowband(M[1], V, 1, sig2, p) == pytest.approx(4.0 / (sig2 / p))


@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.1, 10.0))
def test_precoder_scaling_homogeneity(seed, alpha):
    rng = np.random.default_rng(seed)
    M, V = crand(rng, 3, 4), crand(rng, 4, 3)
    gains = np.abs(M[0] @ V) ** 2
    scaled = np.abs(M[0] @ (alpha * V)) ** 2
    np.testing.assert_allclose(scaled, alpha**2 * gains, rtol=1e-12)
    sig2, p = 1.0, 1.0
    expected = alpha**2 * gains[0] / (alpha**2 * (gains.sum() - gains[0]) + sig2 / p)
    assert metrics.sinr_narrowband(M[0], alpha * V, 0, sig2, p) == pytest.approx(expected, rel=1e-12)


@given(seed=st.integers(0, 2**32 - 1))
def test_narrowband_rates_match_oracle(seed):
    rng = np.random.default_rng(seed)
    M, V = crand(rng, 3, 4), crand(rng, 4, 3)
    np.testing.assert_allclose(metrics.narrowband_rates(M, V, 0.3, 2.0), oracles.narrowband_rates(M, V, 0.3, 2.0), rtol=1e-10)


@given(seed=st.integers(0, 2**32 - 1))
def test_narrowband_sum_invariant_to_relabelling(seed):
    rng = np.random.default_rng(seed)
    M, V = crand(rng, 4, 4), crand(rng, 4, 4)
    perm = rng.permutation(4)
    a = metrics.narrowband_sum_rate(M, V, 0.7, 1.0)
    b = metrics.narrowband_sum_rate(M[perm], V[:, perm], 0.7, 1.0)
    assert a == pytest.approx(b, rel=1e-12)


# ---------------------------------------------------------------------------
# Wideband multi-cell
# ---------------------------------------------------------------------------


def _rows(s, state):
    return metrics.scenario_composite_rows(s, state.c, state.S)


def test_rates_match_straight_line_oracle(tiny_scenario, tiny_state):
    s = tiny_scenario
    phi = ris.phase_vectors(tiny_state.c, s.frequencies, s.circuit)
    ref = oracles.wideband_rates(s.h, s.g, tiny_state.S, phi, s.H, tiny_state.w, s.ue_cell, s.noise_variance)
    got = metrics.per_ue_rates(_rows(s, tiny_state), tiny_state.w, s.ue_cell, s.noise_variance)
    np.testing.assert_allclose(got, ref, rtol=1e-10)
    for u in range(s.n_ue):
        assert metrics.rate_wideband(_rows(s, tiny_state), tiny_state.w, s.ue_cell, s.noise_variance, u) == pytest.approx(
            ref[u], rel=1e-10
        )


def test_silent_interferers_leave_noise_only(tiny_scenario, tiny_state):
    s = tiny_scenario
    w = tiny_state.w.copy()
    w[1] = 0
    st_ = metrics.link_stats(_rows(s, tiny_state), w, s.ue_cell, s.noise_variance)
    np.testing.assert_allclose(st_.mui[0], s.noise_variance, rtol=1e-12)


def test_more_noise_lowers_rate(tiny_scenario, tiny_state):
    s = tiny_scenario
    f = _rows(s, tiny_state)
    a = metrics.per_ue_rates(f, tiny_state.w, s.ue_cell, s.noise_variance)
    b = metrics.per_ue_rates(f, tiny_state.w, s.ue_cell, 2 * s.noise_variance)
    assert np.all(b < a)


def test_zero_power_gives_zero_rate(tiny_scenario, tiny_state):
    s = tiny_scenario
    assert metrics.total_rate(s, np.zeros_like(tiny_state.w), tiny_state.c, tiny_state.S) == 0.0


def test_decomposition_invariant_across_cells(desk_scenario):
    from bdris import sca

    s = desk_scenario
    st_ = sca.initial_state(s)
    total = metrics.total_rate(s, st_.w, st_.c, st_.S)
    for k in range(s.n_cells):
        own, other = metrics.decomposed_total_rate(s, st_.w, st_.c, st_.S, k)
        assert own + other == pytest.approx(total, rel=1e-12)
    assert total > 0


@given(seed=st.integers(0, 2**32 - 1))
def test_rates_nonnegative(seed):
    rng = np.random.default_rng(seed)
    f = crand(rng, 2, 3, 2, 2)
    w = crand(rng, 3, 2, 2)
    w[0] = 0
    rates = metrics.per_ue_rates(f, w, np.array([0, 0, 1]), 0.1)
    assert np.all(rates >= 0)
    assert rates[0] == 0


# ---------------------------------------------------------------------------
# Monte-Carlo aggregation
# ---------------------------------------------------------------------------


def test_constant_evaluator_zero_stderr():
    summ = metrics.monte_carlo(lambda s: 3.5, 10, seed=1)
    assert summ.mean == 3.5 and summ.stderr == 0.0 and summ.n_runs == 10


def _gauss(seed):
    return float(np.random.default_rng(seed).standard_normal())


def test_stderr_shrinks_with_runs():
    ratios = []
    for seed in range(20):
        a = metrics.monte_carlo(_gauss, 400, seed=seed).stderr
        b = metrics.monte_carlo(_gauss, 800, seed=seed + 1000).stderr
        ratios.append(a / b)
    assert np.mean(ratios) == pytest.approx(math.sqrt(2), rel=0.2)


def test_monte_carlo_deterministic_and_worker_independent():
    a = metrics.monte_carlo(_gauss, 16, seed=9)
    b = metrics.monte_carlo(_gauss, 16, seed=9, workers=2)
    np.testing.assert_array_equal(a.values, b.values)
    assert metrics.run_seeds(9, 4) == metrics.run_seeds(9, 8)[:4]


def test_monte_carlo_needs_runs():
    from bdris.scenario import ConfigError

    with pytest.raises(ConfigError):
        metrics.monte_carlo(_gauss, 0, seed=0)


def test_summary_csv(tmp_path):
    p = tmp_path / "s.csv"
    metrics.write_summary_csv(p, [(20.0, "sum_rate", 1.5, 0.1, 4)])
    assert p.read_text() == "sweep_point,metric,mean,stderr,n_runs\n20.0,sum_rate,1.5,0.1,4\n"
