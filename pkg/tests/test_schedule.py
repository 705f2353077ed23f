import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixdiff import (
    HybridSchedule,
    MaskOnlySchedule,
    ScheduleParams,
    Vocab,
    check_prob_vector,
    make_schedule,
)
from mixdiff.errors import (
    DegenerateStateError,
    OrderingError,
    TimeRangeError,
    UnsupportedStateError,
)

EPS = 1e-4
times = st.floats(min_value=EPS, max_value=1.0 - EPS, allow_nan=False)


def test_vocab_validation():
    with pytest.raises(ValueError):
        Vocab(2, 1)
    with pytest.raises(ValueError):
        Vocab(5, 5)
    v = Vocab(4, 3)
    assert v.mask_one_hot().tolist() == [0, 0, 0, 1]
    u = v.uniform_non_mask()
    assert u[3] == 0.0
    assert math.isclose(u.sum(), 1.0)


def test_check_prob_vector():
    check_prob_vector(np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        check_prob_vector(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        check_prob_vector(np.array([-0.1, 1.1]))
    with pytest.raises(ValueError):
        check_prob_vector(np.array([1.0]), size=2)


def test_schedule_params():
    p = ScheduleParams(p_u=0.2, gamma=1.0)
    assert math.isclose(p.B, 2.0 * 0.2 / 0.8)
    assert ScheduleParams(p_u=0.0).B == 0.0
    with pytest.raises(ValueError):
        ScheduleParams(p_u=1.0)
    with pytest.raises(ValueError):
        ScheduleParams(p_u=0.1, gamma=0.0)


def test_time_validation(mask_sched):
    with pytest.raises(TimeRangeError):
        mask_sched.alpha(0.0)
    with pytest.raises(TimeRangeError):
        mask_sched.log_snr(1.0)
    mask_sched.alpha(EPS)
    mask_sched.alpha(1.0 - EPS)


def test_hybrid_marginal_hand_values(hybrid_sched):
    # t = 0.5: c = 0.25, C = 1.25, alpha = 0.4, mask mass 0.4, uniform 0.05 each
    q = hybrid_sched.marginal(0.5, 0)
    np.testing.assert_allclose(q, [0.45, 0.05, 0.05, 0.05, 0.40], atol=1e-12)
    assert math.isclose(hybrid_sched.uniform_mass(0.5), 0.2, abs_tol=1e-15)


def test_marginal_limits(hybrid_sched):
    near_data = hybrid_sched.marginal(EPS, 2)
    assert near_data[2] > 0.99
    near_prior = hybrid_sched.marginal(1.0 - EPS, 2)
    assert near_prior[4] > 0.99


def test_conditional_transition_identity(mask_sched, hybrid_sched):
    for sched in (mask_sched, hybrid_sched):
        trans = sched.conditional_transition(0.3, 0.3)
        assert math.isclose(trans.alpha_ts, 1.0)
        np.testing.assert_allclose(trans.beta_pi_ts, 0.0, atol=1e-15)


def test_mask_only_transition_hand_values(mask_sched):
    trans = mask_sched.conditional_transition(0.25, 0.5)
    assert math.isclose(trans.alpha_ts, 2.0 / 3.0)
    assert math.isclose(trans.beta_pi_ts[4], 1.0 / 3.0)
    assert math.isclose(trans.alpha_ts + trans.beta_pi_ts.sum(), 1.0, abs_tol=1e-12)


def test_transition_ordering_error(mask_sched):
    with pytest.raises(OrderingError):
        mask_sched.conditional_transition(0.6, 0.4)


@settings(max_examples=60, deadline=None)
@given(ts=st.tuples(times, times, times), kind=st.sampled_from(["mask", "hybrid"]))
def test_transition_composition(ts, kind):
    sched = make_schedule(kind, Vocab(6, 5), p_u=0.2)
    r, s, t = sorted(ts)
    q_sr = sched.conditional_transition(r, s).matrix()
    q_ts = sched.conditional_transition(s, t).matrix()
    q_tr = sched.conditional_transition(r, t).matrix()
    np.testing.assert_allclose(q_ts @ q_sr, q_tr, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(ts=st.tuples(times, times), x=st.integers(0, 5), kind=st.sampled_from(["mask", "hybrid"]))
def test_marginal_consistency(ts, x, kind):
    sched = make_schedule(kind, Vocab(6, 5), p_u=0.15)
    s, t = sorted(ts)
    q = sched.conditional_transition(s, t).matrix()
    np.testing.assert_allclose(q @ sched.marginal(s, x), sched.marginal(t, x), atol=1e-12)


def test_columns_are_distributions(hybrid_sched):
    q = hybrid_sched.conditional_transition(0.2, 0.8).matrix()
    assert np.all(q >= -1e-12)
    np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-12)


def test_mask_forward_rate_hand_values(mask_sched):
    assert math.isclose(mask_sched.forward_rate(0.5, 0, 4), 2.0)
    assert math.isclose(mask_sched.forward_rate(0.5, 4, 4), 0.0)


@settings(max_examples=50, deadline=None)
@given(t=times, z=st.integers(0, 4), kind=st.sampled_from(["mask", "hybrid"]))
def test_generator_rows_sum_to_zero(t, z, kind):
    sched = make_schedule(kind, Vocab(5, 4), p_u=0.2)
    assert abs(sched.forward_rate_row(t, z).sum()) < 1e-10


def test_forward_rate_finite_difference(hybrid_sched):
    delta = 1e-6
    rng = np.random.default_rng(11)
    for _ in range(50):
        t = 0.05 + 0.9 * rng.random()
        fd = (hybrid_sched.conditional_transition(t, t + delta).matrix() - np.eye(5)) / delta
        for z_from in range(5):
            for z_to in range(5):
                r = hybrid_sched.forward_rate(t, z_from, z_to)
                assert abs(fd[z_to, z_from] - r) / max(abs(r), 1.0) < 1e-4


def test_backward_rate_rows_and_degenerate(mask_sched, hybrid_sched):
    rng = np.random.default_rng(3)
    for sched in (mask_sched, hybrid_sched):
        x_theta = rng.random(5)
        x_theta[4] = 0.0
        x_theta /= x_theta.sum()
        for z_t in range(5):
            q = sched.marginal_mix(0.4, x_theta)
            if q[z_t] <= 0:
                continue
            row = sum(sched.backward_rate(0.4, z_t, z_s, x_theta) for z_s in range(5))
            assert abs(row) < 1e-10
    one_hot = np.zeros(5)
    one_hot[1] = 1.0
    # mask-only: token 2 has zero model marginal when x_theta is one-hot at 1
    with pytest.raises(DegenerateStateError):
        mask_sched.backward_rate(0.4, 2, 1, one_hot)
    # one-hot truth, z_t = x: no backward flow away from x under mask-only
    for z_s in (0, 2, 3):
        assert mask_sched.backward_rate(0.4, 1, z_s, one_hot) == 0.0


def test_backward_kernel_small_delta(hybrid_sched):
    delta = 1e-6
    rng = np.random.default_rng(5)
    x_theta = rng.random(5)
    x_theta[4] = 0.0
    x_theta /= x_theta.sum()
    t = 0.37
    s = t - delta
    q_t = hybrid_sched.marginal_mix(t, x_theta)
    q_s = hybrid_sched.marginal_mix(s, x_theta)
    trans = hybrid_sched.conditional_transition(s, t)
    for z_t in range(5):
        for z_s in range(5):
            kernel = trans.prob(z_t, z_s) * q_s[z_s] / q_t[z_t]
            rate = hybrid_sched.backward_rate(t, z_t, z_s, x_theta)
            pred = (1.0 if z_s == z_t else 0.0) + rate * delta
            assert abs(kernel - pred) <= 1e-4 * max(abs(rate) * delta, delta)


def test_elbo_weight_hand_values(hybrid_sched, mask_sched):
    assert math.isclose(hybrid_sched.elbo_weight(0.5, 4, 0), 4.0, abs_tol=1e-12)
    assert math.isclose(hybrid_sched.elbo_weight(0.5, 1, 0), 2.0, abs_tol=1e-12)
    assert math.isclose(hybrid_sched.elbo_weight(0.5, 0, 0), 2.0 / 9.0, abs_tol=1e-12)
    assert math.isclose(mask_sched.elbo_weight(0.5, 4, 0), 4.0)
    assert mask_sched.elbo_weight(0.5, 0, 0) == 0.0
    with pytest.raises(UnsupportedStateError):
        mask_sched.elbo_weight(0.5, 1, 0)


@settings(max_examples=40, deadline=None)
@given(t=times, kind=st.sampled_from(["mask", "hybrid"]))
def test_weight_expectation_identity(t, kind):
    sched = make_schedule(kind, Vocab(5, 4), p_u=0.2)
    q = sched.marginal(t, 0)
    mean_w = sum(q[z] * sched.elbo_weight(t, z, 0) for z in range(5) if q[z] > 0)
    target = -sched.alpha_prime(t) / sched.alpha(t)
    assert abs(mean_w - target) <= 1e-10 * max(abs(target), 1.0)


def test_log_snr(hybrid_sched, mask_sched):
    assert math.isclose(mask_sched.log_snr(0.5), 0.0, abs_tol=1e-12)
    assert math.isclose(hybrid_sched.log_snr(0.5), math.log(2.0 / 3.0), abs_tol=1e-12)
    for sched in (mask_sched, hybrid_sched):
        grid = np.linspace(EPS, 1 - EPS, 1000)
        lam = np.array([sched.log_snr(t) for t in grid])
        assert np.all(np.diff(lam) < 0)


def test_uniform_mass_peaks_at_half():
    for p_u in (0.1, 0.2):
        sched = make_schedule("hybrid", Vocab(5, 4), p_u=p_u)
        peak = sched.uniform_mass(0.5)
        assert peak == pytest.approx(p_u, abs=1e-15)
        grid = np.linspace(EPS, 1 - EPS, 200)
        assert max(sched.uniform_mass(t) for t in grid) <= peak + 1e-12


def test_pu_zero_collapses_to_mask_only():
    vocab = Vocab(6, 5)
    mask = MaskOnlySchedule(vocab)
    hyb = HybridSchedule(vocab, ScheduleParams(p_u=0.0))
    rng = np.random.default_rng(7)
    for _ in range(100):
        s, t = np.sort(EPS + (1 - 2 * EPS) * rng.random(2))
        x = int(rng.integers(6))
        np.testing.assert_allclose(mask.marginal(t, x), hyb.marginal(t, x), atol=1e-14)
        np.testing.assert_allclose(
            mask.conditional_transition(s, t).matrix(),
            hyb.conditional_transition(s, t).matrix(),
            atol=1e-14,
        )
        np.testing.assert_allclose(mask.rate_vector(t), hyb.rate_vector(t), atol=1e-14)


def test_make_schedule_rejects_unknown():
    with pytest.raises(ValueError):
        make_schedule("linear", Vocab(3, 2))
