import numpy as np
import pytest

from mixdiff import (
    OracleDenoiser,
    SamplerConfig,
    SelfCorrectConfig,
    ToyDistribution,
    Vocab,
    adapt_distribution,
    ancestral_sample,
    ancestral_sample_batch,
    denoise_step,
    make_schedule,
    self_correct,
)
from mixdiff.denoiser import Denoiser
from mixdiff.errors import EmptySupportError, MaskedInputError, OrderingError


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(num_steps=0)
    with pytest.raises(ValueError):
        SamplerConfig(temperature=0.0)
    with pytest.raises(ValueError):
        SamplerConfig(min_p=1.0)
    grid = SamplerConfig(num_steps=16).time_grid()
    assert len(grid) == 17
    assert np.all(np.diff(grid) > 0)
    assert grid[0] == pytest.approx(1e-4)
    assert grid[-1] == pytest.approx(1 - 1e-4)


def test_adapt_distribution_identity():
    p = np.array([0.7, 0.2, 0.1])
    np.testing.assert_array_equal(adapt_distribution(p, 1.0, 0.0), p)


def test_adapt_distribution_min_p():
    out = adapt_distribution(np.array([0.7, 0.2, 0.1]), 1.0, 0.15)
    np.testing.assert_allclose(out, [7 / 9, 2 / 9, 0.0], atol=1e-12)
    with pytest.raises(EmptySupportError):
        adapt_distribution(np.array([0.4, 0.3, 0.3]), 1.0, 0.5)


def test_adapt_distribution_zero_temperature_limit():
    p = np.array([0.3, 0.4, 0.3])
    np.testing.assert_array_equal(adapt_distribution(p, 1e-12), [0.0, 1.0, 0.0])
    # exact tie: lowest index wins
    p = np.array([0.4, 0.4, 0.2])
    np.testing.assert_array_equal(adapt_distribution(p, 1e-12), [1.0, 0.0, 0.0])


def test_adapt_distribution_temperature_sharpens():
    p = np.array([0.6, 0.4])
    sharp = adapt_distribution(p, 0.5)
    assert sharp[0] > 0.6
    assert sharp.sum() == pytest.approx(1.0)


class _FixedPrediction(Denoiser):
    """Denoiser stub returning the same row at every position."""

    def __init__(self, row):
        self.row = np.asarray(row, dtype=float)

    def predict(self, z_seq, t):
        return np.tile(self.row, (len(z_seq), 1))


class _FixedUniforms:
    def __init__(self, u):
        self.u = float(u)

    def random(self, n):
        return np.full(n, self.u)


def _step_probabilities(sched, z_t, t_from, t_to, denoiser, tol=1e-14):
    """Recover the sampler's per-token categorical by bisecting the inverse CDF."""
    config = SamplerConfig(num_steps=1)
    n = sched.vocab.size

    def draw(u):
        out = denoise_step(
            sched, np.array([z_t]), t_from, t_to, denoiser, config, _FixedUniforms(u)
        )
        return int(out[0])

    boundaries = []
    for k in range(n - 1):
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if draw(mid) <= k:
                lo = mid
            else:
                hi = mid
        boundaries.append(0.5 * (lo + hi))
    cdf = np.array(boundaries + [1.0])
    return np.diff(np.concatenate([[0.0], cdf]))


def test_denoise_step_matches_brute_force_kernel():
    """The sampled categorical equals the one-step backward kernel."""
    rng = np.random.default_rng(17)
    vocab = Vocab(5, 4)
    for kind in ("mask", "hybrid"):
        sched = make_schedule(kind, vocab, p_u=0.2)
        for _ in range(8):
            t_to, t_from = np.sort(1e-3 + 0.998 * rng.random(2))
            x_theta = rng.random(5)
            x_theta[4] = 0.0
            x_theta /= x_theta.sum()
            denoiser = _FixedPrediction(x_theta)
            q_to = sched.marginal_mix(t_to, x_theta)
            trans = sched.conditional_transition(t_to, t_from)
            for z_t in range(5):
                kernel = np.array(
                    [trans.prob(z_t, z_s) * q_to[z_s] for z_s in range(5)]
                )
                if kernel.sum() <= 0:
                    continue
                kernel /= kernel.sum()
                got = _step_probabilities(sched, z_t, float(t_from), float(t_to), denoiser)
                np.testing.assert_allclose(got, kernel, atol=1e-12)


def test_denoise_step_no_op_when_times_equal(two_outcome):
    sched = make_schedule("hybrid", two_outcome.vocab, p_u=0.2)
    oracle = OracleDenoiser(two_outcome, sched)
    z = np.array([2, 0])
    out = denoise_step(
        sched, z, 0.4, 0.4, oracle, SamplerConfig(num_steps=1), np.random.default_rng(0)
    )
    np.testing.assert_array_equal(out, z)


def test_denoise_step_ordering_error(two_outcome):
    sched = make_schedule("mask", two_outcome.vocab)
    oracle = OracleDenoiser(two_outcome, sched)
    with pytest.raises(OrderingError):
        denoise_step(
            sched,
            np.array([2, 2]),
            0.2,
            0.8,
            oracle,
            SamplerConfig(num_steps=1),
            np.random.default_rng(0),
        )


def test_one_step_recovery_mask_only(vocab3):
    """A perfect denoiser recovers the truth in one full-range step."""
    dist = ToyDistribution(vocab3, 2, (((0, 1), 1.0),))
    sched = make_schedule("mask", vocab3)
    oracle = OracleDenoiser(dist, sched)
    config = SamplerConfig(num_steps=1)
    rng = np.random.default_rng(0)
    hits = 0
    trials = 500
    for _ in range(trials):
        out = denoise_step(
            sched, np.array([2, 2]), 1 - 1e-4, 1e-4, oracle, config, rng
        )
        hits += int(np.array_equal(out, [0, 1]))
    # per-token unmask probability is (1 - 2 eps) / (1 - eps) > 1 - 1e-3
    assert hits / trials > 0.99


def test_ancestral_sample_single_outcome(vocab3):
    dist = ToyDistribution(vocab3, 2, (((1, 0), 1.0),))
    sched = make_schedule("mask", vocab3)
    oracle = OracleDenoiser(dist, sched)
    out = ancestral_sample(sched, 2, oracle, SamplerConfig(num_steps=1, seed=0))
    np.testing.assert_array_equal(out, [1, 0])


def test_ancestral_sample_deterministic(two_outcome):
    sched = make_schedule("hybrid", two_outcome.vocab, p_u=0.05)
    oracle = OracleDenoiser(two_outcome, sched)
    config = SamplerConfig(num_steps=16, seed=42)
    a = ancestral_sample_batch(sched, 2, oracle, config, 8)
    b = ancestral_sample_batch(sched, 2, oracle, config, 8)
    np.testing.assert_array_equal(a, b)


def test_ancestral_sample_batch_split_invariant(two_outcome):
    """Row i of a batch equals a single-sequence run with seed ^ i."""
    sched = make_schedule("hybrid", two_outcome.vocab, p_u=0.05)
    oracle = OracleDenoiser(two_outcome, sched)
    batch = ancestral_sample_batch(
        sched, 2, oracle, SamplerConfig(num_steps=16, seed=5), 4
    )
    for i in range(4):
        single = ancestral_sample_batch(
            sched, 2, oracle, SamplerConfig(num_steps=16, seed=5 ^ i), 1
        )
        np.testing.assert_array_equal(batch[i], single[0])


def test_ancestral_sample_two_outcome_frequencies(two_outcome):
    sched = make_schedule("hybrid", two_outcome.vocab, p_u=0.01)
    oracle = OracleDenoiser(two_outcome, sched)
    samples = ancestral_sample_batch(
        sched, 2, oracle, SamplerConfig(num_steps=128, seed=7), 4000
    )
    zero_freq = np.mean([tuple(s) == (0, 0) for s in samples])
    sigma = 0.5 / np.sqrt(4000)
    assert abs(zero_freq - 0.5) < 3 * sigma + 0.01  # small slack for residual noise


def test_self_correct_config_validation():
    with pytest.raises(ValueError):
        SelfCorrectConfig(patience=0)
    with pytest.raises(ValueError):
        SelfCorrectConfig(temperature=0.0)


def test_self_correct_fixed_point(two_outcome):
    sched = make_schedule("hybrid", two_outcome.vocab, p_u=0.2)
    oracle = OracleDenoiser(two_outcome, sched)
    result = self_correct(
        np.array([0, 0]),
        oracle,
        SelfCorrectConfig(temperature=1e-12, seed=0),
        two_outcome.vocab.mask_id,
    )
    assert result.converged
    assert result.iterations == 1
    assert result.edits == 0
    np.testing.assert_array_equal(result.sequence, [0, 0])


def test_self_correct_repairs_single_corruption(vocab3):
    dist = ToyDistribution(vocab3, 4, (((0, 0, 0, 0), 0.5), ((1, 1, 1, 1), 0.5)))
    sched = make_schedule("hybrid", vocab3, p_u=0.2)
    oracle = OracleDenoiser(dist, sched)
    result = self_correct(
        np.array([0, 0, 1, 0]),
        oracle,
        SelfCorrectConfig(temperature=0.1, seed=1),
        vocab3.mask_id,
    )
    np.testing.assert_array_equal(result.sequence, [0, 0, 0, 0])
    assert result.iterations <= 3
    assert len(result.self_accuracy_trajectory) == result.iterations


def test_self_correct_rejects_masked_input(two_outcome_oracle):
    oracle, _ = two_outcome_oracle
    with pytest.raises(MaskedInputError):
        self_correct(np.array([2, 0]), oracle, SelfCorrectConfig(), 2)
