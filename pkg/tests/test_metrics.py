import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixdiff import (
    OracleDenoiser,
    ToyDistribution,
    Vocab,
    generative_nll,
    make_schedule,
    self_accuracy,
    tv_distance,
    unigram_entropy,
)
from mixdiff.metrics import MetricsReport, tv_distance_exact
from mixdiff.denoiser import Denoiser
from mixdiff.errors import MaskedInputError


class _OneHot(Denoiser):
    def __init__(self, target):
        self.target = np.asarray(target)

    def predict(self, z_seq, t):
        out = np.zeros((len(z_seq), 3))
        out[np.arange(len(z_seq)), self.target] = 1.0
        return out


def test_self_accuracy_extremes():
    z = np.array([0, 1, 0])
    assert self_accuracy(z, _OneHot([0, 1, 0]), 0.5) == 1.0
    assert self_accuracy(z, _OneHot([1, 0, 1]), 0.5) == 0.0


def test_self_accuracy_oracle_on_valid_outcome(two_outcome):
    sched = make_schedule("mask", two_outcome.vocab)
    oracle = OracleDenoiser(two_outcome, sched)
    assert self_accuracy(np.array([1, 1]), oracle, sched.eps_t) == 1.0


def test_self_accuracy_rejects_mask():
    with pytest.raises(MaskedInputError):
        self_accuracy(np.array([0, 2]), _OneHot([0, 0]), 0.5, mask_id=2)


def test_unigram_entropy():
    assert unigram_entropy([3, 3, 3, 3]) == 0.0
    assert unigram_entropy([0, 1, 2, 3]) == pytest.approx(math.log(4))
    assert unigram_entropy([1, 1, 2, 2]) == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        unigram_entropy([])


def test_unigram_entropy_bounded_by_log_length():
    rng = np.random.default_rng(0)
    for _ in range(50):
        length = int(rng.integers(1, 10))
        seq = rng.integers(0, 6, size=length)
        assert unigram_entropy(seq) <= math.log(length) + 1e-12


def test_tv_distance_extremes(two_outcome):
    exact = [(0, 0)] * 5 + [(1, 1)] * 5
    assert tv_distance(exact, two_outcome) == pytest.approx(0.0, abs=1e-15)
    assert tv_distance([(0, 1)] * 4, two_outcome) == 1.0
    half = tv_distance([(0, 0)] * 10, two_outcome)
    assert half == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_tv_triangle_sanity(data):
    vocab = Vocab(3, 2)
    raw_a = data.draw(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=2))
    raw_b = data.draw(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=2))
    a = ToyDistribution(
        vocab, 1, (((0,), raw_a[0] / sum(raw_a)), ((1,), raw_a[1] / sum(raw_a)))
    )
    b = ToyDistribution(
        vocab, 1, (((0,), raw_b[0] / sum(raw_b)), ((1,), raw_b[1] / sum(raw_b)))
    )
    samples = data.draw(
        st.lists(st.sampled_from([(0,), (1,)]), min_size=1, max_size=20)
    )
    assert tv_distance(samples, a) <= tv_distance(samples, b) + tv_distance_exact(b, a) + 1e-12


def test_generative_nll(two_outcome):
    nll, out = generative_nll([(0, 0), (1, 1)], two_outcome)
    assert nll == pytest.approx(math.log(2))
    assert out == 0
    nll, out = generative_nll([(0, 0), (0, 1)], two_outcome)
    assert out == 1
    assert nll == pytest.approx(math.log(2))


def test_generative_nll_delta():
    vocab = Vocab(3, 2)
    delta = ToyDistribution(vocab, 2, (((1, 0), 1.0),))
    nll, out = generative_nll([(1, 0)] * 3, delta)
    assert nll == 0.0 and out == 0


def test_generative_nll_floor(two_outcome):
    nll, out = generative_nll([(0, 1)], two_outcome, floor=1e-30)
    assert out == 1
    assert nll == pytest.approx(-math.log(1e-30))


def test_metrics_report_as_dict():
    report = MetricsReport(self_accuracy=0.9, sample_count=4)
    d = report.as_dict()
    assert d["self_accuracy"] == 0.9
    assert "tv_distance" not in d
