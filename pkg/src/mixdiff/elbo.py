"""Per-token diffusion loss, weighting schemes, and Monte Carlo NELBO.

The per-token loss is w_t(z_t, x) * (KL + pointwise IS) where both divergences
compare the true marginal q_t(. | x) against the model marginal
q_t(. | x_theta) = alpha_t x_theta + beta_t pi_t. The weight can be the exact
schedule weight, a clamped version, or the dynamic scheme that keeps the
relative weights between mask / uniform / noise-free tokens while bounding the
maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MixdiffError
from .schedule import LOG_FLOOR, MixingSchedule

DEFAULT_WEIGHT_CLIP = 1e4


@dataclass(frozen=True)
class WeightingMode:
    """One of exact / clamp / dynamic, with the cap w_max where applicable."""

    kind: str
    w_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exact", "clamp", "dynamic"):
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if self.w_max <= 0:
            raise ValueError("w_max must be positive")


EXACT = WeightingMode("exact")
CLAMP = WeightingMode("clamp")
DYNAMIC = WeightingMode("dynamic")


@dataclass(frozen=True)
class LossBreakdown:
    weight: float
    kl: float
    is_term: float

    @property
    def total(self) -> float:
        return self.weight * (self.kl + self.is_term)


@dataclass(frozen=True)
class NelboEstimate:
    mean_per_token: float
    std_error: float
    num_mc_samples: int
    # Boundary terms vanish at the clamped endpoints; the constant is fixed at 0.
    constant: float = 0.0

    @property
    def ppl(self) -> float:
        return math.exp(self.mean_per_token)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum p log(p/q) with 0 log 0 := 0; log arguments floored at 1e-30."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    support = p > 0
    qs = np.maximum(q[support], LOG_FLOOR)
    return float(np.sum(p[support] * (np.log(np.maximum(p[support], LOG_FLOOR)) - np.log(qs))))


def is_divergence_pointwise(p_val: float, q_val: float) -> float:
    """Pointwise Itakura-Saito divergence p/q - log(p/q) - 1."""
    if p_val <= 0 or q_val <= 0:
        raise ValueError("pointwise IS divergence needs positive arguments")
    r = p_val / q_val
    return r - math.log(r) - 1.0


def loss_weight(
    schedule: MixingSchedule,
    t: float,
    z_t: int,
    x: int,
    mode: WeightingMode = EXACT,
    weight_clip: float | None = DEFAULT_WEIGHT_CLIP,
) -> float:
    """Resolve the per-token weight for the given mode.

    Exact weights are clipped at `weight_clip` (training-stability guard)
    unless it is None.
    """
    if mode.kind == "dynamic":
        lam = schedule.log_snr(t)
        b = schedule.uniform_mix_constant
        n = schedule.vocab.size
        w = 1.0
        if z_t == schedule.vocab.mask_id:
            w += 1.0
        if z_t == x:
            w += (b / n) * math.exp(-lam / 2.0) - 1.0
        return mode.w_max * w
    w = schedule.elbo_weight(t, z_t, x)
    if weight_clip is not None:
        w = min(w, weight_clip)
    if mode.kind == "clamp":
        w = min(mode.w_max, w)
    return w


def per_token_loss(
    schedule: MixingSchedule,
    t: float,
    z_t: int,
    x: int,
    x_theta: np.ndarray,
    mode: WeightingMode = EXACT,
    weight_clip: float | None = DEFAULT_WEIGHT_CLIP,
) -> LossBreakdown:
    q_true = schedule.marginal(t, x)
    q_model = schedule.marginal_mix(t, x_theta)
    w = loss_weight(schedule, t, z_t, x, mode, weight_clip)
    kl = kl_divergence(q_true, q_model)
    is_term = is_divergence_pointwise(
        max(q_true[z_t], LOG_FLOOR), max(q_model[z_t], LOG_FLOOR)
    )
    return LossBreakdown(weight=w, kl=kl, is_term=is_term)


def mdm_loss(
    schedule: MixingSchedule, t: float, z_t: int, x: int, x_theta: np.ndarray
) -> float:
    """Masked-diffusion reference loss: (alpha'/(1-alpha)) delta_{z_t,m} log x_theta[x].

    Only meaningful for mask-only noise; nonnegative since alpha' < 0.
    """
    if z_t != schedule.vocab.mask_id:
        return 0.0
    t = schedule.check_time(t)
    a = schedule.alpha(t)
    ap = schedule.alpha_prime(t)
    return float(ap / (1.0 - a) * math.log(max(x_theta[x], LOG_FLOOR)))


def stratified_times(num_mc: int, offset: float, eps_t: float) -> np.ndarray:
    """Low-discrepancy time grid: one shared uniform offset per batch."""
    idx = np.arange(num_mc, dtype=float)
    return eps_t + (1.0 - 2.0 * eps_t) * (idx + offset) / num_mc


def noise_sequence(
    schedule: MixingSchedule, x_seq: np.ndarray, t: float, rng: np.random.Generator
) -> np.ndarray:
    """Independently resample every token from its forward marginal at t."""
    x_seq = np.asarray(x_seq, dtype=np.int64)
    n = schedule.vocab.size
    q = schedule.beta_pi(t)[np.newaxis, :].repeat(len(x_seq), axis=0)
    q[np.arange(len(x_seq)), x_seq] += schedule.alpha(t)
    cdf = np.cumsum(q, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(len(x_seq))
    return np.minimum((u[:, None] > cdf).sum(axis=1), n - 1).astype(np.int64)


def sequence_nelbo(
    schedule: MixingSchedule,
    x_seq,
    denoiser,
    num_mc: int,
    seed: int = 0,
    mode: WeightingMode = EXACT,
    weight_clip: float | None = DEFAULT_WEIGHT_CLIP,
) -> NelboEstimate:
    """Monte Carlo estimate of the per-token NELBO of one sequence.

    Times are drawn by a stratified low-discrepancy rule with a single shared
    offset; per-position noisy tokens are independent. Results are
    deterministic for a fixed seed.
    """
    x_seq = np.asarray(x_seq, dtype=np.int64)
    if x_seq.size == 0:
        raise MixdiffError("cannot estimate the NELBO of an empty sequence")
    if num_mc < 1:
        raise ValueError("num_mc must be >= 1")
    rng = np.random.default_rng(seed)
    times = stratified_times(num_mc, rng.random(), schedule.eps_t)
    per_sample = np.empty(num_mc)
    for s, t in enumerate(times):
        z_seq = noise_sequence(schedule, x_seq, t, rng)
        preds = denoiser.predict(z_seq, t)
        tok = 0.0
        for i in range(len(x_seq)):
            tok += per_token_loss(
                schedule, t, int(z_seq[i]), int(x_seq[i]), preds[i], mode, weight_clip
            ).total
        per_sample[s] = tok / len(x_seq)
    mean = float(per_sample.mean())
    if num_mc > 1:
        se = float(per_sample.std(ddof=1) / math.sqrt(num_mc))
    else:
        se = 0.0
    return NelboEstimate(mean_per_token=mean, std_error=se, num_mc_samples=num_mc)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def per_token_loss_grad(
    schedule: MixingSchedule,
    t: float,
    z_t: int,
    x: int,
    logits: np.ndarray,
    mode: WeightingMode = EXACT,
    weight_clip: float | None = DEFAULT_WEIGHT_CLIP,
) -> np.ndarray:
    """Exact gradient of per_token_loss(...).total w.r.t. denoiser logits.

    Derived through q_t(. | x_theta) = alpha_t softmax(logits) + beta_t pi_t;
    the weight does not depend on the logits in any mode.
    """
    logits = np.asarray(logits, dtype=float)
    s = _softmax(logits)
    q_true = schedule.marginal(t, x)
    q_model = schedule.marginal_mix(t, s)
    w = loss_weight(schedule, t, z_t, x, mode, weight_clip)
    # d(KL)/dq_model = -q_true / q_model; d(IS)/dq_model[z_t] = 1/q - p/q^2.
    g_q = -q_true / q_model
    g_q[z_t] += 1.0 / q_model[z_t] - q_true[z_t] / q_model[z_t] ** 2
    g_s = schedule.alpha(t) * w * g_q
    return s * (g_s - float(s @ g_s))
