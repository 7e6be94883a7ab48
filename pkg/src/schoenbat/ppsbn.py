"""Pre/post scaling batch normalization around random-feature attention.

``pre_sbn`` standardizes Q or K per column and divides by the Frobenius norm
of the standardized matrix, which puts every row inside the unit l2 ball.
``post_sbn`` rescales the attention output by ``gamma * sign(x) |x|^beta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .attention import AttentionInput, DenomPolicy, rmfa_detailed, softmax_attention
from .errors import FitDegenerateError, NonFiniteError
from .kernels import KernelId
from .linalg import Matrix, as_matrix
from .rmf import RmfFeatureMap

DEFAULT_EPSILON = 1e-13


@dataclass(frozen=True)
class SbnStats:
    mu: np.ndarray  # column means
    sigma: np.ndarray  # column variances (divide by n)
    scalar_norm: float  # Frobenius norm of the standardized matrix, before the epsilon guard
    epsilon: float

    @property
    def divisor(self) -> float:
        """The scalar the standardized matrix was divided by."""
        return max(self.scalar_norm, self.epsilon)


@dataclass(frozen=True)
class PostSbnParams:
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.gamma > 0 and self.beta > 0 and math.isfinite(self.gamma) and math.isfinite(self.beta)):
            raise ValueError(f"gamma and beta must be finite and positive, got {self.gamma}, {self.beta}")


@dataclass(frozen=True)
class RestorationParams:
    r: float
    s: Matrix  # (n, d)
    t: Matrix  # (n, n)


def standardize(X, epsilon: float = DEFAULT_EPSILON):
    X = as_matrix(X)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mu = X.mean(axis=0)
    centered = X - mu
    # a constant column centers to exactly zero even when its float mean is off by an ulp
    centered[:, np.ptp(X, axis=0) == 0] = 0.0
    sigma = (centered**2).mean(axis=0)
    return centered / np.sqrt(sigma + epsilon), mu, sigma


def pre_sbn(X, epsilon: float = DEFAULT_EPSILON):
    """Return ``(X_sbn, stats)`` with every row of ``X_sbn`` of l2 norm at most 1."""
    Xp, mu, sigma = standardize(X, epsilon)
    norm = float(np.linalg.norm(Xp))
    stats = SbnStats(mu, sigma, norm, epsilon)
    return Xp / stats.divisor, stats


def signed_power(x, beta: float):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.abs(x) ** beta


def post_sbn(att, params: PostSbnParams = PostSbnParams()) -> Matrix:
    return params.gamma * signed_power(att, params.beta)


def fit_post_params(att_sbn, att_target, floor: float = 1e-6) -> PostSbnParams:
    """Least-squares fit of ``log|y| = log(gamma) + beta log|x|`` over entries with ``|x| > floor``."""
    x = np.abs(np.asarray(att_sbn, dtype=np.float64)).ravel()
    y = np.abs(np.asarray(att_target, dtype=np.float64)).ravel()
    if x.shape != y.shape:
        raise FitDegenerateError(f"shape mismatch: {np.shape(att_sbn)} vs {np.shape(att_target)}")
    keep = (x > floor) & (y > 0)
    if keep.sum() < 2:
        raise FitDegenerateError(f"only {int(keep.sum())} usable entries; need at least 2")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if np.ptp(lx) == 0:
        raise FitDegenerateError("all usable entries have the same magnitude; exponent is not identifiable")
    design = np.column_stack([np.ones_like(lx), lx])
    (log_gamma, beta), *_ = np.linalg.lstsq(design, ly, rcond=None)
    try:
        return PostSbnParams(float(np.exp(log_gamma)), float(beta))
    except ValueError as exc:
        raise FitDegenerateError(f"fit produced invalid parameters: {exc}") from None


def restoration_exponent(q_stats: SbnStats, k_stats: SbnStats, per_column: bool = False):
    """Scalar ``r``: product of the two normalizing norms and the variance correction.

    The per-column terms ``sqrt((sigma_Q + eps)(sigma_K + eps))`` are averaged to a
    scalar; ``per_column=True`` returns the length-d vector instead.
    """
    corr = np.sqrt((q_stats.sigma + q_stats.epsilon) * (k_stats.sigma + k_stats.epsilon))
    scale = q_stats.divisor * k_stats.divisor
    return scale * corr if per_column else float(scale * corr.mean())


def ideal_restoration_params(inp: AttentionInput, epsilon: float = DEFAULT_EPSILON, stats=None) -> RestorationParams:
    """Restoration quantities ``r, s, t`` relating exp attention before and after pre-SBN.

    ``stats`` may supply precomputed ``(q_stats, k_stats)``; by default they come
    from :func:`pre_sbn` on Q and K.

    t[a, b] = sum_i exp((q_a.k_i - mu.k_i) / (r sqrt d)) / sum_i exp((q_a.k_i - mu.k_b) / (r sqrt d))
    s       = (||E||_{1/r} / ||E||_1) * V^(r-1),  E = exp(Q K^T / sqrt d), entrywise norms

    ``t`` is built from an (n, n, n) intermediate, so keep n at diagnostic sizes.
    Sums are taken in log space so a tiny ``r`` (one row) stays finite.
    """
    if stats is None:
        q_stats = pre_sbn(inp.Q, epsilon)[1]
        k_stats = pre_sbn(inp.K, epsilon)[1]
    else:
        q_stats, k_stats = stats
    r = restoration_exponent(q_stats, k_stats)
    if not (r > 0 and math.isfinite(r)):
        raise NonFiniteError(f"restoration exponent r={r} is not a positive finite number")
    denom = r * math.sqrt(inp.d)
    qk = inp.Q @ inp.K.T  # qk[a, i]
    mk = inp.K @ q_stats.mu  # mu . k_i
    # log space keeps tiny r (e.g. a single row, where the divisor is epsilon) finite
    log_top = logsumexp((qk - mk[None, :]) / denom, axis=1)  # (n,)
    log_bottom = logsumexp((qk[:, :, None] - mk[None, None, :]) / denom, axis=1)  # (n, n) over i
    logits = qk / math.sqrt(inp.d)
    with np.errstate(over="ignore"):
        E = np.exp(logits)
        t = np.exp(log_top[:, None] - log_bottom)
        norm_r = float(np.exp(r * logsumexp(logits / r)))
    with np.errstate(invalid="ignore", over="ignore"):
        s = (norm_r / E.sum()) * signed_power(inp.V, r - 1.0)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t)) and math.isfinite(norm_r) and np.all(np.isfinite(E))):
        raise NonFiniteError("restoration parameters are not finite; use inputs inside the unit ball")
    return RestorationParams(r, s, t)


def restoration_residual(inp: AttentionInput, params: RestorationParams, epsilon: float = DEFAULT_EPSILON) -> float:
    """Max |lhs - rhs| of the exp restoration identity, evaluated with exact attention.

    lhs = attn_exp(Q_sbn, K_sbn, V); rhs = (1/t) [(1/s) * attn_exp(Q, K, V)]^(1/r),
    with the (n, n) matrix t reduced to its row means so it scales each output row.
    """
    q_sbn, _ = pre_sbn(inp.Q, epsilon)
    k_sbn, _ = pre_sbn(inp.K, epsilon)
    lhs = softmax_attention(AttentionInput(q_sbn, k_sbn, inp.V))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inner = softmax_attention(inp) / params.s
        rhs = signed_power(inner, 1.0 / params.r) / params.t.mean(axis=1, keepdims=True)
    return float(np.max(np.abs(lhs - rhs)))


@dataclass
class SchoenbatResult:
    output: Matrix
    q_stats: SbnStats
    k_stats: SbnStats
    degeneracies: int


def schoenbat_detailed(
    fmap: RmfFeatureMap,
    inp: AttentionInput,
    post: PostSbnParams = PostSbnParams(),
    epsilon: float = DEFAULT_EPSILON,
    policy: DenomPolicy = DenomPolicy(),
) -> SchoenbatResult:
    q_sbn, q_stats = pre_sbn(inp.Q, epsilon)
    k_sbn, k_stats = pre_sbn(inp.K, epsilon)
    res = rmfa_detailed(fmap, AttentionInput(q_sbn, k_sbn, inp.V), policy)
    return SchoenbatResult(post_sbn(res.output, post), q_stats, k_stats, res.degeneracies)


def schoenbat(
    k,
    inp: AttentionInput,
    fmap: RmfFeatureMap,
    post: PostSbnParams = PostSbnParams(),
    epsilon: float = DEFAULT_EPSILON,
    policy: DenomPolicy = DenomPolicy(),
) -> Matrix:
    """pre-SBN on Q and K, RMFA with ``fmap``, then post-SBN; same I/O as exact attention."""
    if KernelId.parse(k) is not fmap.params.kernel:
        raise ValueError(f"feature map was sampled for {fmap.params.kernel.value}, not {KernelId.parse(k).value}")
    return schoenbat_detailed(fmap, inp, post, epsilon, policy).output
