"""Exact dot-product kernelized attention and its random-feature approximation.

Both paths take ``Q, K, V`` of shape (n, d) and return (n, d). The exact path
builds the full n x n kernel matrix (Theta(n^2 d)); RMFA factors it through a
feature map so the cost is Theta(n d D).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRowError, DimensionError, KernelDomainError
from .kernels import KernelId, get_kernel
from .linalg import Matrix, as_matrix
from .rmf import RmfFeatureMap, apply_feature_map


@dataclass(frozen=True)
class AttentionInput:
    Q: Matrix
    K: Matrix
    V: Matrix

    def __post_init__(self):
        for name in ("Q", "K", "V"):
            object.__setattr__(self, name, as_matrix(getattr(self, name)))
        if not (self.Q.shape == self.K.shape == self.V.shape):
            raise DimensionError(f"Q, K, V shapes differ: {self.Q.shape}, {self.K.shape}, {self.V.shape}")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def d(self) -> int:
        return self.Q.shape[1]


class OnDegenerate(enum.Enum):
    CLAMP = "clamp"
    ERROR = "error"


@dataclass(frozen=True)
class DenomPolicy:
    guard: float = 1e-8
    on_degenerate: OnDegenerate = OnDegenerate.CLAMP

    def __post_init__(self):
        if not self.guard > 0:
            raise ValueError("denominator guard must be positive")


@dataclass
class RmfaResult:
    output: Matrix
    numerator: Matrix  # (n, d)
    denominator: np.ndarray  # (n,) before the guard is applied
    degeneracies: int


def _logits(inp: AttentionInput) -> Matrix:
    return (inp.Q @ inp.K.T) / math.sqrt(inp.d)


def kernel_matrix(k, inp: AttentionInput) -> Matrix:
    """``K(<Q_i, K_j> / sqrt(d))`` for all pairs, with domain validation."""
    kern = get_kernel(k)
    z = _logits(inp)
    if kern.bounded:
        bad = np.abs(z) >= kern.domain_radius
        if np.any(bad):
            i, j = (int(v) for v in np.argwhere(bad)[0])
            raise KernelDomainError(
                f"{kern.name} kernel needs |<Q_i, K_j>|/sqrt(d) < {kern.domain_radius}; "
                f"pair ({i}, {j}) gives {z[i, j]:.6g}",
                radius=kern.domain_radius,
                where=(i, j),
            )
    return kern.closed_form(z)


def exact_terms(k, inp: AttentionInput):
    """Unnormalized numerator (n, d) and per-row normalizer (n,) of exact attention."""
    W = kernel_matrix(k, inp)
    return W @ inp.V, W.sum(axis=1)


def attention_weights(k, inp: AttentionInput) -> Matrix:
    W = kernel_matrix(k, inp)
    denom = W.sum(axis=1, keepdims=True)
    zero = np.flatnonzero(denom[:, 0] == 0)
    if zero.size:
        raise DegenerateRowError(f"rows {zero.tolist()} have zero total kernel weight", rows=zero.tolist())
    return W / denom


def exact_kernelized_attention(k, inp: AttentionInput) -> Matrix:
    return attention_weights(k, inp) @ inp.V


def softmax_attention(inp: AttentionInput) -> Matrix:
    """Kernelized attention with the exp kernel, computed with row-max subtraction."""
    z = _logits(inp)
    z -= z.max(axis=1, keepdims=True)
    W = np.exp(z)
    return (W / W.sum(axis=1, keepdims=True)) @ inp.V


def rmfa_terms(fmap: RmfFeatureMap, inp: AttentionInput):
    """Random-feature numerator (n, d) and normalizer (n,), before division.

    Inputs are scaled by d^(-1/4) so that feature inner products estimate
    ``K(<Q_i, K_j> / sqrt(d))``.
    """
    if fmap.params.d != inp.d:
        raise DimensionError(f"feature map has d={fmap.params.d}, inputs have d={inp.d}")
    scale = inp.d ** -0.25
    phi_q = apply_feature_map(fmap, inp.Q * scale)
    phi_k = apply_feature_map(fmap, inp.K * scale)
    # sum_i phi_k[i]^T (x) V_i as one (D, d) product; z = sum_j phi_k[j]
    kv = phi_k.T @ inp.V
    z = phi_k.sum(axis=0)
    return phi_q @ kv, phi_q @ z


def rmfa_detailed(fmap: RmfFeatureMap, inp: AttentionInput, policy: DenomPolicy = DenomPolicy()) -> RmfaResult:
    numerator, denominator = rmfa_terms(fmap, inp)
    small = np.abs(denominator) < policy.guard
    count = int(small.sum())
    if count and policy.on_degenerate is OnDegenerate.ERROR:
        rows = np.flatnonzero(small).tolist()
        raise DegenerateRowError(f"RMFA normalizer below {policy.guard} in rows {rows}", rows=rows)
    guarded = np.where(small, np.where(denominator < 0, -policy.guard, policy.guard), denominator)
    return RmfaResult(numerator / guarded[:, None], numerator, denominator, count)


def rmfa(fmap: RmfFeatureMap, inp: AttentionInput, policy: DenomPolicy = DenomPolicy()) -> Matrix:
    return rmfa_detailed(fmap, inp, policy).output


def count_flops(n: int, d: int, D: int, avg_degree: float = 1.0):
    """Multiply-add style operation counts ``(exact, rmfa)`` for one attention call.

    exact: logits 2n^2 d, kernel + normalizer 2n^2, weighted sum 2n^2 d.
    rmfa: projections 2 * 2nd(D avg_degree), products 2nD avg_degree,
    K^T V 2nDd, normalizer 2nD, query products 2nDd + 2nD, division nd.
    """
    if min(n, d, D) <= 0 or avg_degree < 0:
        raise ValueError("flop counts need positive n, d, D and non-negative avg_degree")
    exact = 4 * n * n * d + 2 * n * n
    proj = D * avg_degree
    approx = 4 * n * d * proj + 2 * n * proj + 4 * n * D * d + 4 * n * D + n * d
    return float(exact), float(approx)
