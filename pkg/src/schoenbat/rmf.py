"""Random Maclaurin feature maps for dot-product kernels.

A map of ``D`` features approximates ``K(<x, y>)`` by ``<Phi(x), Phi(y)>`` with

    Phi(x)_t = sqrt(a_N w_N / D) * prod_{j=1..N} <omega_{t,j}, x>

where each degree ``N = N_t`` is drawn from the geometric law
``P[N = n] = (1 - 1/p) p^{-n}`` (``= 2^{-(n+1)}`` at the default ``p = 2``),
``w_N = 1 / P[N]`` and the ``omega_{t,j}`` are fresh Rademacher vectors.
Every feature is an independent unbiased one-feature estimator of the kernel.
"""
from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .kernels import MAX_DEGREE, KernelId, coefficients, get_kernel
from .linalg import Matrix, RngStream, as_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RmfParams:
    D: int
    d: int
    kernel: KernelId = KernelId.EXP
    p: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kernel", KernelId.parse(self.kernel))
        if self.D < 1 or self.d < 1:
            raise DimensionError(f"need D >= 1 and d >= 1, got D={self.D}, d={self.d}")
        if not self.p > 1:
            raise ValueError(f"sampling base p must be > 1, got {self.p}")


def degree_probability(n, p: float = 2.0):
    """Probability of drawing degree ``n`` under the geometric law with base ``p``."""
    n = np.asarray(n, dtype=np.float64)
    return (1.0 - 1.0 / p) * p ** (-n)


@dataclass(frozen=True, eq=False)
class RmfFeatureMap:
    params: RmfParams
    degrees: np.ndarray  # (D,) int
    omegas: np.ndarray  # (sum(degrees), d) of +-1, feature t owns rows offsets[t]:offsets[t+1]
    scale_coeffs: np.ndarray  # (D,) sqrt(a_N / P[N])
    resampled: int = 0  # degrees redrawn because they exceeded MAX_DEGREE
    _index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        degrees = np.asarray(self.degrees, dtype=np.int64)
        if degrees.shape != (self.params.D,) or np.any(degrees < 0):
            raise DimensionError("degrees must be D non-negative integers")
        if self.omegas.shape != (int(degrees.sum()), self.params.d):
            raise DimensionError(f"omegas shape {self.omegas.shape} does not match degrees")
        # (D, max_degree) gather index into the projection columns; padding points at a column of ones
        total = int(degrees.sum())
        width = max(int(degrees.max(initial=0)), 1)
        offsets = np.concatenate([[0], np.cumsum(degrees)[:-1]])
        cols = offsets[:, None] + np.arange(width)[None, :]
        index = np.where(np.arange(width)[None, :] < degrees[:, None], cols, total)
        for name, value in (("degrees", degrees), ("_index", index)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        self.omegas.flags.writeable = False
        self.scale_coeffs.flags.writeable = False

    @property
    def D(self) -> int:
        return self.params.D

    def omega(self, t: int) -> np.ndarray:
        """The Rademacher vectors of feature ``t`` as an ``(N_t, d)`` array."""
        start = int(self.degrees[:t].sum())
        return self.omegas[start : start + int(self.degrees[t])]

    def raw_features(self, X) -> Matrix:
        """``sqrt(a_N w_N) prod <omega, x>`` per row and feature, without the 1/sqrt(D) factor."""
        X = as_matrix(X)
        if X.shape[1] != self.params.d:
            raise DimensionError(f"feature map expects d={self.params.d}, input has {X.shape[1]} columns")
        proj = X @ self.omegas.T
        proj = np.concatenate([proj, np.ones((X.shape[0], 1))], axis=1)
        return proj[:, self._index].prod(axis=2) * self.scale_coeffs

    def __eq__(self, other):
        if not isinstance(other, RmfFeatureMap):
            return NotImplemented
        return (
            self.params == other.params
            and np.array_equal(self.degrees, other.degrees)
            and np.array_equal(self.omegas, other.omegas)
            and np.array_equal(self.scale_coeffs, other.scale_coeffs)
        )

    __hash__ = None

    def to_json(self) -> str:
        """Serialize as JSON: parameters, degree list and bit-packed signs (1 = +1)."""
        bits = np.packbits((self.omegas > 0).astype(np.uint8).ravel())
        return json.dumps(
            {
                "format": "schoenbat-rmf/1",
                "kernel": self.params.kernel.value,
                "D": self.params.D,
                "d": self.params.d,
                "p": self.params.p,
                "seed": self.params.seed,
                "degrees": [int(n) for n in self.degrees],
                "signs": base64.b64encode(bits.tobytes()).decode("ascii"),
                "resampled": self.resampled,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "RmfFeatureMap":
        doc = json.loads(text)
        if doc.get("format") != "schoenbat-rmf/1":
            raise ValueError(f"unsupported feature map format {doc.get('format')!r}")
        params = RmfParams(D=doc["D"], d=doc["d"], kernel=doc["kernel"], p=doc["p"], seed=doc["seed"])
        degrees = np.asarray(doc["degrees"], dtype=np.int64)
        count = int(degrees.sum()) * params.d
        bits = np.frombuffer(base64.b64decode(doc["signs"]), dtype=np.uint8)
        signs = np.unpackbits(bits)[:count].astype(np.float64) * 2 - 1
        omegas = signs.reshape(int(degrees.sum()), params.d)
        return build_feature_map(params, degrees, omegas, doc.get("resampled", 0))


def build_feature_map(params: RmfParams, degrees, omegas, resampled: int = 0) -> RmfFeatureMap:
    """Assemble a map from explicit degrees and stacked Rademacher rows."""
    degrees = np.asarray(degrees, dtype=np.int64)
    omegas = np.asarray(omegas, dtype=np.float64).reshape(int(degrees.sum()), params.d)
    a = coefficients(params.kernel, int(degrees.max(initial=0)))[degrees]
    scale = np.sqrt(a / degree_probability(degrees, params.p))
    return RmfFeatureMap(params, degrees, omegas, scale, resampled)


def sample_degrees(rng: RngStream, size: int, p: float = 2.0, cap: int = MAX_DEGREE):
    """Draw ``size`` geometric degrees; any above ``cap`` are redrawn. Returns (degrees, n_redrawn)."""
    g = rng.generator
    degrees = g.geometric(1.0 - 1.0 / p, size=size) - 1
    redrawn = 0
    while True:
        over = degrees > cap
        k = int(over.sum())
        if not k:
            break
        redrawn += k
        degrees[over] = g.geometric(1.0 - 1.0 / p, size=k) - 1
    if redrawn:
        log.warning("redrew %d RMF degrees above the cap of %d", redrawn, cap)
    return degrees.astype(np.int64), redrawn


def sample_feature_map(params: RmfParams, rng: RngStream | None = None) -> RmfFeatureMap:
    """Draw a feature map; uses ``RngStream(params.seed)`` when no stream is given."""
    if rng is None:
        rng = RngStream(params.seed)
    degrees, redrawn = sample_degrees(rng, params.D, params.p)
    bits = rng.generator.integers(0, 2, size=(int(degrees.sum()), params.d), dtype=np.int8)
    omegas = (2 * bits - 1).astype(np.float64)
    return build_feature_map(params, degrees, omegas, redrawn)


def apply_feature_map(fmap: RmfFeatureMap, X) -> Matrix:
    """Map each row of ``X`` (n x d) to its ``D`` features (n x D)."""
    return fmap.raw_features(X) / math.sqrt(fmap.D)


def _as_row(x, d):
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != d:
        raise DimensionError(f"expected a vector of length {d}, got {x.shape[1]}")
    return x


def _warn_outside_ball(fmap, *vectors):
    if get_kernel(fmap.params.kernel).bounded:
        for v in vectors:
            if np.linalg.norm(v) > 1.0:
                log.warning("input norm %.4g exceeds 1; %s estimate may diverge", np.linalg.norm(v), fmap.params.kernel.value)


def feature_products(fmap: RmfFeatureMap, x, y) -> np.ndarray:
    """Per-feature products ``phi_t(x) phi_t(y)``; each is a one-feature kernel estimate."""
    x = _as_row(x, fmap.params.d)
    y = _as_row(y, fmap.params.d)
    _warn_outside_ball(fmap, x, y)
    return (fmap.raw_features(x) * fmap.raw_features(y))[0]


def kernel_estimate(fmap: RmfFeatureMap, x, y) -> float:
    """``<Phi(x), Phi(y)>``, an unbiased estimate of ``K(<x, y>)``."""
    return float(feature_products(fmap, x, y).mean())
