"""Dot-product kernels with non-negative Maclaurin coefficients.

Each kernel is a scalar profile ``f`` applied to an inner product ``z = <x, y>``:

    exp    exp(z)                 a_n = 1/n!
    inv    1 / (1 - z)            a_n = 1
    logi   1 - log(1 - z)         a_0 = 1, a_n = 1/n
    trigh  sinh(z) + cosh(z)      a_n = 1/n!
    sqrt   2 - sqrt(1 - z)        a_0 = 1, a_n = (2n-3)!! / (2^n n!)

inv, logi and sqrt only converge for |z| < 1.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import KernelDomainError, SeriesTruncationError

# Sentinel for kernels whose series converges everywhere.
UNBOUNDED = math.inf

MAX_DEGREE = 200


class KernelId(enum.Enum):
    EXP = "exp"
    INV = "inv"
    LOGI = "logi"
    TRIGH = "trigh"
    SQRT = "sqrt"

    @classmethod
    def parse(cls, name) -> "KernelId":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown kernel {name!r}; expected one of {valid}") from None


def _factorial_reciprocals(n_max):
    out = np.empty(n_max + 1)
    out[0] = 1.0
    for n in range(n_max):
        out[n + 1] = out[n] / (n + 1)
    return out


def _ones(n_max):
    return np.ones(n_max + 1)


def _logi(n_max):
    out = np.empty(n_max + 1)
    out[0] = 1.0
    out[1:] = 1.0 / np.arange(1, n_max + 1)
    return out


def _sqrt(n_max):
    # a_{n+1} = a_n (2n - 1) / (2 (n + 1)) from the binomial series of sqrt(1 - z)
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 0.5
    for n in range(1, n_max):
        out[n + 1] = out[n] * (2 * n - 1) / (2 * (n + 1))
    return out


def _trigh_closed(z):
    return np.sinh(z) + np.cosh(z)


@dataclass(frozen=True)
class MaclaurinKernel:
    id: KernelId
    domain_radius: float
    closed_form: Callable[[np.ndarray], np.ndarray]
    coefficient_table: Callable[[int], np.ndarray]

    @property
    def name(self) -> str:
        return self.id.value

    @property
    def bounded(self) -> bool:
        return self.domain_radius != UNBOUNDED


KERNELS = {
    KernelId.EXP: MaclaurinKernel(KernelId.EXP, UNBOUNDED, np.exp, _factorial_reciprocals),
    KernelId.INV: MaclaurinKernel(KernelId.INV, 1.0, lambda z: 1.0 / (1.0 - z), _ones),
    KernelId.LOGI: MaclaurinKernel(KernelId.LOGI, 1.0, lambda z: 1.0 - np.log1p(-z), _logi),
    KernelId.TRIGH: MaclaurinKernel(KernelId.TRIGH, UNBOUNDED, _trigh_closed, _factorial_reciprocals),
    KernelId.SQRT: MaclaurinKernel(KernelId.SQRT, 1.0, lambda z: 2.0 - np.sqrt(1.0 - z), _sqrt),
}


def get_kernel(k) -> MaclaurinKernel:
    return KERNELS[KernelId.parse(k)]


@lru_cache(maxsize=None)
def _table(k: KernelId, n_max: int) -> np.ndarray:
    table = KERNELS[k].coefficient_table(n_max)
    table.flags.writeable = False
    return table


def coefficients(k, n_max: int) -> np.ndarray:
    """Read-only array ``[a_0, ..., a_{n_max}]``."""
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    # round the cache key up so repeated small requests share one table
    size = max(MAX_DEGREE, 1 << (int(n_max).bit_length()))
    return _table(KernelId.parse(k), size)[: n_max + 1]


def coefficient(k, n: int) -> float:
    if n < 0:
        raise ValueError(f"coefficient index must be >= 0, got {n}")
    return float(coefficients(k, n)[n])


def domain_radius(k) -> float:
    return get_kernel(k).domain_radius


def check_domain(k, z) -> None:
    """Raise :class:`KernelDomainError` if any ``|z| >= radius``."""
    kern = get_kernel(k)
    if not kern.bounded:
        return
    z = np.asarray(z)
    bad = np.abs(z) >= kern.domain_radius
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0]) if z.ndim else None
        raise KernelDomainError(
            f"{kern.name} kernel is only defined for |z| < {kern.domain_radius}; "
            f"got z = {float(z[where] if where else z):.6g}" + (f" at index {where}" if where else ""),
            radius=kern.domain_radius,
            where=where,
        )


def evaluate_closed_form(k, z):
    """Evaluate the kernel profile at ``z`` (scalar or array), checking the domain."""
    check_domain(k, z)
    out = get_kernel(k).closed_form(np.asarray(z, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def evaluate_series(k, z: float, tol: float = 1e-12, max_terms: int = 1000) -> float:
    """Sum the Maclaurin series until the estimated remainder drops below ``tol``.

    The remainder after term ``m`` is bounded geometrically by ``|t_m| q / (1 - q)``,
    with ``q`` the larger of ``|z|/radius`` and the last term ratio.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    check_domain(k, z)
    kern = get_kernel(k)
    a = coefficients(k, max_terms)
    z = float(z)
    total = a[0]
    if z == 0.0:
        return float(total)
    base_q = abs(z) / kern.domain_radius if kern.bounded else 0.0
    power = 1.0
    prev = abs(a[0])
    for m in range(1, max_terms + 1):
        power *= z
        term = a[m] * power
        total += term
        mag = abs(term)
        q = max(base_q, mag / prev if prev > 0 else 1.0)
        if q < 1.0 and mag * q / (1.0 - q) < tol:
            return float(total)
        prev = mag
    raise SeriesTruncationError(
        f"{kern.name} series at z={z} did not converge to {tol} in {max_terms} terms",
        partial=float(total),
        terms=max_terms,
    )
