"""Rate functions for the jump sizes of the gamma process and the contraction
relations between them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .densities import exp_integral_E1
from .measures import ContractError
from .rng import as_generator
from .samplers import sample_gamma_jumps_inverse_levy

_TOL = 1e-12


@dataclass(frozen=True)
class RatePoint:
    """A point of R_+ decreasing (``sequence``), [0, inf) (``scalar``) or the sub-simplex (``partition``)."""

    kind: str
    payload: object

    def __post_init__(self):
        if self.kind not in ("sequence", "scalar", "partition"):
            raise ContractError(f"unknown rate point kind {self.kind!r}")

    @classmethod
    def sequence(cls, x) -> "RatePoint":
        return cls("sequence", np.asarray(x, float))

    @classmethod
    def scalar(cls, y) -> "RatePoint":
        return cls("scalar", float(y))

    @classmethod
    def partition(cls, p) -> "RatePoint":
        return cls("partition", np.asarray(p, float))


_DOMAIN = {"I": "sequence", "I1": "scalar", "I2": "partition", "I3": "partition", "I4": "scalar",
           "I5": "sequence"}


def _descending(x) -> bool:
    return bool(np.all(x >= 0) and np.all(np.diff(x) <= 0))


def rate(name: str, point) -> float:
    """Evaluate one of the rate functions I, I1, ..., I5 (values in [0, inf])."""
    if name not in _DOMAIN:
        raise ContractError(f"unknown rate function {name!r}")
    if not isinstance(point, RatePoint):
        point = RatePoint(_DOMAIN[name], np.asarray(point, float) if np.ndim(point) else float(point))
    if point.kind != _DOMAIN[name]:
        raise ContractError(f"{name} is defined on {_DOMAIN[name]} points, got {point.kind}")
    v = point.payload
    if name == "I":
        return float(np.sum(v)) if _descending(v) else math.inf
    if name == "I1":
        return v - 1.0 - math.log(v) if v > 0 else math.inf
    if name == "I4":
        if v < 0:
            return math.inf
        return 0.0 if v == 0 else 1.0
    if name == "I5":
        if not _descending(v):
            return math.inf
        return float(np.count_nonzero(v > 0))
    # partitions
    if not _descending(v) or v.sum() > 1 + _TOL:
        return math.inf
    s = float(v.sum())
    if name == "I2":
        return -math.log1p(-s) if s < 1 - _TOL else math.inf
    # I3: n - 1 when the first n entries exhaust the mass with p_n > 0
    if abs(s - 1.0) > _TOL:
        return math.inf
    return float(np.count_nonzero(v > 0) - 1)


@dataclass(frozen=True)
class ContractionResult:
    infimum: float
    argmin: float


def contraction_check(x, xatol: float = 1e-10) -> ContractionResult:
    """inf over y of I1(y) + I2(x / y), i.e. of y - 1 - log(y - sum x) on y > sum x.

    The minimum is located numerically (bounded Brent); the closed form is
    y* = 1 + sum x with value sum x.
    """
    x = np.asarray(x, float)
    if x.size == 0:
        return ContractionResult(0.0, 1.0)
    s = float(x.sum())
    g = lambda y: y - 1.0 - math.log(y - s) if y > s else math.inf
    res = optimize.minimize_scalar(g, bounds=(s, s + 20.0), method="bounded",
                                   options={"xatol": xatol, "maxiter": 500})
    return ContractionResult(float(res.fun), float(res.x))


def contraction_I5(x, max_support: int = 64) -> float:
    """inf{I3(p) + I4(y): y p_i = x_i} by enumeration.

    I3 is finite only on partitions with finite support summing to one, so the
    candidates are y = sum x with p = x / y, or y = 0 with p any such partition
    when x = 0 (enumerated over the support size n).
    """
    x = np.asarray(x, float)
    if not _descending(x):
        return math.inf
    best = math.inf
    if not np.any(x > 0):
        for n in range(1, max_support + 1):
            p = np.full(n, 1.0 / n)
            best = min(best, rate("I3", p) + rate("I4", 0.0))
        return best
    y = float(x.sum())
    return rate("I3", x / y) + rate("I4", y)


def ldp_demo(theta: float, level: float, n: int, rng, terms: int = 8) -> dict:
    """Crude Monte Carlo for P(gamma_1(theta) / theta > level) next to the exact value
    1 - exp(-theta E1(theta level)) and the rate level; only meaningful as a trend."""
    gen = as_generator(rng)
    x, _ = sample_gamma_jumps_inverse_levy(theta, terms, gen, size=n)
    hits = np.mean(x[:, 0] / theta > level)
    exact = -math.expm1(-theta * exp_integral_E1(theta * level))
    return {"theta": theta, "level": level, "empirical": float(hits), "exact": exact,
            "scaled_log_empirical": -math.log(hits) / theta if hits > 0 else math.inf,
            "scaled_log_exact": -math.log(exact) / theta, "rate": level}
