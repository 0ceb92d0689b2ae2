"""Value types: base spaces, test functions, partitions, jump sequences, atomic measures.

Infinite objects are always truncated; each carries the size of what was cut off
(``tail`` for partitions and measures, ``tail_bound`` for jump sequences).

Batches of atomic measures are stored as dense ``(replicates, atoms)`` arrays in
:class:`MeasureBatch`; zero-weight padding atoms are harmless for every
functional used here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

UNIT_INTERVAL = "unit-interval-uniform"
FINITE_DISCRETE = "finite-discrete"

# Gauss-Legendre nodes per piece for expectations over the unit interval.
_GL_NODES = 48


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ContractError(TypeError):
    """A precondition on the kind of input (not its value) was violated."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BaseSpace:
    """The space S with its base probability nu0."""

    kind: str = UNIT_INTERVAL
    probs: np.ndarray | None = None
    labels: tuple | None = None

    def __post_init__(self):
        if self.kind == UNIT_INTERVAL:
            return
        if self.kind != FINITE_DISCRETE:
            raise ValueError(f"unknown base space kind {self.kind!r}")
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("finite base space needs a nonempty probability vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("base probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)
        labels = tuple(range(p.size)) if self.labels is None else tuple(self.labels)
        if len(labels) != p.size:
            raise ValueError("labels and probabilities differ in length")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def unit_interval(cls) -> "BaseSpace":
        return cls(UNIT_INTERVAL)

    @classmethod
    def finite(cls, probs, labels=None) -> "BaseSpace":
        return cls(FINITE_DISCRETE, probs, labels)

    @property
    def is_finite(self) -> bool:
        return self.kind == FINITE_DISCRETE

    @property
    def size(self) -> int:
        self.require_finite()
        return self.probs.size

    def require_finite(self):
        if not self.is_finite:
            raise ContractError("operation requires a finite-discrete base space")

    def __eq__(self, other):
        if not isinstance(other, BaseSpace) or other.kind != self.kind:
            return False
        if not self.is_finite:
            return True
        return self.labels == other.labels and np.array_equal(self.probs, other.probs)

    __hash__ = object.__hash__

    def sample(self, rng, size=None) -> np.ndarray:
        """Draw i.i.d. locations from nu0 (floats on [0,1) or integer indices)."""
        if self.is_finite:
            return rng.choice(self.probs.size, size=size, p=self.probs)
        return rng.random(size)

    def nodes(self, breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        """Points and weights of a rule for <nu0, g>.

        Exact for finite spaces; composite Gauss-Legendre between breakpoints on
        the unit interval (exact for piecewise polynomials of degree < 96).
        """
        if self.is_finite:
            return np.arange(self.probs.size), np.asarray(self.probs)
        edges = np.unique(np.clip(np.r_[0.0, list(breakpoints), 1.0], 0.0, 1.0))
        x, w = np.polynomial.legendre.leggauss(_GL_NODES)
        pts, wts = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            pts.append(lo + (hi - lo) * (x + 1) / 2)
            wts.append(w * (hi - lo) / 2)
        return np.concatenate(pts), np.concatenate(wts)

    def expect(self, g, breakpoints: Sequence[float] = ()) -> float:
        """<nu0, g> by the node rule; ``g`` maps an array of locations to values."""
        bp = tuple(breakpoints) + tuple(getattr(g, "breakpoints", ()))
        pts, wts = self.nodes(bp)
        return float(np.dot(wts, np.asarray(g(pts), dtype=float)))

    def integrate(self, g, breakpoints: Sequence[float] = ()) -> float:
        """<nu0, g> exactly (finite) or by adaptive quadrature (unit interval)."""
        if self.is_finite:
            return float(np.dot(self.probs, np.asarray(g(np.arange(self.probs.size)), float)))
        bp = sorted(set(tuple(breakpoints) + tuple(getattr(g, "breakpoints", ()))) - {0.0, 1.0})
        val, _ = integrate.quad(lambda s: float(np.asarray(g(np.array([s])))[0]), 0.0, 1.0,
                                points=bp or None, epsabs=1e-14, epsrel=1e-12, limit=200)
        return float(val)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A bounded function on S with declared bounds.

    ``lower > 0`` is membership in B_+(S), required by the multiplicative
    transformations.
    """

    __test__ = False  # keep pytest from collecting this class

    fn: Callable
    lower: float
    upper: float
    breakpoints: tuple = ()
    name: str = ""

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("lower bound exceeds upper bound")

    @property
    def positive(self) -> bool:
        return self.lower > 0

    def __call__(self, x) -> np.ndarray:
        v = np.asarray(self.fn(np.asarray(x)), dtype=float)
        if v.shape != np.shape(x):
            v = np.broadcast_to(v, np.shape(x)).astype(float)
        tol = 1e-12 * max(1.0, abs(self.lower), abs(self.upper))
        if v.size and (v.min() < self.lower - tol or v.max() > self.upper + tol):
            raise DomainError(f"test function {self.name or self.fn!r} left its declared bounds")
        return v

    def require_positive(self):
        if not self.positive:
            raise ContractError("test function must have a strictly positive lower bound")

    @classmethod
    def constant(cls, c: float) -> "TestFunction":
        c = float(c)
        return cls(lambda x, c=c: np.full(np.shape(x), c), c, c, name=f"const({c})")

    @classmethod
    def on_points(cls, values) -> "TestFunction":
        """Function on a finite space given by its values at indices 0..n-1."""
        v = _frozen(values)
        return cls(lambda x, v=v: v[np.asarray(x, dtype=int)], float(v.min()), float(v.max()),
                   name="values" + np.array2string(v, precision=4, separator=","))

    @classmethod
    def step(cls, edges, values) -> "TestFunction":
        """Piecewise-constant function on [0,1): ``values[k]`` on ``[edges[k], edges[k+1])``."""
        e = np.asarray(edges, float)
        v = _frozen(values)
        if e.size != v.size + 1 or e[0] != 0.0 or e[-1] != 1.0 or np.any(np.diff(e) <= 0):
            raise ValueError("edges must increase from 0 to 1, one more than values")
        inner = e[1:-1].copy()
        fn = lambda x, inner=inner, v=v: v[np.searchsorted(inner, x, side="right")]
        return cls(fn, float(v.min()), float(v.max()), tuple(inner), name="step")

    def map(self, op: Callable, lower: float, upper: float, name: str = "") -> "TestFunction":
        """Pointwise ``op(self)`` with caller-supplied bounds."""
        return TestFunction(lambda x, f=self.fn, op=op: op(np.asarray(f(x), float)), lower, upper,
                            self.breakpoints, name or self.name)

    def reciprocal(self) -> "TestFunction":
        self.require_positive()
        return self.map(lambda v: 1.0 / v, 1.0 / self.upper, 1.0 / self.lower, f"1/{self.name}")

    def values_on(self, space: BaseSpace) -> np.ndarray:
        return self(np.arange(space.size))


@dataclass(frozen=True, eq=False)
class MassPartition:
    """Descending weights on the (sub-)simplex with the unrepresented residual."""

    weights: np.ndarray
    closure: str = "simplex"
    tail: float = 0.0

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or np.any(w < 0):
            raise ValueError("partition weights must be a nonnegative vector")
        if np.any(np.diff(w) > 0):
            raise ValueError("partition weights must be sorted descending")
        if self.tail < 0:
            raise ValueError("truncation tail must be nonnegative")
        total = float(w.sum())
        if self.closure == "simplex":
            if abs(total + self.tail - 1.0) > 1e-9:
                raise ValueError("simplex partition must satisfy sum + tail = 1")
        elif self.closure == "sub-simplex":
            if total > 1.0 + 1e-12:
                raise ValueError("sub-simplex partition must sum to at most 1")
        else:
            raise ValueError(f"unknown closure {self.closure!r}")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True, eq=False)
class JumpSequence:
    """Descending strictly positive jumps plus a bound on the omitted mass."""

    jumps: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        x = _frozen(self.jumps)
        if x.ndim != 1 or np.any(x <= 0) or np.any(np.diff(x) > 0):
            raise ValueError("jumps must be strictly positive and sorted descending")
        if self.tail_bound < 0:
            raise ValueError("tail bound must be nonnegative")
        object.__setattr__(self, "jumps", x)

    def __len__(self):
        return self.jumps.size

    @property
    def total(self) -> float:
        return float(self.jumps.sum())


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite list of (weight, location) atoms over a base space."""

    weights: np.ndarray
    locations: np.ndarray
    space: BaseSpace = field(default_factory=BaseSpace.unit_interval)
    tail: float = 0.0

    def __post_init__(self):
        w = _frozen(self.weights)
        loc = _frozen(self.locations, int if self.space.is_finite else float)
        if w.shape != loc.shape or w.ndim != 1:
            raise ValueError("weights and locations must be 1-d and equally long")
        if np.any(w < 0):
            raise ValueError("atom weights must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "_total", float(np.sum(w)))

    @classmethod
    def from_dense(cls, coords, space: BaseSpace) -> "AtomicMeasure":
        """One atom per point of a finite space."""
        return cls(np.asarray(coords, float), np.arange(space.size), space)

    @property
    def total_mass(self) -> float:
        return self._total

    def __len__(self):
        return self.weights.size

    def pair(self, g) -> float:
        """<mu, g>."""
        if self.weights.size == 0:
            return 0.0
        return float(np.dot(self.weights, g(self.locations)))

    def merged(self) -> "AtomicMeasure":
        """Combine atoms sitting at equal locations."""
        locs, inv = np.unique(self.locations, return_inverse=True)
        w = np.bincount(inv, weights=self.weights, minlength=locs.size)
        return AtomicMeasure(w, locs, self.space, self.tail)

    def dense(self) -> np.ndarray:
        """Coordinates on a finite space."""
        return np.bincount(self.locations, weights=self.weights, minlength=self.space.size)


@dataclass(frozen=True, eq=False)
class MeasureBatch:
    """Replicated atomic measures as ``(R, K)`` weight and location arrays."""

    weights: np.ndarray
    locations: np.ndarray
    space: BaseSpace
    tail: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        loc = np.asarray(self.locations, int if self.space.is_finite else float)
        if w.ndim != 2 or w.shape != loc.shape:
            raise ValueError("batch weights and locations must be equal-shape 2-d arrays")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", loc)
        tail = np.zeros(w.shape[0]) if self.tail is None else np.asarray(self.tail, float)
        object.__setattr__(self, "tail", tail)

    @classmethod
    def from_dense(cls, coords, space: BaseSpace) -> "MeasureBatch":
        coords = np.asarray(coords, float)
        locs = np.broadcast_to(np.arange(space.size), coords.shape)
        return cls(coords, locs, space)

    @classmethod
    def concat_atoms(cls, batches: Sequence["MeasureBatch"]) -> "MeasureBatch":
        """Atom-wise union (sum of measures) of equally sized batches."""
        sp = batches[0].space
        return cls(np.hstack([b.weights for b in batches]), np.hstack([b.locations for b in batches]),
                   sp, np.sum([b.tail for b in batches], axis=0))

    @classmethod
    def concat(cls, parts: Sequence["MeasureBatch"]) -> "MeasureBatch":
        """Stack batches row-wise, padding with zero-weight atoms."""
        K = max(p.weights.shape[1] for p in parts)
        pad = lambda a: np.pad(a, ((0, 0), (0, K - a.shape[1])))
        return cls(np.vstack([pad(p.weights) for p in parts]), np.vstack([pad(p.locations) for p in parts]),
                   parts[0].space, np.concatenate([p.tail for p in parts]))

    def __len__(self):
        return self.weights.shape[0]

    @property
    def total_mass(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def pair(self, g) -> np.ndarray:
        """<mu_r, g> for every replicate r."""
        if self.space.is_finite:
            # evaluate g once per point of S
            vals = np.asarray(g(np.arange(self.space.size)), float)
            return np.einsum("rk,rk->r", self.weights, vals[self.locations])
        return np.einsum("rk,rk->r", self.weights, g(self.locations))

    def dense(self) -> np.ndarray:
        self.space.require_finite()
        R, _ = self.weights.shape
        out = np.zeros((R, self.space.size))
        rows = np.broadcast_to(np.arange(R)[:, None], self.weights.shape)
        np.add.at(out, (rows.ravel(), self.locations.ravel()), self.weights.ravel())
        return out

    def row(self, i: int) -> AtomicMeasure:
        keep = self.weights[i] > 0
        return AtomicMeasure(self.weights[i][keep], self.locations[i][keep], self.space,
                             float(self.tail[i]))

    def sorted_weights(self) -> np.ndarray:
        return -np.sort(-self.weights, axis=1)


def _check_mass(total):
    if np.any(np.asarray(total) <= 0):
        raise DomainError("cannot normalize null measure")


def normalize(m):
    """mu / mu(S); atom locations are unchanged."""
    if isinstance(m, MeasureBatch):
        tot = m.total_mass
        _check_mass(tot)
        return MeasureBatch(m.weights / tot[:, None], m.locations, m.space, m.tail / tot)
    _check_mass(m.total_mass)
    return AtomicMeasure(m.weights / m.total_mass, m.locations, m.space, m.tail / m.total_mass)


def to_ordered_masses(m):
    """Map a measure to its descending atom masses (zero atoms dropped)."""
    if isinstance(m, MeasureBatch):
        return m.sorted_weights()
    w = np.sort(m.weights[m.weights > 0])[::-1]
    return JumpSequence(w, m.tail)


def to_partition(m):
    """Map a measure of positive mass to its descending normalized masses."""
    if isinstance(m, MeasureBatch):
        tot = m.total_mass
        _check_mass(tot)
        return m.sorted_weights() / tot[:, None]
    _check_mass(m.total_mass)
    w = np.sort(m.weights[m.weights > 0])[::-1] / m.total_mass
    # tail excluded from the normalization: represented weights sum to 1 exactly
    return MassPartition(w / w.sum(), "simplex", 0.0)


def scale_by_function(m, f: TestFunction, mode: str = "multiplicative"):
    """Apply T_f (``multiplicative``), S_f (``exponential``) or normalized T_f (``normalized``)."""
    if mode not in ("multiplicative", "exponential", "normalized"):
        raise ValueError(f"unknown scaling mode {mode!r}")
    if mode != "exponential":
        f.require_positive()
    if mode == "normalized" and f.lower == f.upper:
        # normalized T_c is plain normalization; probability measures pass through
        if np.all(np.abs(np.asarray(m.total_mass) + np.asarray(m.tail) - 1.0) < 1e-12):
            return m
        return normalize(m)
    if isinstance(m, MeasureBatch):
        if m.space.is_finite:
            fv = f(np.arange(m.space.size))[m.locations]
        else:
            fv = f(m.locations)
        factor = np.exp(fv) if mode == "exponential" else fv
        w = m.weights * factor
        if mode == "normalized":
            tot = w.sum(axis=1)
            _check_mass(tot)
            w = w / tot[:, None]
        return MeasureBatch(w, m.locations, m.space, m.tail)
    fv = f(m.locations)
    w = m.weights * (np.exp(fv) if mode == "exponential" else fv)
    if mode == "normalized":
        _check_mass(m.total_mass)
        w = w / w.sum()
    return AtomicMeasure(w, m.locations, m.space, m.tail)
