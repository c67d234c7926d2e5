"""Symbolic residence-time CDFs and the epsilon-faster-than relation.

A CDF is an immutable tree built from Dirac, Uniform and Exponential leaves
combined by convolution, mixture and pointwise max/min. Every node evaluates
on numpy arrays. Parameters are stored as exact Fractions so that the
closed-form acceleration constants stay exact when they are rational.
"""

from __future__ import annotations

import enum
import itertools
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import integrate, special

from smpkit.errors import (
    MalformedCdf,
    ParseError,
    RateCompositionOnNonExponential,
    UnsupportedShape,
)
from smpkit.rational import format_rational, match_rational, rational

INF = math.inf

#: An acceleration is an exact Fraction, a float (transcendental cases) or inf.
Acceleration = Union[Fraction, float]


@dataclass(frozen=True)
class GridSpec:
    """Resolution of the numeric CDF comparison.

    Attributes:
        points: Number of log-spaced sample points.
        tol: Absolute slack allowed in ``F(eps*t) >= G(t) - tol``.
        tail_mass: The grid ends at the ``1 - tail_mass`` quantile.
    """

    points: int = 2048
    tol: float = 1e-9
    tail_mass: float = 1e-6

    def __post_init__(self):
        if self.points < 16:
            raise ValueError("GridSpec.points must be at least 16")
        if not self.tol > 0:
            raise ValueError("GridSpec.tol must be positive")

    @classmethod
    def from_env(cls) -> "GridSpec":
        """Build a grid from ``SMPKIT_GRID_POINTS`` and ``SMPKIT_GRID_TOL``."""
        points = int(os.environ.get("SMPKIT_GRID_POINTS", cls.points))
        tol = float(os.environ.get("SMPKIT_GRID_TOL", cls.tol))
        return cls(points=points, tol=tol)


def default_grid() -> GridSpec:
    return GridSpec.from_env()


# ---------------------------------------------------------------------------
# CDF nodes
# ---------------------------------------------------------------------------


def _as_array(t) -> np.ndarray:
    return np.asarray(t, dtype=float)


class Cdf:
    """Base class of all CDF nodes."""

    def cdf(self, t) -> np.ndarray:
        raise NotImplementedError

    def cdf_left(self, t) -> np.ndarray:
        """Left limit ``F(t-)``."""
        t = _as_array(t)
        out = self.cdf(t)
        for x, m in self.atoms():
            out = out - m * np.isclose(t, x, rtol=1e-12, atol=1e-15)
        return np.clip(out, 0.0, 1.0)

    def __call__(self, t):
        return evaluate(self, t)

    def atoms(self) -> list[tuple[float, float]]:
        """Point masses as ``(location, mass)`` pairs."""
        return []

    def knots(self) -> list[float]:
        """Points where the CDF may be non-smooth."""
        return []

    def mass(self) -> Fraction:
        """Total mass ``lim F(t)``."""
        return Fraction(1)

    def sup_point(self) -> float:
        """Smallest ``x`` with ``F(x) = mass``, or inf."""
        raise NotImplementedError

    def zero_order(self) -> tuple[float, float]:
        """Return ``(k, C)`` with ``F(t) ~ C t**k`` as ``t -> 0+``.

        ``k = inf`` means the CDF vanishes on a neighbourhood of zero.
        """
        raise NotImplementedError

    def tail_rate(self) -> float:
        """Exponential decay rate of ``mass - F(t)``; inf for bounded support."""
        raise NotImplementedError

    def quantile(self, p) -> np.ndarray:
        """Generalised inverse ``inf{x : F(x) >= p}``; inf above the mass."""
        return _bisect_quantile(self, _as_array(p))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` samples; deficient mass is sampled as inf."""
        return self.quantile(rng.random(n))

    def scaled(self, eps) -> "Cdf":
        """The CDF ``t -> F(eps * t)``."""
        raise NotImplementedError

    def to_literal(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_literal()


@dataclass(frozen=True)
class Dirac(Cdf):
    x: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "x", rational(self.x))
        if self.x < 0:
            raise MalformedCdf(f"dirac location must be nonnegative, got {self.x}")

    def cdf(self, t):
        return (_as_array(t) >= float(self.x)).astype(float)

    def cdf_left(self, t):
        return (_as_array(t) > float(self.x)).astype(float)

    def atoms(self):
        return [(float(self.x), 1.0)]

    def knots(self):
        return [float(self.x)]

    def sup_point(self):
        return float(self.x)

    def zero_order(self):
        return (0, 1.0) if self.x == 0 else (INF, 0.0)

    def tail_rate(self):
        return INF

    def quantile(self, p):
        p = _as_array(p)
        return np.where(p <= 0, 0.0, float(self.x))

    def scaled(self, eps):
        return Dirac(self.x / rational(eps))

    def to_literal(self):
        return f"dirac({format_rational(self.x)})"


@dataclass(frozen=True)
class Uniform(Cdf):
    a: Fraction
    b: Fraction

    def __post_init__(self):
        object.__setattr__(self, "a", rational(self.a))
        object.__setattr__(self, "b", rational(self.b))
        if self.a < 0 or not self.a < self.b:
            raise MalformedCdf(f"uniform needs 0 <= a < b, got ({self.a}, {self.b})")

    def cdf(self, t):
        a, b = float(self.a), float(self.b)
        return np.clip((_as_array(t) - a) / (b - a), 0.0, 1.0)

    def knots(self):
        return [float(self.a), float(self.b)]

    def sup_point(self):
        return float(self.b)

    def zero_order(self):
        return (1, float(1 / self.b)) if self.a == 0 else (INF, 0.0)

    def tail_rate(self):
        return INF

    def quantile(self, p):
        p = _as_array(p)
        a, b = float(self.a), float(self.b)
        return np.where(p <= 0, 0.0, a + (b - a) * np.clip(p, 0.0, 1.0))

    def sample(self, rng, n):
        return rng.uniform(float(self.a), float(self.b), n)

    def scaled(self, eps):
        e = rational(eps)
        return Uniform(self.a / e, self.b / e)

    def to_literal(self):
        return f"unif({format_rational(self.a)},{format_rational(self.b)})"


@dataclass(frozen=True)
class Exponential(Cdf):
    rate: Fraction

    def __post_init__(self):
        object.__setattr__(self, "rate", rational(self.rate))
        if not self.rate > 0:
            raise MalformedCdf(f"exponential rate must be positive, got {self.rate}")

    def cdf(self, t):
        t = _as_array(t)
        return np.where(t > 0, -np.expm1(-float(self.rate) * np.maximum(t, 0.0)), 0.0)

    def knots(self):
        return [0.0]

    def sup_point(self):
        return INF

    def zero_order(self):
        return (1, float(self.rate))

    def tail_rate(self):
        return float(self.rate)

    def quantile(self, p):
        p = _as_array(p)
        with np.errstate(divide="ignore"):
            q = -np.log1p(-np.clip(p, 0.0, 1.0)) / float(self.rate)
        return np.where(p <= 0, 0.0, q)

    def sample(self, rng, n):
        return rng.exponential(1.0 / float(self.rate), n)

    def scaled(self, eps):
        return Exponential(self.rate * rational(eps))

    def to_literal(self):
        return f"exp({format_rational(self.rate)})"


@dataclass(frozen=True)
class Convolution(Cdf):
    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise MalformedCdf("convolution needs at least one part")
        for p in parts:
            if not isinstance(p, Cdf):
                raise MalformedCdf(f"convolution part is not a CDF: {p!r}")
        object.__setattr__(self, "parts", parts)

    def cdf(self, t):
        fn = self.__dict__.get("_fn")
        if fn is None:
            fn = _conv_fn(self.parts)
            object.__setattr__(self, "_fn", fn)
        return fn(_as_array(t))

    def atoms(self):
        acc = [(0.0, 1.0)]
        for p in self.parts:
            pa = p.atoms()
            if not pa:
                return []
            merged: dict[float, float] = {}
            for x, m in acc:
                for y, n in pa:
                    key = round(x + y, 12)
                    merged[key] = merged.get(key, 0.0) + m * n
            acc = list(merged.items())
        return [(x, m) for x, m in acc if m > 0]

    def knots(self):
        acc = {0.0}
        for p in self.parts:
            ks = set(p.knots()) or {0.0}
            acc = {round(x + y, 12) for x in acc for y in ks}
            if len(acc) > 4096:
                acc = set(sorted(acc)[:4096])
        return sorted(acc)

    def mass(self):
        out = Fraction(1)
        for p in self.parts:
            out *= p.mass()
        return out

    def sup_point(self):
        return sum(p.sup_point() for p in self.parts)

    def zero_order(self):
        k, c = 0, 1.0
        for p in self.parts:
            kp, cp = p.zero_order()
            if kp == INF or k == INF:
                return (INF, 0.0)
            c = c * cp * math.factorial(k) * math.factorial(kp) / math.factorial(k + kp)
            k = k + kp
        return (k, c)

    def tail_rate(self):
        rates = [p.tail_rate() for p in self.parts if p.sup_point() == INF]
        return min(rates) if rates else INF

    def sample(self, rng, n):
        out = np.zeros(n)
        for p in self.parts:
            out = out + p.sample(rng, n)
        return out

    def scaled(self, eps):
        return Convolution(tuple(p.scaled(eps) for p in self.parts))

    def to_literal(self):
        return "conv(" + ",".join(p.to_literal() for p in self.parts) + ")"


@dataclass(frozen=True)
class Mixture(Cdf):
    weights: tuple
    parts: tuple

    def __post_init__(self):
        weights = tuple(rational(w) for w in self.weights)
        parts = tuple(self.parts)
        if len(weights) != len(parts) or not parts:
            raise MalformedCdf("mixture needs one weight per part and at least one part")
        if any(w < 0 or w > 1 for w in weights) or sum(weights) > 1:
            raise MalformedCdf("mixture weights must lie in [0,1] and sum to at most 1")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "parts", parts)

    def _live(self):
        return [(w, p) for w, p in zip(self.weights, self.parts) if w > 0]

    def cdf(self, t):
        t = _as_array(t)
        out = np.zeros_like(t)
        for w, p in self._live():
            out = out + float(w) * p.cdf(t)
        return np.clip(out, 0.0, 1.0)

    def cdf_left(self, t):
        t = _as_array(t)
        out = np.zeros_like(t)
        for w, p in self._live():
            out = out + float(w) * p.cdf_left(t)
        return np.clip(out, 0.0, 1.0)

    def atoms(self):
        merged: dict[float, float] = {}
        for w, p in self._live():
            for x, m in p.atoms():
                merged[x] = merged.get(x, 0.0) + float(w) * m
        return sorted(merged.items())

    def knots(self):
        return sorted({k for _, p in self._live() for k in p.knots()})

    def mass(self):
        return sum((w * p.mass() for w, p in self._live()), Fraction(0))

    def sup_point(self):
        live = self._live()
        return max((p.sup_point() for _, p in live), default=0.0)

    def zero_order(self):
        live = [(w, p.zero_order()) for w, p in self._live()]
        if not live:
            return (INF, 0.0)
        k = min(z[0] for _, z in live)
        if k == INF:
            return (INF, 0.0)
        return (k, sum(float(w) * z[1] for w, z in live if z[0] == k))

    def tail_rate(self):
        rates = [p.tail_rate() for _, p in self._live() if p.sup_point() == INF]
        return min(rates) if rates else INF

    def sample(self, rng, n):
        u = rng.random(n)
        out = np.full(n, INF)
        edge = 0.0
        for w, p in self._live():
            hit = (u >= edge) & (u < edge + float(w))
            out[hit] = p.sample(rng, int(hit.sum()))
            edge += float(w)
        return out

    def scaled(self, eps):
        return Mixture(self.weights, tuple(p.scaled(eps) for p in self.parts))

    def to_literal(self):
        body = ",".join(
            f"{format_rational(w)}:{p.to_literal()}" for w, p in zip(self.weights, self.parts)
        )
        return f"mix({body})"


@dataclass(frozen=True)
class PointwiseMax(Cdf):
    l: Cdf
    r: Cdf

    def cdf(self, t):
        return np.maximum(self.l.cdf(t), self.r.cdf(t))

    def cdf_left(self, t):
        return np.maximum(self.l.cdf_left(t), self.r.cdf_left(t))

    def atoms(self):
        return _jumps(self, {x for x, _ in self.l.atoms()} | {x for x, _ in self.r.atoms()})

    def knots(self):
        return sorted(set(self.l.knots()) | set(self.r.knots()))

    def mass(self):
        return max(self.l.mass(), self.r.mass())

    def sup_point(self):
        ml, mr = self.l.mass(), self.r.mass()
        if ml != mr:
            return (self.l if ml > mr else self.r).sup_point()
        return min(self.l.sup_point(), self.r.sup_point())

    def zero_order(self):
        (kl, cl), (kr, cr) = self.l.zero_order(), self.r.zero_order()
        if kl != kr:
            return (kl, cl) if kl < kr else (kr, cr)
        return (kl, max(cl, cr))

    def tail_rate(self):
        ml, mr = self.l.mass(), self.r.mass()
        if ml != mr:
            return (self.l if ml > mr else self.r).tail_rate()
        return max(self.l.tail_rate(), self.r.tail_rate())

    def quantile(self, p):
        return np.minimum(self.l.quantile(p), self.r.quantile(p))

    def scaled(self, eps):
        return PointwiseMax(self.l.scaled(eps), self.r.scaled(eps))

    def to_literal(self):
        return f"max({self.l.to_literal()},{self.r.to_literal()})"


@dataclass(frozen=True)
class PointwiseMin(Cdf):
    l: Cdf
    r: Cdf

    def cdf(self, t):
        return np.minimum(self.l.cdf(t), self.r.cdf(t))

    def cdf_left(self, t):
        return np.minimum(self.l.cdf_left(t), self.r.cdf_left(t))

    def atoms(self):
        return _jumps(self, {x for x, _ in self.l.atoms()} | {x for x, _ in self.r.atoms()})

    def knots(self):
        return sorted(set(self.l.knots()) | set(self.r.knots()))

    def mass(self):
        return min(self.l.mass(), self.r.mass())

    def sup_point(self):
        ml, mr = self.l.mass(), self.r.mass()
        if ml == mr:
            return max(self.l.sup_point(), self.r.sup_point())
        low, high = (self.l, self.r) if ml < mr else (self.r, self.l)
        reach = float(high.quantile(np.array([float(low.mass())]))[0])
        return max(low.sup_point(), reach)

    def zero_order(self):
        (kl, cl), (kr, cr) = self.l.zero_order(), self.r.zero_order()
        if kl != kr:
            return (kl, cl) if kl > kr else (kr, cr)
        return (kl, min(cl, cr))

    def tail_rate(self):
        ml, mr = self.l.mass(), self.r.mass()
        if ml != mr:
            return (self.l if ml < mr else self.r).tail_rate()
        return min(self.l.tail_rate(), self.r.tail_rate())

    def quantile(self, p):
        return np.maximum(self.l.quantile(p), self.r.quantile(p))

    def scaled(self, eps):
        return PointwiseMin(self.l.scaled(eps), self.r.scaled(eps))

    def to_literal(self):
        return f"min({self.l.to_literal()},{self.r.to_literal()})"


def _jumps(node: Cdf, points: Iterable[float]) -> list[tuple[float, float]]:
    pts = np.array(sorted(points), dtype=float)
    if pts.size == 0:
        return []
    jumps = node.cdf(pts) - node.cdf_left(pts)
    return [(float(x), float(j)) for x, j in zip(pts, jumps) if j > 1e-15]


def _bisect_quantile(F: Cdf, p: np.ndarray) -> np.ndarray:
    p = np.atleast_1d(p).astype(float)
    out = np.zeros_like(p)
    mass = float(F.mass())
    above = p > mass * (1 + 1e-15)
    out[above] = INF
    todo = (~above) & (p > 0)
    if not todo.any():
        return out
    target = p[todo]
    hi = np.full(target.shape, max(1.0, max(F.knots(), default=1.0)))
    for _ in range(400):
        short = F.cdf(hi) < target
        if not short.any():
            break
        hi[short] *= 2.0
    lo = np.zeros_like(hi)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        ok = F.cdf(mid) >= target
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    out[todo] = hi
    return out


# ---------------------------------------------------------------------------
# Convolution evaluation
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def simplify(F: Cdf) -> Cdf:
    """Rewrite a CDF into an eval-equal, structurally smaller form.

    Max and min of two exponentials become a single exponential, and Dirac(0)
    is absorbing for max and neutral for min.
    """
    if isinstance(F, (PointwiseMax, PointwiseMin)):
        l, r = simplify(F.l), simplify(F.r)
        is_max = isinstance(F, PointwiseMax)
        if l == r:
            return l
        if isinstance(l, Exponential) and isinstance(r, Exponential):
            pick = max if is_max else min
            return Exponential(pick(l.rate, r.rate))
        for a, b in ((l, r), (r, l)):
            if a == Dirac(0):
                return a if is_max else b
        return PointwiseMax(l, r) if is_max else PointwiseMin(l, r)
    if isinstance(F, Convolution):
        return convolve_all([simplify(p) for p in F.parts])
    if isinstance(F, Mixture):
        return Mixture(F.weights, tuple(simplify(p) for p in F.parts))
    return F


def _flatten(parts: Sequence[Cdf]):
    shift = Fraction(0)
    rates: list[Fraction] = []
    widths: list[Fraction] = []
    others: list[Cdf] = []
    for p in parts:
        p = simplify(p)
        if isinstance(p, Dirac):
            shift += p.x
        elif isinstance(p, Exponential):
            rates.append(p.rate)
        elif isinstance(p, Uniform):
            shift += p.a
            widths.append(p.b - p.a)
        elif isinstance(p, Convolution):
            s, r, w, o = _flatten(p.parts)
            shift += s
            rates += r
            widths += w
            others += o
        else:
            others.append(p)
    return shift, rates, widths, others


def _conv_fn(parts: Sequence[Cdf]):
    """Build ``t -> CDF`` for the sum of ``parts`` once, for repeated use."""
    shift, rates, widths, others = _flatten(parts)
    for i, o in enumerate(others):
        if isinstance(o, Mixture):
            rest = [Dirac(shift)] + [Exponential(r) for r in rates]
            rest += [Uniform(0, w) for w in widths] + others[:i] + others[i + 1 :]
            branches = [(float(w), _conv_fn(rest + [p])) for w, p in o._live()]

            def mixed(t):
                out = np.zeros_like(t, dtype=float)
                for w, f in branches:
                    out = out + w * f(t)
                return out

            return mixed
    fn = _block_cdf_factory(tuple(rates), tuple(widths))
    for o in others:
        fn = _fold_quantile(fn, o)
    sh = float(shift)

    def total(t):
        s = t - sh
        return np.clip(np.where(s >= 0, fn(np.maximum(s, 0.0)), 0.0), 0.0, 1.0)

    return total


def _block_cdf_factory(rates: tuple, widths: tuple):
    """CDF of a sum of independent Exp(rates) and Unif(0, widths) variables."""
    if not rates and not widths:
        return lambda s: (np.asarray(s) >= 0).astype(float)
    if not widths:
        return _exp_block_fn(rates)
    if not rates:
        return lambda s: _unif_block_cdf(widths, s)
    return lambda s: _mixed_block_cdf(rates, widths, s)


@lru_cache(maxsize=4096)
def _hypoexp_coefficients(rates: tuple) -> tuple | None:
    """Partial-fraction weights of the hypoexponential survival function.

    Returns None when rates repeat or the weights are too large to evaluate
    without heavy cancellation.
    """
    if len(set(rates)) != len(rates):
        return None
    coeffs = []
    for i, ri in enumerate(rates):
        c = Fraction(1)
        for j, rj in enumerate(rates):
            if j != i:
                c *= rj / (rj - ri)
        coeffs.append(c)
    if sum(abs(c) for c in coeffs) > 10**6:
        return None
    return tuple(float(c) for c in coeffs)


def _exp_block_fn(rates: tuple):
    """``s -> CDF`` of a sum of independent exponentials."""
    rates = tuple(sorted(rates))
    if len(rates) == 1:
        r = float(rates[0])
        return lambda s: -np.expm1(-r * np.maximum(np.asarray(s, dtype=float), 0.0))
    coeffs = _hypoexp_coefficients(rates)
    if coeffs is not None:
        rs, cs = np.array([float(r) for r in rates]), np.array(coeffs)

        def closed(s):
            s = np.maximum(np.asarray(s, dtype=float), 0.0)
            return np.clip(1.0 - np.exp(-np.multiply.outer(s, rs)) @ cs, 0.0, 1.0)

        return closed
    lam, a = _uniformised_survival(rates)
    return lambda s: _uniformised_cdf(lam, a, s)


def _exp_block_cdf(rates: tuple, s) -> np.ndarray:
    return _exp_block_fn(rates)(s)


@lru_cache(maxsize=4096)
def _uniformised_survival(rates: tuple) -> tuple[float, np.ndarray]:
    """Survival of the discrete chain obtained by uniformising the phases.

    Returns ``(lam, a)`` where ``a[k]`` is the probability that fewer than
    ``len(rates)`` phases have finished after ``k`` uniformised steps. The
    table stops once that probability is negligible.
    """
    lam = float(max(rates))
    adv = np.array([float(r) / lam for r in rates])
    v = np.zeros(len(rates))
    v[0] = 1.0
    out = [1.0]
    while out[-1] > 1e-18 and len(out) < 100_000:
        moved = v * adv
        v = v - moved
        v[1:] += moved[:-1]
        out.append(float(v.sum()))
    return lam, np.array(out)


def _phase_type_cdf(rates: tuple, s: np.ndarray) -> np.ndarray:
    """Hypoexponential CDF with repeated rates, by uniformisation."""
    lam, a = _uniformised_survival(tuple(sorted(rates)))
    return _uniformised_cdf(lam, a, s)


@lru_cache(maxsize=64)
def _log_factorials(n: int) -> np.ndarray:
    return special.gammaln(np.arange(n) + 1.0)


def _uniformised_cdf(lam: float, a: np.ndarray, s) -> np.ndarray:
    flat = np.maximum(np.atleast_1d(np.asarray(s, dtype=float)).ravel(), 0.0)
    lgf = _log_factorials(a.size)
    surv = np.empty_like(flat)
    for i in range(0, flat.size, 512):
        x = lam * flat[i : i + 512, None]
        # Poisson weights more than 12 deviations (plus slack) out are below 1e-30.
        lo = max(0, int(x.min() - 12 * math.sqrt(x.min()) - 30))
        hi = min(a.size, int(x.max() + 12 * math.sqrt(x.max()) + 30) + 1)
        if lo >= hi:
            surv[i : i + 512] = 0.0
            continue
        k = np.arange(lo, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.where(x > 0, k * np.log(x), np.where(k == 0, 0.0, -np.inf)) - x - lgf[lo:hi]
        surv[i : i + 512] = np.exp(logp) @ a[lo:hi]
    return np.clip(1.0 - surv, 0.0, 1.0).reshape(np.shape(s))


@lru_cache(maxsize=1024)
def _unif_subsets(widths: tuple):
    n = len(widths)
    sums, signs = [], []
    for k in range(n + 1):
        for combo in itertools.combinations(range(n), k):
            sums.append(float(sum((widths[i] for i in combo), Fraction(0))))
            signs.append((-1) ** k)
    norm = float(math.prod(widths))
    return np.array(sums), np.array(signs, dtype=float), norm


def _unif_block_cdf(widths: tuple, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if len(widths) == 1:
        return np.clip(s / float(widths[0]), 0.0, 1.0)
    n = len(widths)
    sums, signs, norm = _unif_subsets(widths)
    d = np.maximum(np.subtract.outer(s, sums), 0.0)
    val = (d**n) @ signs / (math.factorial(n) * norm)
    total = float(sum(widths))
    return np.where(s >= total, 1.0, np.clip(val, 0.0, 1.0))


def _unif_block_density(widths: tuple, x: np.ndarray) -> np.ndarray:
    n = len(widths)
    if n == 1:
        w = float(widths[0])
        return np.where((x >= 0) & (x <= w), 1.0 / w, 0.0)
    sums, signs, norm = _unif_subsets(widths)
    d = np.maximum(np.subtract.outer(x, sums), 0.0)
    val = (d ** (n - 1)) @ signs / (math.factorial(n - 1) * norm)
    return np.maximum(val, 0.0)


def _mixed_block_cdf(rates: tuple, widths: tuple, s) -> np.ndarray:
    """Integrate the exponential block against the uniform-block density.

    Gauss-Legendre on every polynomial piece of the density; the integrand is
    analytic on each piece, so a fixed rule with subdivision is accurate.
    """
    s = np.asarray(s, dtype=float)
    flat = np.atleast_1d(s).ravel()
    sums, _, _ = _unif_subsets(widths)
    breaks = np.unique(sums)
    theta = float(max(rates))
    out = np.zeros_like(flat)
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        top = np.clip(flat, lo, hi)
        length = top - lo
        nsub = max(1, math.ceil(theta * (hi - lo) / 4.0))
        for k in range(nsub):
            a = lo + length * k / nsub
            b = lo + length * (k + 1) / nsub
            half = 0.5 * (b - a)
            mid = 0.5 * (b + a)
            x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
            vals = _exp_block_cdf(rates, flat[:, None] - x) * _unif_block_density(widths, x)
            out += half * (vals @ _GL_WEIGHTS)
    return np.clip(out, 0.0, 1.0).reshape(np.shape(s))


def _fold_quantile(A, B: Cdf):
    """CDF of ``X + Y`` with ``X ~ A`` and ``Y ~ B`` via ``Y = Q_B(U)``."""

    def fn(s_in):
        s = np.atleast_1d(np.asarray(s_in, dtype=float)).ravel()
        top = B.cdf(s)

        def integrand(v):
            y = B.quantile(top * v)
            return top * np.where(s - y >= 0, A(np.maximum(s - y, 0.0)), 0.0)

        val, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-11, epsrel=1e-10, norm="max")
        return np.reshape(val, np.shape(s_in))

    return fn


# ---------------------------------------------------------------------------
# Public algebra
# ---------------------------------------------------------------------------


def evaluate(F: Cdf, t):
    """Evaluate a CDF at ``t`` (scalar or array), with ``t >= 0``.

    Args:
        F: The CDF.
        t: Nonnegative time point(s).

    Returns:
        A float for scalar input, otherwise an array of the same shape.
    """
    arr = _as_array(t)
    if np.any(arr < 0):
        raise ValueError("CDFs are evaluated on t >= 0 only")
    out = F.cdf(arr)
    return float(out) if np.ndim(out) == 0 else out


def convolve(F: Cdf, G: Cdf) -> Cdf:
    """Convolution ``F * G`` with Dirac shifts folded in where possible."""
    return convolve_all([F, G])


def convolve_all(parts: Sequence[Cdf]) -> Cdf:
    """Convolve a list of CDFs; the empty list gives Dirac(0)."""
    flat: list[Cdf] = []
    shift = Fraction(0)
    for p in parts:
        items = p.parts if isinstance(p, Convolution) else (p,)
        for q in items:
            if isinstance(q, Dirac):
                shift += q.x
            else:
                flat.append(q)
    if not flat:
        return Dirac(shift)
    if shift:
        for i, q in enumerate(flat):
            if isinstance(q, Uniform):
                flat[i] = Uniform(q.a + shift, q.b + shift)
                shift = Fraction(0)
                break
    if shift:
        flat.insert(0, Dirac(shift))
    return flat[0] if len(flat) == 1 else Convolution(tuple(flat))


class CompositionKind(enum.Enum):
    """Residence-time composition functions used by parallel composition."""

    MAX_CDF = "max-cdf"
    MIN_CDF = "min-cdf"
    PRODUCT_RATE = "product-rate"
    MIN_RATE = "min-rate"
    MAX_RATE = "max-rate"

    @classmethod
    def parse(cls, text: str) -> "CompositionKind":
        key = text.strip().lower().replace("_", "-")
        aliases = {
            "maxcdf": "max-cdf",
            "mincdf": "min-cdf",
            "productrate": "product-rate",
            "product": "product-rate",
            "minrate": "min-rate",
            "maxrate": "max-rate",
            "max": "max-cdf",
            "min": "min-cdf",
        }
        key = aliases.get(key.replace("-", ""), key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown composition kind {text!r}; expected one of {names}") from None

    @property
    def is_rate(self) -> bool:
        return self in (CompositionKind.PRODUCT_RATE, CompositionKind.MIN_RATE, CompositionKind.MAX_RATE)


def compose_cdf(star: CompositionKind, F: Cdf, G: Cdf) -> Cdf:
    """Combine two residence CDFs with a composition function.

    Raises:
        RateCompositionOnNonExponential: A rate composition got a
            non-exponential argument.
    """
    if star is CompositionKind.MAX_CDF:
        return PointwiseMax(F, G)
    if star is CompositionKind.MIN_CDF:
        return PointwiseMin(F, G)
    if not (isinstance(F, Exponential) and isinstance(G, Exponential)):
        raise RateCompositionOnNonExponential(
            f"{star.value} needs exponential arguments, got {F} and {G}"
        )
    if star is CompositionKind.PRODUCT_RATE:
        return Exponential(F.rate * G.rate)
    if star is CompositionKind.MIN_RATE:
        return Exponential(min(F.rate, G.rate))
    return Exponential(max(F.rate, G.rate))


# ---------------------------------------------------------------------------
# Closed-form least acceleration
# ---------------------------------------------------------------------------

_BASE = (Dirac, Uniform, Exponential)


def _acc_max(a, b):
    return a if a >= b else b


def _max_branches(F: Cdf) -> list:
    if isinstance(F, PointwiseMax):
        return _max_branches(F.l) + _max_branches(F.r)
    if isinstance(F, _BASE):
        return [F]
    raise UnsupportedShape(f"no closed form for a faster side of shape {F}")


def least_acceleration(F: Cdf, G: Cdf) -> Acceleration:
    """Least ``eps > 0`` with ``F(eps*t) >= G(t)`` for all ``t``; unclamped.

    Covers Dirac, uniform and exponential CDFs and pointwise maxima of them
    (and a pointwise minimum on the faster side). The value is the supremum
    over ``t`` of ``Q_F(G(t)) / t``, where ``Q_F`` is the quantile of ``F``.

    Args:
        F: The CDF that should be faster after acceleration.
        G: The reference CDF.

    Returns:
        A Fraction when the answer is rational, a float when it involves a
        Lambert-W crossing, ``0`` when any eps works, or ``inf``.

    Raises:
        UnsupportedShape: Outside the supported family.
    """
    if isinstance(G, PointwiseMax):
        return _acc_max(least_acceleration(F, G.l), least_acceleration(F, G.r))
    if isinstance(F, PointwiseMin):
        return _acc_max(least_acceleration(F.l, G), least_acceleration(F.r, G))
    if not isinstance(G, _BASE):
        raise UnsupportedShape(f"no closed form for a reference CDF of shape {G}")
    branches = _max_branches(F)
    if isinstance(G, Dirac):
        return _least_vs_dirac(branches, G.x)
    if isinstance(G, Exponential):
        return min(_limit_vs_exp(b, G.rate) for b in branches)
    return _least_vs_uniform(branches, G.a, G.b)


def _full_quantile(b) -> Acceleration:
    if isinstance(b, Dirac):
        return b.x
    if isinstance(b, Uniform):
        return b.b
    return INF


def _least_vs_dirac(branches, y: Fraction) -> Acceleration:
    q = min(_full_quantile(b) for b in branches)
    if y == 0:
        return Fraction(0) if q == 0 else INF
    return q / y if q != INF else INF


def _limit_vs_exp(b, theta: Fraction) -> Acceleration:
    # Each ratio Q_b(G(t))/t is nonincreasing, so the sup is the t -> 0 limit.
    if isinstance(b, Dirac):
        return INF if b.x > 0 else Fraction(0)
    if isinstance(b, Uniform):
        return INF if b.a > 0 else b.b * theta
    return theta / b.rate


def _least_vs_uniform(branches, c: Fraction, d: Fraction) -> Acceleration:
    """Sup of ``min_i Q_i(G(t))/t`` for ``G = Unif(c, d)``.

    On ``(c, d)`` each ratio is monotone, so the sup of the minimum sits at
    an endpoint or where two quantile curves cross.
    """
    width = d - c
    lines = []  # (alpha, beta): Q(G(t)) = alpha + beta*t on (c, d)
    exps = []  # rates lambda: Q(G(t)) = -ln((d-t)/(d-c))/lambda
    for b in branches:
        if isinstance(b, Dirac):
            lines.append((b.x, Fraction(0)))
        elif isinstance(b, Uniform):
            beta = (b.b - b.a) / width
            lines.append((b.a - beta * c, beta))
        else:
            exps.append(b.rate)

    def ratio_at(t):
        vals = []
        for alpha, beta in lines:
            vals.append((alpha + beta * t) / t)
        for lam in exps:
            vals.append(-math.log(float((d - t) / width)) / (float(lam) * float(t)))
        return min(vals)

    candidates = [min(_full_quantile(b) for b in branches) / d if d > 0 else INF]
    # Right limit at c.
    if c > 0:
        candidates.append(Fraction(0) if exps else min((a + be * c) / c for a, be in lines))
    else:
        limits = []
        for alpha, beta in lines:
            limits.append(INF if alpha > 0 else beta)
        for lam in exps:
            limits.append(1 / (lam * d))
        candidates.append(min(limits))
    # Line-line crossings are exact.
    for (a1, b1), (a2, b2) in itertools.combinations(lines, 2):
        if b1 != b2:
            t = (a2 - a1) / (b1 - b2)
            if c < t < d:
                candidates.append(ratio_at(t))
    # Exponential-line crossings via the Lambert W function.
    for lam in exps:
        for alpha, beta in lines:
            for t in _exp_line_crossings(float(lam), float(alpha), float(beta), float(c), float(d)):
                candidates.append(ratio_at(t))
    best = candidates[0]
    for v in candidates[1:]:
        best = _acc_max(best, v)
    return best


def _exp_line_crossings(lam, alpha, beta, c, d) -> list[float]:
    """Solve ``-ln((d-t)/(d-c))/lam = alpha + beta*t`` for ``t`` in ``(c, d)``."""
    A = lam * (alpha + beta * d)
    B = lam * beta
    K = (d - c) * math.exp(-A) if A < 700 else 0.0
    us = []
    if B == 0:
        us.append(K)
    else:
        z = -B * K
        for branch in (0, -1):
            if branch == -1 and not (-1 / math.e <= z < 0):
                continue
            if z < -1 / math.e:
                continue
            w = special.lambertw(z, branch)
            if abs(w.imag) < 1e-12:
                us.append(-w.real / B)
    out = []
    for u in us:
        if 0 < u < d - c:
            out.append(_polish_crossing(lam, alpha, beta, c, d, d - u))
    return out


def _polish_crossing(lam, alpha, beta, c, d, t0) -> float:
    """Refine a crossing by bracketed root finding to 1e-12."""
    from scipy.optimize import brentq

    def gap(t):
        return -math.log((d - t) / (d - c)) / lam - (alpha + beta * t)

    lo, hi = max(c, t0 - 1e-6 * (d - c)), min(d, t0 + 1e-6 * (d - c))
    lo = max(lo, c + 1e-300)
    hi = min(hi, d - 1e-15 * max(d, 1.0))
    try:
        if lo < hi and gap(lo) * gap(hi) < 0:
            return brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14)
    except (ValueError, ZeroDivisionError):
        pass
    return t0


def c_clamped(F: Cdf, G: Cdf, numeric_fallback: bool = True, grid: GridSpec | None = None) -> Acceleration:
    """The constant ``c(F, G) = max(1, least acceleration)``; inf propagates.

    Args:
        F: Faster-side CDF.
        G: Reference CDF.
        numeric_fallback: Use the numeric oracle outside the closed-form family.
        grid: Grid for the numeric fallback.

    Raises:
        UnsupportedShape: Outside the family with the fallback disabled.
    """
    try:
        raw = least_acceleration(F, G)
    except UnsupportedShape:
        if not numeric_fallback:
            raise
        raw = least_acceleration_numeric(F, G, grid)
    return _acc_max(Fraction(1), raw)


# ---------------------------------------------------------------------------
# Numeric route
# ---------------------------------------------------------------------------


def _never_faster(F: Cdf, G: Cdf) -> bool:
    """Analytic certificate that no eps makes ``F`` eps-faster than ``G``."""
    mF, mG = F.mass(), G.mass()
    if mG == 0:
        return False
    if mF < mG:
        return True
    if mF == mG and G.sup_point() < INF and F.sup_point() == INF:
        return True
    kF, cF = F.zero_order()
    kG, cG = G.zero_order()
    if kF > kG:
        return True
    if kF == kG == 0 and cF < cG * (1 - 1e-12):
        return True
    return False


def _analytic_fails(F: Cdf, G: Cdf, eps: float) -> bool:
    kF, cF = F.zero_order()
    kG, cG = G.zero_order()
    if kF == kG and 0 < kF < INF and cF * eps**kF < cG * (1 - 1e-12):
        return True
    if F.mass() == G.mass() and F.sup_point() == INF and G.sup_point() == INF:
        rF, rG = F.tail_rate(), G.tail_rate()
        if rF * eps < rG * (1 - 1e-12):
            return True
    return False


def _grid_points(F: Cdf, G: Cdf, eps: float, grid: GridSpec) -> np.ndarray:
    tail = grid.tail_mass
    ends = []
    for H, scale in ((G, 1.0), (F, eps)):
        m = float(H.mass())
        if m > 0:
            q = float(H.quantile(np.array([m * (1 - tail)]))[0])
            if math.isfinite(q):
                ends.append(q / scale)
    top = max(ends) if ends and max(ends) > 0 else 1.0
    pts = [np.geomspace(top * 1e-9, top, grid.points), [0.0]]
    knots = [k for k in G.knots() if k >= 0] + [k / eps for k in F.knots() if k >= 0]
    knots = np.array(knots, dtype=float)
    if knots.size:
        pts.append(knots)
        pts.append(knots * (1 - 1e-9))
        pts.append(knots * (1 + 1e-9))
    return np.unique(np.concatenate([np.asarray(p, dtype=float) for p in pts]))


def _zoom(t: np.ndarray, slack: np.ndarray, keep: int = 8, density: int = 128) -> np.ndarray:
    """Dense points around the grid cells with the smallest slack."""
    order = np.argsort(t)
    t, slack = t[order], slack[order]
    left = np.concatenate([[np.inf], slack[:-1]])
    right = np.concatenate([slack[1:], [np.inf]])
    minima = np.flatnonzero((slack <= left) & (slack <= right) & np.isfinite(slack))
    order = minima[np.argsort(slack[minima])][:keep]
    if order.size == 0:
        return t[:1]
    pieces = []
    for i in order:
        lo = t[max(i - 1, 0)]
        hi = t[min(i + 1, len(t) - 1)]
        if hi > lo:
            pieces.append(np.linspace(lo, hi, density))
    return np.concatenate(pieces) if pieces else t[:1]


def eps_faster_numeric(F: Cdf, G: Cdf, eps, grid: GridSpec | None = None) -> bool:
    """Grid check of ``F(eps*t) >= G(t) - tol`` with analytic end checks.

    This is the route used for shapes outside the closed-form family and by
    the numeric oracle.
    """
    grid = grid or default_grid()
    eps = float(eps)
    if G.mass() == 0:
        return True
    if _never_faster(F, G) or _analytic_fails(F, G, eps):
        return False
    t = _grid_points(F, G, eps, grid)
    mass_g = float(G.mass()) * (1 - 1e-15)
    for level in range(4):
        g = G.cdf(t)
        slack = F.cdf(eps * t) - g
        if np.any(slack < -grid.tol):
            return False
        if level < 3:
            # Zoom where the slack is smallest relative to G, so that the
            # near-zero region (both CDFs tiny) does not hog the refinement.
            live = (g > 0) & (g < mass_g)
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(live, slack / g, np.inf)
            t = _zoom(t, rel)
    knots = np.array([k for k in G.knots() if k > 0] + [k / eps for k in F.knots() if k > 0])
    if knots.size and np.any(F.cdf_left(eps * knots) < G.cdf_left(knots) - grid.tol):
        return False
    return True


def eps_faster(F: Cdf, G: Cdf, eps, grid: GridSpec | None = None) -> bool:
    """Decide ``F`` is eps-faster than ``G``: ``F(eps*t) >= G(t)`` for all ``t``.

    Shapes in the closed-form family are decided exactly through
    ``least_acceleration``; everything else uses the grid check.

    Args:
        F: Faster-side CDF.
        G: Reference CDF.
        eps: Acceleration factor, positive.
        grid: Resolution for the numeric route.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    try:
        least = least_acceleration(F, G)
    except UnsupportedShape:
        return eps_faster_numeric(F, G, eps, grid)
    if isinstance(least, float) and math.isfinite(least):
        return float(eps) >= least * (1 - 1e-12)
    return rational(eps) >= least if least != INF else False


def least_acceleration_numeric(F: Cdf, G: Cdf, grid: GridSpec | None = None) -> Acceleration:
    """Bisection over eps with the grid check; an independent oracle.

    Infinite answers come only from the analytic certificates (mass and
    behaviour near zero), never from the grid.

    Returns:
        A float, ``0.0`` when every eps works, or ``inf``.
    """
    grid = grid or default_grid()
    if G.mass() == 0:
        return 0.0
    if _never_faster(F, G):
        return INF

    def ok(e):
        return eps_faster_numeric(F, G, e, grid)

    if ok(1.0):
        hi, lo = 1.0, 0.5
        while ok(lo):
            hi = lo
            lo /= 2
            if lo < 1e-15:
                return 0.0
    else:
        lo, hi = 1.0, 2.0
        while not ok(hi):
            lo = hi
            hi *= 2
            if hi > 2.0**80:
                return INF
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Literal grammar
# ---------------------------------------------------------------------------


class _CdfParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise ParseError(msg, self.text, self.pos)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, ch: str):
        self.skip()
        if not self.text.startswith(ch, self.pos):
            self.error(f"expected {ch!r}")
        self.pos += len(ch)

    def number(self) -> Fraction:
        self.skip()
        m = match_rational(self.text, self.pos)
        if m is None:
            self.error("expected a nonnegative number")
        value, self.pos = m
        return value

    def name(self) -> str:
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isalpha():
            self.pos += 1
        return self.text[start : self.pos].lower()

    def cdf(self) -> Cdf:
        self.skip()
        start = self.pos
        kind = self.name()
        self.expect("(")
        try:
            if kind == "dirac":
                node = Dirac(self.number())
            elif kind == "unif":
                a = self.number()
                self.expect(",")
                node = Uniform(a, self.number())
            elif kind == "exp":
                node = Exponential(self.number())
            elif kind in ("conv", "max", "min", "mix"):
                node = self._compound(kind)
            else:
                self.pos = start
                self.error(f"unknown distribution {kind!r}")
        except MalformedCdf as exc:
            raise ParseError(str(exc), self.text, start) from None
        self.expect(")")
        return node

    def _compound(self, kind: str) -> Cdf:
        items = []
        while True:
            if kind == "mix":
                w = self.number()
                self.expect(":")
                items.append((w, self.cdf()))
            else:
                items.append(self.cdf())
            self.skip()
            if self.text.startswith(",", self.pos):
                self.pos += 1
                continue
            break
        if kind == "conv":
            return Convolution(tuple(items))
        if kind == "mix":
            return Mixture(tuple(w for w, _ in items), tuple(p for _, p in items))
        if len(items) != 2:
            self.error(f"{kind} takes exactly two arguments")
        return PointwiseMax(*items) if kind == "max" else PointwiseMin(*items)


def parse_cdf(text: str) -> Cdf:
    """Parse a CDF literal such as ``conv(exp(2), unif(0, 1/2))``.

    Raises:
        ParseError: With the offset of the first offending character.
    """
    p = _CdfParser(text)
    node = p.cdf()
    p.skip()
    if p.pos != len(text):
        p.error("trailing characters")
    return node
