"""Method of types for binary sequences: strong typicality, type-class sizes,
entropies, exact typical-set masses and the large-deviation exponent.

Symbol ``0`` is the outcome ``e0`` of a measurement basis; ``k`` always counts
zeros in a length-``n`` sequence.  A sequence is strongly typical for
``(n, eps, q)`` iff ``|k/n - q| <= eps/2``.  Membership only depends on ``k``,
so the typical set is an integer window ``lo <= k <= hi``, and its edges are
computed in exact rational arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Optional, Union

import numpy as np
from scipy.special import bdtr, bdtrc, entr, gammaln, rel_entr, xlogy

from .bloch import ProjectedDistribution

LN2 = math.log(2.0)
Number = Union[int, float, Fraction, str]

_CHUNK = 1 << 20


def to_fraction(x: Number) -> Fraction:
    """Exact rational for a window parameter.

    Floats are read as their shortest decimal representation, so ``0.3`` is
    ``3/10`` rather than the nearest binary double.  Window edges then land
    where the caller wrote them.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, Rational):
        return Fraction(int(x.numerator), int(x.denominator))
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite window parameter {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x))


@dataclass(frozen=True)
class TypicalSetSpec:
    """Parameters ``(n, eps, q)`` of the strongly typical set.

    ``eps`` and ``q`` are stored as exact fractions (see :func:`to_fraction`).
    """

    n: int
    eps: Fraction
    q: Fraction = Fraction(1, 2)

    def __post_init__(self):
        n = int(self.n)
        if n != self.n or n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        eps, q = to_fraction(self.eps), to_fraction(self.q)
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps!r}")
        if not 0 <= q <= 1:
            raise ValueError(f"q must be a probability, got {self.q!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "q", q)

    @property
    def window(self) -> tuple:
        return typical_window(self.n, self.eps, self.q)

    def feasible_counts(self) -> range:
        lo, hi = self.window
        return range(lo, hi + 1)


@dataclass(frozen=True)
class EmpiricalType:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.k <= self.n:
            raise ValueError(f"invalid type (n={self.n}, k={self.k})")

    @property
    def p0(self) -> float:
        return self.k / self.n

    @property
    def p1(self) -> float:
        return 1.0 - self.k / self.n


def typical_window(n: int, eps: Number, q: Number) -> tuple:
    """Integer window ``(lo, hi)`` of zero counts accepted by ``(n, eps, q)``.

    The window is empty when ``lo > hi``.  ``eps = 0`` is allowed here (it
    accepts only ``k = nq``), which the nested set at the window edge needs.
    """
    eps, q = to_fraction(eps), to_fraction(q)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    half = eps / 2
    lo = math.ceil(n * (q - half))
    hi = math.floor(n * (q + half))
    return max(lo, 0), min(hi, n)


def in_typical_set(k: int, spec: TypicalSetSpec) -> bool:
    """``|k/n - q| <= eps/2``, decided exactly as ``|2k - 2qn| <= eps n``."""
    if not 0 <= k <= spec.n:
        raise ValueError(f"k={k} outside [0, {spec.n}]")
    return abs(2 * k - 2 * spec.q * spec.n) <= spec.eps * spec.n


def type_class_log_size(t: EmpiricalType) -> float:
    """``log2 |T(P)| = log2 C(n, k)``."""
    n, k = t.n, t.k
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)) / LN2


def shannon_entropy(p0):
    """Binary entropy in bits, ``0 log 0 = 0``.  Accepts scalars or arrays."""
    p0 = np.asarray(p0, dtype=float)
    h = (entr(p0) + entr(1.0 - p0)) / LN2
    return float(h) if h.ndim == 0 else h


def relative_entropy(p0, q0):
    """Binary KL divergence ``D(P||Q)`` in bits; ``inf`` on support mismatch."""
    p0 = np.asarray(p0, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    d = (rel_entr(p0, q0) + rel_entr(1.0 - p0, 1.0 - q0)) / LN2
    d = np.maximum(d, 0.0)
    return float(d) if d.ndim == 0 else d


def _stirlerr(n: np.ndarray) -> np.ndarray:
    """``log(n!) - log(sqrt(2 pi n) (n/e)^n)``, accurate for all ``n >= 1``."""
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    small = n <= 15
    ns = n[small]
    out[small] = gammaln(ns + 1) - (ns + 0.5) * np.log(ns) + ns - 0.5 * math.log(2 * math.pi)
    nl = n[~small]
    nn = nl * nl
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    out[~small] = (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / nl
    return out


def _bd0(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Deviance term ``x log(x/m) + m - x`` without cancellation near ``x = m``."""
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    out = np.empty(np.broadcast(x, m).shape)
    x, m = np.broadcast_to(x, out.shape), np.broadcast_to(m, out.shape)
    near = np.abs(x - m) < 0.1 * (x + m)
    xn, mn = x[near], m[near]
    v = (xn - mn) / (xn + mn)
    acc = (xn - mn) * v
    ej = 2 * xn * v
    v2 = v * v
    for j in range(1, 40):
        ej = ej * v2
        term = ej / (2 * j + 1)
        acc = acc + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(acc)):
            break
    out[near] = acc
    xf, mf = x[~near], m[~near]
    out[~near] = xf * np.log(xf / mf) + mf - xf
    return out


def _log_pmf(k: np.ndarray, n: int, q0: float, q1: float) -> np.ndarray:
    """Natural log of the binomial pmf ``C(n,k) q0^k q1^(n-k)``.

    Interior counts use Loader's saddle-point form, which keeps full
    relative precision for ``n`` in the millions where differences of
    log-gamma values lose about nine digits.
    """
    k = np.asarray(k, dtype=float)
    out = np.full(k.shape, -np.inf)
    edge0 = k == 0
    edgen = k == n
    out[edge0] = xlogy(n, q1)
    out[edgen] = xlogy(n, q0)
    inner = ~(edge0 | edgen)
    if q0 <= 0 or q1 <= 0:
        return out
    ki = k[inner]
    out[inner] = (
        _stirlerr(np.array([n]))[0] - _stirlerr(ki) - _stirlerr(n - ki)
        - _bd0(ki, n * q0) - _bd0(n - ki, n * q1)
        - 0.5 * np.log(2 * math.pi * ki * (1 - ki / n))
    )
    return out


def log_typical_mass(spec: TypicalSetSpec, dist: ProjectedDistribution) -> float:
    """Natural log of :func:`typical_mass`; ``-inf`` for a zero mass."""
    lo, hi = spec.window
    if lo > hi:
        return -math.inf
    k = np.arange(lo, hi + 1, dtype=float)
    logs = _log_pmf(k, spec.n, dist.q0, dist.q1)
    top = float(np.max(logs))
    if top == -math.inf:
        return -math.inf
    terms = np.sort(np.exp(logs - top))
    return top + math.log(math.fsum(terms))


def typical_mass(spec: TypicalSetSpec, dist: ProjectedDistribution) -> float:
    """Probability that an i.i.d. ``dist`` sequence of length ``n`` is typical.

    Exact binomial sum over the window, accumulated in log space.
    """
    return math.exp(min(0.0, log_typical_mass(spec, dist)))


def _window_edges(ns: np.ndarray, eps: Fraction, q: Fraction) -> tuple:
    a = q - eps / 2
    b = q + eps / 2
    big = int(ns.max()) * max(abs(a.numerator), abs(b.numerator), 1)
    if big < 2**62:
        lo = -((-ns * a.numerator) // a.denominator)
        hi = (ns * b.numerator) // b.denominator
    else:
        lo = np.array([math.ceil(int(m) * a) for m in ns], dtype=np.int64)
        hi = np.array([math.floor(int(m) * b) for m in ns], dtype=np.int64)
    return np.maximum(lo, 0), np.minimum(hi, ns)


def window_mass(ns, eps: Number, q: Number, q0: float) -> np.ndarray:
    """Vectorised :func:`typical_mass` over many sequence lengths ``ns``.

    Uses the regularised incomplete beta function for the binomial CDF and
    always subtracts on the side that avoids cancellation.
    """
    ns = np.atleast_1d(np.asarray(ns, dtype=np.int64))
    eps, q = to_fraction(eps), to_fraction(q)
    lo, hi = _window_edges(ns, eps, q)
    nf = ns.astype(float)
    lo_m1 = np.maximum(lo - 1, 0)
    hi_c = np.clip(hi, 0, ns)
    below = np.where(lo > 0, bdtr(lo_m1, ns, q0), 0.0)
    above = np.where(hi < ns, bdtrc(hi_c, ns, q0), 0.0)
    at_or_below_hi = np.where(hi < ns, bdtr(hi_c, ns, q0), 1.0)
    at_or_above_lo = np.where(lo > 0, bdtrc(lo_m1, ns, q0), 1.0)
    mean = q0 * nf
    mass = np.where(
        mean > hi,
        at_or_below_hi - below,
        np.where(mean < lo, at_or_above_lo - above, 1.0 - below - above),
    )
    mass = np.where(lo > hi, 0.0, mass)
    return np.clip(mass, 0.0, 1.0)


@dataclass(frozen=True)
class Lemma1Result:
    mass: float
    satisfied: bool
    eps_prime: Fraction
    nested_mass: float


def nesting_holds(n: int, eps: Number, q: Number, qprime: Number) -> bool:
    """Check ``A(n, eps', q') subset A(n, eps, q)`` with ``eps' = eps - 2|q'-q|``,
    by testing every ``k`` in ``0..n``.
    """
    eps, q, qprime = to_fraction(eps), to_fraction(q), to_fraction(qprime)
    eps_prime = eps - 2 * abs(qprime - q)
    if eps_prime < 0:
        raise ValueError("q' lies outside the typicality window of q")
    for k in range(n + 1):
        inner = abs(2 * k - 2 * qprime * n) <= eps_prime * n
        outer = abs(2 * k - 2 * q * n) <= eps * n
        if inner and not outer:
            return False
    return True


def lemma1_check(spec: TypicalSetSpec, qprime: Number, delta: float) -> Lemma1Result:
    """Mass of the typical set of ``q`` under a nearby distribution ``q'``.

    Requires ``|q' - q| <= eps/2``.  Also reports the mass of the nested set
    ``A(n, eps', q')``, which lower-bounds ``mass``.
    """
    qp = to_fraction(qprime)
    if not 0 <= qp <= 1:
        raise ValueError(f"q' must be a probability, got {qprime!r}")
    if 2 * abs(qp - spec.q) > spec.eps:
        raise ValueError(f"|q' - q| = {float(abs(qp - spec.q))} exceeds eps/2")
    eps_prime = spec.eps - 2 * abs(qp - spec.q)
    dist = ProjectedDistribution.from_q0(float(qp))
    mass = typical_mass(spec, dist)
    lo, hi = typical_window(spec.n, eps_prime, qp)
    if lo > hi:
        nested = 0.0
    else:
        k = np.arange(lo, hi + 1, dtype=float)
        nested = min(1.0, math.fsum(np.sort(np.exp(_log_pmf(k, spec.n, dist.q0, dist.q1)))))
    return Lemma1Result(mass, mass >= 1.0 - delta, eps_prime, nested)


@dataclass(frozen=True)
class ExponentResult:
    """Large-deviation data for the typical window under ``dist``.

    ``min_divergence`` is the minimum of ``D(k/n || q0)`` over the feasible
    counts, and ``bound = (n+1) 2^(-n min_divergence)`` upper-bounds the
    typical mass.  ``continuum_min`` minimises over the real window instead.
    """

    n: int
    min_divergence: float
    argmin_k: Optional[int]
    continuum_min: float
    continuum_argmin: float
    bound: float
    log2_bound: float

    @property
    def empty_window(self) -> bool:
        return self.argmin_k is None


def continuum_min_divergence(eps: Number, q: Number, q0: float) -> tuple:
    """``min D(P||q0)`` over real ``P0`` in ``[q - eps/2, q + eps/2] cap [0, 1]``."""
    eps, q = to_fraction(eps), to_fraction(q)
    a = float(max(q - eps / 2, Fraction(0)))
    b = float(min(q + eps / 2, Fraction(1)))
    p = min(max(q0, a), b)
    return relative_entropy(p, q0), p


def error_exponent(spec: TypicalSetSpec, dist: ProjectedDistribution) -> ExponentResult:
    """Method-of-types exponent for the typical window, by full enumeration."""
    n = spec.n
    cmin, cargmin = continuum_min_divergence(spec.eps, spec.q, dist.q0)
    ks = np.array(spec.feasible_counts())
    if ks.size == 0:
        return ExponentResult(n, math.inf, None, cmin, cargmin, 0.0, -math.inf)
    d = relative_entropy(ks / n, dist.q0)
    i = int(np.argmin(d))
    dmin = float(d[i])
    log2_bound = math.log2(n + 1) - n * dmin
    return ExponentResult(n, dmin, int(ks[i]), cmin, cargmin, 2.0**log2_bound, log2_bound)


class TailMode(str, enum.Enum):
    EXACT_TAIL = "exact"
    EXPONENT_BOUND = "exponent"


@dataclass(frozen=True)
class RequiredN:
    """Outcome of :func:`required_n_search`.

    Every ``m >= n`` satisfies the criterion: ``m < horizon`` was checked
    one by one, and beyond ``certified_from`` the exponent bound
    ``(m+1) 2^(-m D*)`` settles it analytically.
    """

    n: int
    inside: bool
    horizon: int
    certified_from: int
    continuum_exponent: float


def is_inside(eps: Number, q: Number, q0: float) -> bool:
    """Whether ``q0`` lies in the closed window ``|q0 - q| <= eps/2`` (exactly)."""
    return 2 * abs(Fraction(q0) - to_fraction(q)) <= to_fraction(eps)


def _bound_certificate(d_star: float, delta: float) -> int:
    """Smallest ``N`` such that ``(m+1) 2^(-m d_star) <= delta`` for all ``m >= N``.

    ``log(m+1) - m d_star ln2`` is concave in ``m``, so past its peak the
    condition is monotone and a bisection finds the entry point.
    """
    if d_star <= 0:
        raise ValueError("zero exponent: no finite sample size certifies the criterion")
    rate = d_star * LN2
    log_delta = math.log(delta)

    def ok(m: int) -> bool:
        return math.log(m + 1) - m * rate <= log_delta

    peak = max(1, math.ceil(1.0 / rate - 1.0))
    if ok(peak) and ok(max(1, peak - 1)):
        return 1
    lo, hi = peak, 2 * peak
    while not ok(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _scan_failures(criterion, upto: int) -> int:
    """Largest ``m`` in ``[1, upto)`` failing ``criterion``; 0 if none."""
    last = 0
    for start in range(1, upto, _CHUNK):
        ns = np.arange(start, min(start + _CHUNK, upto), dtype=np.int64)
        bad = np.flatnonzero(~criterion(ns))
        if bad.size:
            last = int(ns[bad[-1]])
    return last


def _exponent_bound_many(ns: np.ndarray, eps: Fraction, q: Fraction, q0: float,
                         inside: bool) -> np.ndarray:
    """``(m+1) 2^(-m min D)`` over the wrong types: feasible ones when ``q0``
    is outside the window, infeasible ones when inside.
    """
    lo, hi = _window_edges(ns, eps, q)
    nf = ns.astype(float)
    if inside:
        d_lo = np.where(lo > 0, relative_entropy(np.maximum(lo - 1, 0) / nf, q0), np.inf)
        d_hi = np.where(hi < ns, relative_entropy(np.minimum(hi + 1, ns) / nf, q0), np.inf)
        dmin = np.minimum(d_lo, d_hi)
    else:
        nearest = np.where(q0 * nf > hi, hi, lo)
        dmin = relative_entropy(np.clip(nearest, 0, ns) / nf, q0)
        dmin = np.where(lo > hi, np.inf, dmin)
    with np.errstate(over="ignore"):
        return np.exp2(np.log2(nf + 1) - nf * dmin)


def required_n_search(eps: Number, delta: float, dist: ProjectedDistribution,
                      mode: TailMode = TailMode.EXACT_TAIL, q: Number = Fraction(1, 2),
                      min_horizon: int = 1000, max_n: int = 50_000_000) -> RequiredN:
    """Smallest ``N`` such that the typicality test behaves for all ``n >= N``.

    If ``dist.q0`` lies in the window (inside case) the criterion is
    ``mass >= 1 - delta``; otherwise it is ``mass <= delta``.  Tails are not
    monotone in ``n`` because the window edges quantise, so every ``n`` up to
    the analytic certificate is checked.

    Raises
    ------
    ValueError
        When ``delta`` is outside ``(0, 1]`` or when no finite ``N`` exists
        (``q0`` sits exactly on a window edge).
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    eps, q = to_fraction(eps), to_fraction(q)
    mode = TailMode(mode)
    q0 = dist.q0
    inside = is_inside(eps, q, q0)
    if delta >= 1:
        return RequiredN(1, inside, 1, 1, math.nan)

    a = float(max(q - eps / 2, Fraction(0)))
    b = float(min(q + eps / 2, Fraction(1)))
    if inside:
        # only edges that cut off probability mass matter
        exps = []
        if q - eps / 2 > 0:
            exps.append(relative_entropy(a, q0))
        if q + eps / 2 < 1:
            exps.append(relative_entropy(b, q0))
        d_star = min(exps) if exps else math.inf
    else:
        d_star = continuum_min_divergence(eps, q, q0)[0]

    certified = 1 if d_star == math.inf else _bound_certificate(d_star, delta)
    if certified > max_n:
        raise ValueError(
            f"certified sample size {certified} exceeds the search limit {max_n}"
        )

    if mode is TailMode.EXACT_TAIL:
        def criterion(ns):
            m = window_mass(ns, eps, q, q0)
            return m >= 1.0 - delta if inside else m <= delta
    else:
        def criterion(ns):
            bound = _exponent_bound_many(ns, eps, q, q0, inside)
            return bound <= delta

    horizon = max(certified, min_horizon)
    last_fail = _scan_failures(criterion, horizon)
    return RequiredN(last_fail + 1, inside, horizon, certified, d_star)


def required_n(eps: Number, delta: float, dist: ProjectedDistribution,
               mode: TailMode = TailMode.EXACT_TAIL, q: Number = Fraction(1, 2)) -> int:
    return required_n_search(eps, delta, dist, mode, q).n
