"""Half-power formal series and the formal solutions of the shift equation.

A :class:`HalfPowerSeries` stores coefficients ``c_n`` of ``z**(-n/2)`` for
``n = n_min, ..., n_trunc``.  Negative ``n`` encode growing terms, so
``lambda*sqrt(z)`` sits at ``n = -1``.  ``n_trunc = None`` marks an exact
(finite) series; otherwise everything from ``n_trunc + 1`` on is unknown.

Coefficients may be :class:`fractions.Fraction` (exact mode), Python
``complex`` (float mode) or ``mpmath.mpc`` (high-precision mode).  All
series values are immutable.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction
from typing import Any

import mpmath

from .errors import AsymptoticDivergence, DegenerateLambda

MP_DPS = 40

__all__ = [
    "HalfPowerSeries",
    "DDEParameters",
    "FormalSolution",
    "binomial",
    "box_of_power",
    "delta_of_power",
    "box",
    "delta",
    "series_add",
    "series_sub",
    "series_mul",
    "series_diff",
    "series_scale",
    "lambda_from_mu",
    "arg_lambda",
    "formal_solution",
    "dde_residual_formal",
    "leading_residual_order",
    "evaluate_series",
]


def _min_trunc(*ts):
    vals = [t for t in ts if t is not None]
    return min(vals) if vals else None


def _is_zero(c) -> bool:
    return c == 0


def lift(q: Fraction, proto):
    """Convert an exact rational into the coefficient field of ``proto``."""
    if isinstance(proto, Fraction) or isinstance(proto, int):
        return q
    if isinstance(proto, (mpmath.mpf, mpmath.mpc)):
        return mpmath.mpf(q.numerator) / q.denominator
    return q.numerator / q.denominator


@dataclass(frozen=True)
class HalfPowerSeries:
    n_min: int
    coeffs: tuple
    n_trunc: int | None = None

    def __post_init__(self):
        coeffs = tuple(self.coeffs)
        n_min = self.n_min
        # strip leading zeros so the leading coefficient is nonzero
        while coeffs and _is_zero(coeffs[0]):
            coeffs = coeffs[1:]
            n_min += 1
        if self.n_trunc is not None:
            keep = max(0, self.n_trunc - n_min + 1)
            coeffs = coeffs[:keep]
        # trailing zeros carry no information
        while coeffs and _is_zero(coeffs[-1]):
            coeffs = coeffs[:-1]
        if not coeffs and self.n_trunc is not None:
            n_min = min(n_min, self.n_trunc + 1)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "n_min", n_min)

    @classmethod
    def from_dict(cls, terms: dict[int, Any], n_trunc: int | None = None):
        if not terms:
            return cls(0 if n_trunc is None else n_trunc + 1, (), n_trunc)
        lo, hi = min(terms), max(terms)
        zero = 0 * next(iter(terms.values()))
        return cls(lo, tuple(terms.get(n, zero) for n in range(lo, hi + 1)), n_trunc)

    @classmethod
    def monomial(cls, n: int, c=Fraction(1), n_trunc: int | None = None):
        return cls(n, (c,), n_trunc)

    @property
    def n_max(self) -> int:
        """Largest index carrying a stored coefficient."""
        return self.n_min + len(self.coeffs) - 1

    def is_exact(self) -> bool:
        return self.n_trunc is None

    def coeff(self, n: int):
        if self.n_trunc is not None and n > self.n_trunc:
            raise IndexError(f"order {n} lies beyond truncation {self.n_trunc}")
        if self.n_min <= n <= self.n_max:
            return self.coeffs[n - self.n_min]
        return 0

    def items(self):
        for i, c in enumerate(self.coeffs):
            if not _is_zero(c):
                yield self.n_min + i, c

    def truncate(self, n_trunc: int) -> "HalfPowerSeries":
        t = _min_trunc(self.n_trunc, n_trunc)
        return HalfPowerSeries(self.n_min, self.coeffs, t)

    def map(self, fn) -> "HalfPowerSeries":
        return HalfPowerSeries(self.n_min, tuple(fn(c) for c in self.coeffs), self.n_trunc)

    def __add__(self, other):
        return series_add(self, _as_series(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return series_sub(self, _as_series(other, self))

    def __rsub__(self, other):
        return series_sub(_as_series(other, self), self)

    def __neg__(self):
        return self.map(lambda c: -c)

    def __mul__(self, other):
        if isinstance(other, HalfPowerSeries):
            return series_mul(self, other)
        return series_scale(self, other)

    __rmul__ = __mul__

    def __repr__(self):
        body = " + ".join(f"({c})z^({-n}/2)" for n, c in self.items()) or "0"
        tail = "" if self.n_trunc is None else f" + O(z^({-(self.n_trunc + 1)}/2))"
        return f"HalfPowerSeries[{body}{tail}]"


def _as_series(x, like: HalfPowerSeries) -> HalfPowerSeries:
    if isinstance(x, HalfPowerSeries):
        return x
    return HalfPowerSeries(0, (x,), None)


def series_add(s1: HalfPowerSeries, s2: HalfPowerSeries) -> HalfPowerSeries:
    t = _min_trunc(s1.n_trunc, s2.n_trunc)
    terms: dict[int, Any] = {}
    for s in (s1, s2):
        for n, c in s.items():
            if t is None or n <= t:
                terms[n] = terms.get(n, 0) + c
    return HalfPowerSeries.from_dict(terms, t)


def series_sub(s1, s2):
    return series_add(s1, -s2)


def series_scale(s: HalfPowerSeries, c) -> HalfPowerSeries:
    if _is_zero(c):
        return HalfPowerSeries.from_dict({}, s.n_trunc)
    return s.map(lambda x: x * c)


def _lead(s: HalfPowerSeries):
    if s.coeffs:
        return s.n_min
    return math.inf if s.n_trunc is None else s.n_trunc + 1


def series_mul(s1: HalfPowerSeries, s2: HalfPowerSeries) -> HalfPowerSeries:
    """Cauchy product; the result is trusted only where both factors are."""
    cands = []
    if s1.n_trunc is not None:
        cands.append(s1.n_trunc + _lead(s2))
    if s2.n_trunc is not None:
        cands.append(s2.n_trunc + _lead(s1))
    cands = [c for c in cands if c != math.inf]
    t = min(cands) if cands else None
    terms: dict[int, Any] = {}
    for n1, c1 in s1.items():
        for n2, c2 in s2.items():
            n = n1 + n2
            if t is None or n <= t:
                terms[n] = terms.get(n, 0) + c1 * c2
    return HalfPowerSeries.from_dict(terms, t)


def series_diff(s: HalfPowerSeries) -> HalfPowerSeries:
    """d/dz:  c z^(-n/2)  ->  -(n/2) c z^(-n/2 - 1)."""
    terms = {}
    for n, c in s.items():
        if n != 0:
            terms[n + 2] = c * lift(Fraction(-n, 2), c)
    t = None if s.n_trunc is None else s.n_trunc + 2
    return HalfPowerSeries.from_dict(terms, t)


@lru_cache(maxsize=4096)
def binomial(alpha: Fraction, j: int) -> Fraction:
    out = Fraction(1)
    for i in range(j):
        out = out * (alpha - i) / (i + 1)
    return out


def _shift_power(alpha: Fraction, b, J: int, parity: int):
    """2*sum_{j<=J, j%2==parity} C(alpha,j) b^j z^(alpha-j); also returns exactness."""
    terms = {}
    n0 = int(-2 * alpha)
    for j in range(parity, J + 1, 2):
        c = binomial(alpha, j)
        if c != 0:
            terms[n0 + 2 * j] = 2 * lift(c, b) * b**j
    # the expansion terminates when alpha is a nonnegative integer < next j
    nxt = J + 1 if (J + 1) % 2 == parity else J + 2
    exact = alpha.denominator == 1 and alpha >= 0 and nxt > alpha
    return terms, exact


def box_of_power(alpha, b, J: int) -> HalfPowerSeries:
    """(z+b)^alpha + (z-b)^alpha expanded through binomial order J."""
    alpha = Fraction(alpha)
    terms, exact = _shift_power(alpha, b, J, 0)
    return HalfPowerSeries.from_dict(terms, None if exact else int(-2 * alpha) + 2 * J)


def delta_of_power(alpha, b, J: int) -> HalfPowerSeries:
    """(z+b)^alpha - (z-b)^alpha expanded through binomial order J."""
    alpha = Fraction(alpha)
    terms, exact = _shift_power(alpha, b, J, 1)
    return HalfPowerSeries.from_dict(terms, None if exact else int(-2 * alpha) + 2 * J)


def _shift_series(s: HalfPowerSeries, b, parity: int, depth: int | None) -> HalfPowerSeries:
    if s.n_trunc is not None:
        t_out = s.n_trunc + (2 if parity else 0)
    elif depth is None:
        raise ValueError("an exact series needs an explicit binomial depth")
    else:
        t_out = None
    terms: dict[int, Any] = {}
    t_exp = []
    for n, c in s.items():
        alpha = Fraction(-n, 2)
        if t_out is not None:
            J = max(0, -(-(t_out - n) // 2))
        else:
            J = depth
        part, exact = _shift_power(alpha, b, J, parity)
        if not exact:
            t_exp.append(n + 2 * J)
        for m, v in part.items():
            terms[m] = terms.get(m, 0) + c * v
    t = _min_trunc(t_out, *t_exp) if t_out is not None or t_exp else None
    return HalfPowerSeries.from_dict(terms, t)


def box(s: HalfPowerSeries, b, depth: int | None = None) -> HalfPowerSeries:
    """g(z+b) + g(z-b) applied termwise."""
    return _shift_series(s, b, 0, depth)


def delta(s: HalfPowerSeries, b, depth: int | None = None) -> HalfPowerSeries:
    """g(z+b) - g(z-b) applied termwise."""
    return _shift_series(s, b, 1, depth)


# --------------------------------------------------------------------------
# formal solutions


@dataclass(frozen=True)
class DDEParameters:
    a: Any
    mu: Any

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("step a must be positive")

    @property
    def b(self):
        return self.a / 2


def _rational_sqrt(q: Fraction):
    if q < 0:
        return None
    rn, rd = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if rn * rn == q.numerator and rd * rd == q.denominator:
        return Fraction(rn, rd)
    return None


def lambda_from_mu(params: DDEParameters, sign: str = "+") -> complex:
    """sign * principal sqrt(-mu/(2b))."""
    if params.mu == 0:
        raise DegenerateLambda("mu = 0: lambda vanishes and the formal recursion is undefined")
    s = 1 if sign == "+" else -1
    return s * cmath.sqrt(-complex(params.mu) / (2 * float(params.b)))


def arg_lambda(lam) -> float:
    """arg in [0, 2*pi)."""
    t = cmath.phase(complex(lam))
    if t < 0:
        t += 2 * math.pi
    if t >= 2 * math.pi:
        t -= 2 * math.pi
    return t


@dataclass(frozen=True)
class FormalSolution:
    params: DDEParameters
    branch: str
    lam: Any
    c0: Any
    y: tuple  # y[0] is y_2
    kind: str = "exact"

    @property
    def K(self) -> int:
        return len(self.y) + 1

    def y_k(self, k: int):
        return self.y[k - 2]

    def as_series(self, K: int | None = None, exact: bool = False) -> HalfPowerSeries:
        """lambda z^(1/2) + c0 + sum y_k z^(-k/2), truncated at K."""
        K = self.K if K is None else K
        terms = {-1: self.lam, 0: self.c0}
        for k in range(2, K + 1):
            terms[k] = self.y_k(k)
        return HalfPowerSeries.from_dict(terms, None if exact else K)

    def to_json(self) -> dict:
        def pair(c):
            c = complex(c)
            return [c.real, c.imag]

        mu = complex(self.params.mu)
        out = {
            "a": float(self.params.a),
            "mu": [mu.real, mu.imag],
            "branch": self.branch,
            "lambda": pair(self.lam),
            "c0": pair(self.c0),
            "y": [pair(c) for c in self.y],
            "K": self.K,
            "kind": self.kind,
        }
        if self.kind == "exact":
            out["y_exact"] = [str(c) for c in self.y]
        return out


def _to_mp(v):
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def _field(params: DDEParameters, sign: str, kind: str):
    """Pick coefficient field; returns (kind, b, mu, lam)."""
    lam_c = lambda_from_mu(params, sign)
    if kind == "exact":
        try:
            a = Fraction(params.a)
            mu = complex(params.mu)
            if mu.imag == 0:
                muq = Fraction(mu.real)
                r = _rational_sqrt(-muq / a)
                if r is not None:
                    lam = r if sign == "+" else -r
                    return "exact", a / 2, muq, lam
        except (TypeError, ValueError):
            pass
        kind = "mp"
    if kind == "mp":
        b = _to_mp(params.a) / 2
        mu = mpmath.mpc(_to_mp(complex(params.mu).real if not isinstance(params.mu, Fraction) else params.mu),
                        complex(params.mu).imag)
        lam = mpmath.sqrt(-mu / (2 * b)) * (1 if sign == "+" else -1)
        return "mp", b, mu, lam
    b = float(params.a) / 2
    return "float", b, complex(params.mu), lam_c


def _reduced_residual(y: HalfPowerSeries, lam, b, one) -> HalfPowerSeries:
    """Left minus right side of the reduced equation for the correction y."""
    half = lift(Fraction(1, 2), one)
    sqrt_z = HalfPowerSeries.monomial(-1, one)
    inv_sqrt_z = HalfPowerSeries.monomial(1, one)
    lhs = delta(series_mul(sqrt_z, y), b)
    t = lhs.n_trunc
    yp = series_diff(y)
    inner = box(yp, b) - delta(series_mul(y, y), b) - series_scale(delta(y, b), 1 / b)
    free = series_scale(box(inv_sqrt_z, b, depth=t), lift(Fraction(1, 4), one)) - series_scale(
        delta(sqrt_z, b, depth=t), 1 / (2 * b)
    )
    rhs = series_scale(inner, half / lam) + free
    return (lhs - rhs).truncate(t)


def formal_solution(params: DDEParameters, sign: str = "+", K: int = 20, kind: str = "exact") -> FormalSolution:
    """Coefficients y_2..y_K of the formal solution.

    Matching the coefficient of z^(-(k+1)/2) gives a triangular system whose
    diagonal entry is (1-k) b, so each y_k follows from y_2..y_{k-1}.
    ``kind`` is "exact" (falls back to "mp" when lambda is irrational),
    "mp" or "float".
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if params.mu == 0:
        raise DegenerateLambda("mu = 0: lambda vanishes and the formal recursion is undefined")
    kind, b, mu, lam = _field(params, sign, kind)
    one = b / b
    with mpmath.workdps(MP_DPS):
        ys: dict[int, Any] = {}
        for k in range(2, K + 1):
            y = HalfPowerSeries.from_dict(dict(ys), k)
            res = _reduced_residual(y, lam, b, one)
            ys[k] = -res.coeff(k + 1) / ((1 - k) * b)
        c0 = 1 / (2 * b)
        coeffs = tuple(ys[k] if ys[k] != 0 else 0 * one for k in range(2, K + 1))
    return FormalSolution(params, sign, lam, c0, coeffs, kind)


def dde_residual_formal(fs: FormalSolution, exact_truncation: bool = False, check_order: int | None = None):
    """box f' - mu - delta f^2 for the truncated formal solution.

    With ``exact_truncation`` the partial sum is treated as an exact finite
    series (binomial depth chosen to cover ``check_order``), which exposes the
    order at which the truncation first shows up.
    """
    kind, b, mu, _ = _field(fs.params, fs.branch, fs.kind)
    with mpmath.workdps(MP_DPS):
        if exact_truncation:
            f = fs.as_series(exact=True)
            n_hi = check_order if check_order is not None else fs.K + 8
            f = f.truncate(n_hi)
            res = box(series_diff(f), b) - mu - delta(series_mul(f, f), b)
            return res.truncate(n_hi)
        f = fs.as_series()
        return box(series_diff(f), b) - mu - delta(series_mul(f, f), b)


def leading_residual_order(fs: FormalSolution, tol: float = 0.0, check_order: int | None = None) -> int | None:
    """Index n of the first nonzero residual coefficient (partial sum taken as exact)."""
    res = dde_residual_formal(fs, exact_truncation=True, check_order=check_order)
    for n, c in res.items():
        if abs(complex(c)) > tol:
            return n
    return None


def _zpow_half(z: complex, n: int, arg: float | None):
    """z^(-n/2) on the branch with the given tracked argument."""
    if arg is None:
        arg = cmath.phase(z)
    r = abs(z)
    return r ** (-n / 2) * cmath.exp(-1j * n * arg / 2)


def evaluate_series(s: HalfPowerSeries, z: complex, n_terms: int | str = "optimal",
                    tol: float | None = None, arg: float | None = None):
    """Partial sum of ``s`` at ``z`` and the magnitude of the first omitted term.

    ``n_terms`` counts stored terms (from ``n_min``).  In "optimal" mode the
    sum stops before the smallest nonzero term among those of decaying order
    (superasymptotic truncation).
    """
    z = complex(z)
    items = [(n, complex(c)) for n, c in s.items()]
    terms = [(n, c * _zpow_half(z, n, arg)) for n, c in items]
    if n_terms == "optimal":
        decaying = [i for i, (n, _) in enumerate(terms) if n > 0]
        if not decaying:
            stop = len(terms)
        else:
            mags = [abs(terms[i][1]) for i in decaying]
            imin = decaying[min(range(len(mags)), key=mags.__getitem__)]
            # keep the smallest term itself only if the series is exact and fully used
            stop = imin if (s.n_trunc is not None or imin < len(terms) - 1) else len(terms)
    else:
        stop = min(int(n_terms), len(terms))
    value = sum((t for _, t in terms[:stop]), 0j)
    if stop < len(terms):
        err = abs(terms[stop][1])
    elif s.n_trunc is None:
        err = 0.0
    else:
        # first omitted term unknown: use the last kept one as a conservative stand-in
        err = abs(terms[-1][1]) if terms else 0.0
    if tol is not None and err > tol:
        raise AsymptoticDivergence(f"smallest term {err:.3e} exceeds tolerance {tol:.3e} at |z|={abs(z):.4g}")
    return value, err
