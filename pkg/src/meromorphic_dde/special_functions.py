"""Weierstrass P, the mu = 0 closed-form solution, trigamma, Xi and the mu-kernel."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateShift, LatticePoint, PolePoint
from .patch import PoleRecord, SolutionPatch, StripRegion

# B_2 .. B_12
BERNOULLI = (
    Fraction(1, 6),
    Fraction(-1, 30),
    Fraction(1, 42),
    Fraction(-1, 30),
    Fraction(5, 66),
    Fraction(-691, 2730),
)

_LAURENT_TERMS = 48


def _gauss_reduce(p1: complex, p2: complex) -> tuple[complex, complex]:
    """Lagrange-Gauss reduction of a 2D lattice basis (shortest first)."""
    for _ in range(100):
        if abs(p2) < abs(p1):
            p1, p2 = p2, p1
        mu = (p2 * p1.conjugate()).real / abs(p1) ** 2
        m = round(mu)
        if m == 0:
            break
        p2 = p2 - m * p1
    if (p2 / p1).imag < 0:
        p2 = -p2
    return p1, p2


def _sigma(n: int, k: int) -> int:
    return sum(d**k for d in range(1, n + 1) if n % d == 0)


@dataclass(frozen=True)
class Lattice:
    """Period lattice p1*Z + p2*Z with Im(p2/p1) > 0."""

    p1: complex
    p2: complex

    def __post_init__(self):
        p1, p2 = complex(self.p1), complex(self.p2)
        if not (p2 / p1).imag > 0:
            raise ValueError("periods must satisfy Im(p2/p1) > 0")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)
        r1, r2 = _gauss_reduce(p1, p2)
        object.__setattr__(self, "_basis", (r1, r2))
        tau = r2 / r1
        q = cmath.exp(2j * math.pi * tau)
        e4 = 1 + 240 * sum(_sigma(n, 3) * q**n for n in range(1, 40))
        e6 = 1 - 504 * sum(_sigma(n, 5) * q**n for n in range(1, 40))
        g2 = 60 * 2 * (math.pi**4 / 90) / r1**4 * e4
        g3 = 140 * 2 * (math.pi**6 / 945) / r1**6 * e6
        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "g3", g3)
        object.__setattr__(self, "_laurent", _laurent_coeffs(g2, g3, _LAURENT_TERMS))
        object.__setattr__(self, "r_min", abs(r1))

    def reduce(self, z):
        """Translate z into the Voronoi cell of the origin."""
        r1, r2 = self._basis
        z = np.asarray(z, dtype=complex)
        m = np.array([[r1.real, r2.real], [r1.imag, r2.imag]])
        coords = np.linalg.solve(m, np.stack([z.real.ravel(), z.imag.ravel()]))
        k = np.round(coords)
        w = z.ravel() - k[0] * r1 - k[1] * r2
        best = w.copy()
        for d1 in (-1, 0, 1):
            for d2 in (-1, 0, 1):
                cand = w - d1 * r1 - d2 * r2
                better = np.abs(cand) < np.abs(best)
                best = np.where(better, cand, best)
        return best.reshape(z.shape)

    def points(self, center: complex, radius: float):
        """Lattice points within ``radius`` of ``center``."""
        r1, r2 = self._basis
        n = int(radius / min(abs(r1), abs(r2 - (r2 * r1.conjugate()).real / abs(r1) ** 2 * r1))) + 2
        out = []
        c0 = center - complex(self.reduce(center))
        for i in range(-n, n + 1):
            for j in range(-n, n + 1):
                w = c0 + i * r1 + j * r2
                if abs(w - center) <= radius:
                    out.append(w)
        return out

    def to_json(self) -> dict:
        return {"p1": [self.p1.real, self.p1.imag], "p2": [self.p2.real, self.p2.imag],
                "g2": [self.g2.real, self.g2.imag], "g3": [self.g3.real, self.g3.imag]}


def _laurent_coeffs(g2: complex, g3: complex, n: int) -> np.ndarray:
    """c_k with P(z) = 1/z^2 + sum_{k>=2} c_k z^(2k-2)."""
    c = np.zeros(n + 1, dtype=complex)
    c[2] = g2 / 20
    if n >= 3:
        c[3] = g3 / 28
    for k in range(4, n + 1):
        s = sum(c[m] * c[k - m] for m in range(2, k - 1))
        c[k] = 3 * s / ((2 * k + 1) * (k - 3))
    return c


def _wp_laurent(u, lat: Lattice):
    c = lat._laurent
    u2 = u * u
    p = np.zeros_like(u)
    dp = np.zeros_like(u)
    for k in range(len(c) - 1, 1, -1):
        p = p * u2 + c[k]
        dp = dp * u2 + (2 * k - 2) * c[k]
    # p holds sum c_k u^(2k-4); dp holds sum (2k-2) c_k u^(2k-4)
    wp = 1 / u2 + p * u2
    wpp = -2 / (u2 * u) + dp * u
    return wp, wpp


def wp_both(z, lattice: Lattice):
    """(P(z), P'(z)) with lattice reduction plus halving and duplication."""
    z = np.asarray(z, dtype=complex)
    w = lattice.reduce(z)
    if np.any(np.abs(w) < 1e-300):
        raise LatticePoint("z is a lattice point")
    thresh = 0.5 * lattice.r_min
    m = np.maximum(0, np.ceil(np.log2(np.maximum(np.abs(w) / thresh, 1e-300)))).astype(int)
    u = w / 2.0**m
    P, Q = _wp_laurent(u, lattice)
    g2 = lattice.g2
    for step in range(int(m.max()) if m.size else 0):
        act = m > step
        R = 6 * P**2 - g2 / 2
        P2 = R**2 / (4 * Q**2) - 2 * P
        Q2 = (12 * P * Q**2 * R - R**3) / (4 * Q**3) - Q
        P = np.where(act, P2, P)
        Q = np.where(act, Q2, Q)
    return P, Q


def wp(z, lattice: Lattice):
    return wp_both(z, lattice)[0]


def wp_prime(z, lattice: Lattice):
    return wp_both(z, lattice)[1]


def mu0_solution(lattice: Lattice, x0: complex, a: float, region: StripRegion | None = None) -> SolutionPatch:
    """Closed-form solution of the mu = 0 equation built from P and P'.

    f(x) = -(1/2) (P'(x-x0) - P'(a)) / (P(x-x0) - P(a)); simple poles at
    x0 + L (residue +1) and x0 - a + L (residue -1).
    """
    ra = complex(lattice.reduce(a))
    if abs(ra) < 1e-9 or abs(complex(lattice.reduce(2 * a))) < 1e-9:
        raise DegenerateShift("a is congruent to a lattice point or a half period")
    Pa, Qa = wp_both(a, lattice)
    Pa, Qa = complex(Pa), complex(Qa)
    g2 = lattice.g2

    def value(x):
        P, Q = wp_both(np.asarray(x, dtype=complex) - x0, lattice)
        return -0.5 * (Q - Qa) / (P - Pa)

    def derivative(x):
        P, Q = wp_both(np.asarray(x, dtype=complex) - x0, lattice)
        R = 6 * P**2 - g2 / 2
        D = P - Pa
        return -0.5 * (R * D - (Q - Qa) * Q) / D**2

    if region is None:
        region = StripRegion((-1e3, 1e3), -1e3, 1e3)
        poles = ()
    else:
        poles = tuple(_mu0_poles(lattice, x0, a, region))
    return SolutionPatch(region, value, derivative, poles)


def mu0_pole_lattice(lattice: Lattice, x0: complex, a: float, region: StripRegion, pad: float = 0.0):
    """Predicted (location, residue) pairs inside ``region`` (optionally padded)."""
    c = complex(0.5 * (region.xi_range[0] + region.xi_range[1]), 0.5 * (region.eta_lo + region.eta_hi))
    rad = 0.5 * math.hypot(region.width, region.height) + pad + 1
    out = []
    for shift, res in ((x0, 1.0), (x0 - a, -1.0)):
        for p in lattice.points(c - shift, rad):
            x = p + shift
            if region.contains(x, pad=pad):
                out.append((complex(x), res))
    out.sort(key=lambda t: (round(t[0].real, 9), round(t[0].imag, 9)))
    return out


def _mu0_poles(lattice, x0, a, region):
    for x, r in mu0_pole_lattice(lattice, x0, a, region):
        N, kind = (1, "m8") if r < 0 else (2, "m9")
        yield PoleRecord(x, 0, N, complex(r), kind)


# --------------------------------------------------------------------------
# trigamma, Xi, mu-kernel


def trigamma_asymptotic(z, kmax: int = 6):
    """1/z + 1/(2 z^2) + sum_{k<=kmax} B_{2k} / z^(2k+1)."""
    z = np.asarray(z, dtype=complex)
    s = 1 / z + 1 / (2 * z * z)
    zk = z
    z2 = z * z
    for k in range(1, kmax + 1):
        zk = zk * z2
        B = BERNOULLI[k - 1]
        s = s + (B.numerator / B.denominator) / zk
    return s


def trigamma(z, shift_to: float = 16.0):
    """psi'(z) via psi'(z) = psi'(z+1) + 1/z^2 and the Bernoulli asymptotic series."""
    z = np.asarray(z, dtype=complex)
    bad = (np.abs(z.imag) < 1e-300) & (z.real <= 0) & (np.abs(z.real - np.round(z.real)) < 1e-300)
    if np.any(bad):
        raise PolePoint("trigamma has poles at nonpositive integers")
    acc = np.zeros_like(z)
    w = z.copy()
    n = np.maximum(0, np.ceil(shift_to - w.real)).astype(int)
    for i in range(int(n.max()) if n.size else 0):
        act = n > i
        acc = acc + np.where(act, 1 / (w * w), 0)
        w = np.where(act, w + 1, w)
    return acc + trigamma_asymptotic(w)


def xi_big(x):
    """x coth x - 1, with the Taylor branch near 0."""
    x = np.asarray(x, dtype=complex)
    k = np.round(x.imag / math.pi)
    if np.any((np.abs(x.real) < 1e-14) & (np.abs(x.imag - k * math.pi) < 1e-14) & (k != 0)):
        raise PolePoint("Xi has poles at i*pi*k, k != 0")
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    big = xs / np.tanh(xs) - 1
    x2 = x * x
    taylor = x2 / 3 - x2 * x2 / 45 + 2 * x2**3 / 945 - x2**4 / 4725
    return np.where(small, taylor, big)


def xi_over_x(x):
    """(x coth x - 1) / x, regular at 0."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    big = (xs / np.tanh(xs) - 1) / xs
    x2 = x * x
    taylor = x / 3 - x * x2 / 45 + 2 * x * x2**2 / 945 - x * x2**3 / 4725
    return np.where(small, taylor, big)


def mu_kernel(z, b: float):
    """(1/2b) psi'(1 + z/2b) - 1/(z + 2b); double poles at z = -2kb, k >= 1."""
    z = np.asarray(z, dtype=complex)
    t = z / (2 * b)
    k = np.round(-t.real)
    if np.any((k >= 1) & (np.abs(t + k) < 1e-300)):
        raise PolePoint("mu-kernel has double poles at z = -2kb")
    return trigamma(1 + t) / (2 * b) - 1 / (z + 2 * b)


def psi0_estimate(b: float, r_range=(1.0, 100.0), max_arg=math.pi / 3, n_r=200, n_arg=61):
    """sup |mu(z)| |z+2b|^2 / b on a polar grid; returns (sup, grid size)."""
    r = np.geomspace(r_range[0], r_range[1], n_r)
    th = np.linspace(-max_arg, max_arg, n_arg)
    z = (r[:, None] * np.exp(1j * th[None, :])).ravel()
    vals = np.abs(mu_kernel(z, b)) * np.abs(z + 2 * b) ** 2 / b
    return float(vals.max())
