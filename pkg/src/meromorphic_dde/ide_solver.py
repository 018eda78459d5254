"""Successive approximations for the integro-differential form of the equation.

With ``f = lam*sqrt(z) + 1/(2b) + y`` the remainder ``y`` solves

    y' + 2 lam sqrt(z) y = W[y],
    W[y] = (1/b) [mu * y + y(z + 2b) - y(z)] - y^2 - lam / (2 b sqrt(pi)) r(z),

and ``y = I W[y]`` with ``I`` the variation-of-constants integral along the
rays gamma(z).  Everything here is diagnostic grade: iterates live on a
half-plane window ``Re z >= z0`` as two-dimensional Chebyshev interpolants of
``z^p y(z)``, and the weighted norm is ``sup |z^2 y(z)|``.

Window coordinates.  With ``v = sqrt(z0 / z)`` the half-plane becomes the
lobe ``|v|^2 <= cos(2 arg v)``.  We use ``rho = sqrt(z0 / Re z)`` in [0, 1]
and ``t`` in [-1, 1] with ``arg v = (pi/4) sin(pi t / 2)``; the sine map makes
the lobe boundary analytic in ``t``.  Both ``rho = 0`` and ``t = +-1`` are the
point at infinity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import KernelGrowth, NoContraction, NonconvergentTail, OutsideSigma, RayHitsPole, TailBoundExceeded
from .sector_geometry import beta_n, gamma_contour
from .series_core import DDEParameters, arg_lambda, lambda_from_mu
from .special_functions import mu_kernel, xi_over_x

SQRT_PI = math.sqrt(math.pi)


def r_kernel(z: complex, b: float, alpha: float | None = None, epsabs: float = 1e-14, epsrel: float = 1e-12) -> complex:
    """Laplace transform of Xi(b p) p^(-3/2) along the ray arg p = -alpha.

    The substitution p = e^(-i alpha) s^2 removes the p^(1/2) behaviour at the
    origin, leaving a smooth Gaussian-type integrand in s.
    """
    z = complex(z)
    if alpha is None:
        alpha = math.atan2(z.imag, z.real)
    if abs(abs(alpha) - math.pi / 2) < 1e-12 or abs(alpha) > math.pi / 2:
        raise RayHitsPole("the Laplace ray must avoid the poles of Xi on the imaginary axis")
    rot = complex(math.cos(alpha), -math.sin(alpha))
    w = z * rot
    if w.real <= 0:
        raise NonconvergentTail("Re(z e^{-i alpha}) must be positive")
    # s = sigma / sqrt|w| puts the Gaussian bump at sigma ~ 1 for every z
    scale = 1 / math.sqrt(abs(w))
    pref = 2 * b * rot * complex(math.cos(alpha / 2), math.sin(alpha / 2)) * scale
    wn = w / abs(w)

    def integrand(sig):
        s = sig * scale
        return complex(np.exp(-wn * sig * sig) * xi_over_x(b * rot * s * s))

    val, err = quad(integrand, 0, np.inf, complex_func=True, epsabs=epsabs, epsrel=epsrel, limit=200)
    return pref * val


def r_asymptotic_constant(b: float) -> float:
    """lim z^(3/2) r(z): Watson's lemma on Xi(bp) p^(-3/2) ~ (b^2/3) p^(1/2)."""
    return b * b / 3 * math.gamma(1.5)


@dataclass(frozen=True)
class HalfPlaneGrid:
    """Chebyshev tensor grid on the window Re z >= z0."""

    z0: float
    n_rho: int = 24
    n_t: int = 24

    def to_coords(self, z):
        z = np.asarray(z, dtype=complex)
        v = np.sqrt(self.z0 / z)
        phi = np.angle(v)
        t = (2 / math.pi) * np.arcsin(np.clip(4 * phi / math.pi, -1.0, 1.0))
        rho = np.sqrt(self.z0 / z.real)
        return 2 * rho - 1, t

    def from_coords(self, rho, t):
        phi = (math.pi / 4) * np.sin(math.pi * np.asarray(t) / 2)
        re = self.z0 / np.asarray(rho) ** 2
        return re * (1 - 1j * np.tan(2 * phi))

    @property
    def node_coords(self):
        xr = C.chebpts1(self.n_rho)
        xt = C.chebpts1(self.n_t)
        return xr, xt

    @property
    def nodes(self) -> np.ndarray:
        """Complex nodes, shape (n_rho, n_t)."""
        xr, xt = self.node_coords
        return self.from_coords((xr[:, None] + 1) / 2, xt[None, :])

    def probe(self, n: int = 41) -> np.ndarray:
        """Interior probe points (the closed grid minus the point at infinity)."""
        rho = np.linspace(0, 1, n)[1:]
        t = np.linspace(-1, 1, n + 2)[1:-1]
        return self.from_coords(rho[:, None], t[None, :]).ravel()


@dataclass(frozen=True)
class SampledFunction:
    """y(z) = z^(-power) * g(rho, t) with g a Chebyshev tensor interpolant."""

    grid: HalfPlaneGrid
    coeffs: np.ndarray
    power: float

    @classmethod
    def zero(cls, grid: HalfPlaneGrid, power: float = 2.0) -> "SampledFunction":
        return cls(grid, np.zeros((grid.n_rho, grid.n_t), dtype=complex), power)

    @classmethod
    def from_nodes(cls, grid: HalfPlaneGrid, values: np.ndarray, power: float) -> "SampledFunction":
        z = grid.nodes
        g = np.asarray(values, dtype=complex) * z**power
        xr, xt = grid.node_coords
        Vr = C.chebvander(xr, grid.n_rho - 1)
        Vt = C.chebvander(xt, grid.n_t - 1)
        coeffs = np.linalg.solve(Vr, np.linalg.solve(Vt, g.T).T)
        return cls(grid, coeffs, power)

    @classmethod
    def from_callable(cls, grid: HalfPlaneGrid, fn, power: float) -> "SampledFunction":
        return cls.from_nodes(grid, fn(grid.nodes), power)

    def weighted(self, z):
        """g = z^power y at arbitrary points of the window."""
        xr, t = self.grid.to_coords(z)
        return C.chebval2d(xr, t, self.coeffs)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.weighted(z) * z ** (-self.power)

    def __sub__(self, other: "SampledFunction") -> "SampledFunction":
        if other.power != self.power or other.grid != self.grid:
            raise ValueError("incompatible sampled functions")
        return SampledFunction(self.grid, self.coeffs - other.coeffs, self.power)


def weighted_norm(y, window: HalfPlaneGrid, n_probe: int = 41) -> float:
    """sup |z^2 y(z)| over the probe set of the window."""
    z = window.probe(n_probe)
    return float(np.max(np.abs(z * z * y(z))))


# ---------------------------------------------------------------------------
# convolution with the mu-kernel along Re s = A


def _log_panels(n: int, span_lo: float, span_hi: float):
    x, w = leggauss(n)
    a, b = math.log(span_lo), math.log(span_hi)
    u = 0.5 * (b - a) * (x + 1) + a
    d = np.exp(u)
    return d, 0.5 * (b - a) * w * d


def conv_mu(y, z, b: float, A: float, n: int = 128, eta_max: float = 1e7, delta_min: float = 1e-9):
    """(1/2 pi i) int_{A - i inf}^{A + i inf} y(s) mu(z - s) ds.

    The line is cut at Im s = 0 (where y is concentrated) and at Im s = Im z
    (where mu(z - s) peaks); every piece uses Gauss-Legendre in log distance
    from its anchoring cut, which resolves features of any width.  The
    discarded tails are bounded through the |s|^-2 decay of y.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(z.real < A - 1e-12):
        raise OutsideSigma("convolution needs Re z >= A")
    out = np.empty(z.shape, dtype=complex)
    for k, zk in enumerate(z):
        cuts = sorted({0.0, float(zk.imag)})
        etas, wts = [], []
        lo, hi = cuts[0], cuts[-1]
        d, w = _log_panels(n, delta_min, eta_max)
        etas += [lo - d, hi + d]
        wts += [w, w]
        if hi - lo > 2 * delta_min:
            half = 0.5 * (hi - lo)
            d, w = _log_panels(n, delta_min, half)
            etas += [lo + d, hi - d]
            wts += [w, w]
        eta = np.concatenate(etas)
        wt = np.concatenate(wts)
        s = A + 1j * eta
        out[k] = np.sum(wt * y(s) * mu_kernel(zk - s, b)) / (2 * math.pi)
    # tail: |y| <= B/|s|^2 and |mu(w)| <= C/|w|^2 with both O(1) give ~ eta_max^-3
    tail = 1.0 / eta_max**3
    if tail > 1e-12:
        raise TailBoundExceeded(f"line tail bound {tail:.1e} too large")
    return out


def apply_W(y, z, b: float, lam: complex, A: float, r_values=None, n_conv: int = 128):
    """W[y](z) with the mu-kernel decomposition of the Xi convolution."""
    z = np.asarray(z, dtype=complex)
    if r_values is None:
        r_values = np.array([r_kernel(zz, b) for zz in z.ravel()]).reshape(z.shape)
    free = -lam / (2 * b * SQRT_PI) * r_values
    if isinstance(y, SampledFunction) and not np.any(y.coeffs):
        return free
    conv = conv_mu(y, z.ravel(), b, A, n=n_conv).reshape(z.shape)
    yz = y(z)
    return (conv + y(z + 2 * b) - yz) / b - yz * yz + free


# ---------------------------------------------------------------------------
# the integral operator I


@dataclass(frozen=True)
class RayRule:
    """Quadrature data for y(z) = -int_0^inf e^(-c s) w(t(s)) t'(s) ds."""

    t: np.ndarray  # (n_pts, n_lag) points on gamma(z)
    weight: np.ndarray  # matching weights, sign and kernel included


def ray_rule(z, lam: complex, n_lag: int = 48) -> RayRule:
    z = np.asarray(z, dtype=complex).ravel()
    beta0 = beta_n(arg_lambda(lam), 0)
    u, wl = laggauss(n_lag)
    ts = np.empty((z.size, n_lag), dtype=complex)
    ws = np.empty_like(ts)
    for k, zk in enumerate(z):
        zeta = zk**1.5
        ray = gamma_contour(zeta, beta0, arg_zeta=1.5 * math.atan2(zk.imag, zk.real))
        e = complex(math.cos(ray.ray_angle), math.sin(ray.ray_angle))
        c = -(4.0 / 3.0) * lam * e
        if c.real <= 0:
            raise KernelGrowth(f"kernel does not decay along the ray at z={zk}")
        s = u / c.real
        tau = zeta + s * e
        ts[k] = tau ** (2.0 / 3.0)
        dt = (2.0 / 3.0) * tau ** (-1.0 / 3.0) * e
        ws[k] = -wl * np.exp(-1j * c.imag * s) * dt / c.real
    return RayRule(ts, ws)


def apply_I(w, z, lam: complex, n_lag: int = 48, rule: RayRule | None = None):
    """y with y' + 2 lam sqrt(z) y = w and y -> 0 along gamma(z)."""
    z = np.asarray(z, dtype=complex)
    if rule is None:
        rule = ray_rule(z, lam, n_lag)
    vals = np.sum(rule.weight * w(rule.t), axis=1)
    return vals.reshape(z.shape)


def operator_norm_I(window: HalfPlaneGrid, lam: complex, n_lag: int = 48) -> float:
    """sup |z^2 I[z^-2]| on the probe set: the action on a unit-norm element."""
    z = window.probe()
    y = apply_I(lambda t: t**-2.0, z, lam, n_lag)
    return float(np.max(np.abs(z * z * y)))


# ---------------------------------------------------------------------------
# iteration


@dataclass
class IterationState:
    z0: float
    lam: complex
    grid: HalfPlaneGrid
    iterates: list = field(default_factory=list)
    delta_norms: list = field(default_factory=list)
    M_est: float = float("nan")
    I_norm_est: float = float("nan")

    @property
    def ratios(self) -> list[float]:
        d = self.delta_norms
        return [d[k] / d[k - 1] for k in range(1, len(d))]

    @property
    def contraction(self) -> bool:
        """Ratios after the first step stay below 1/2 (iterations 2 onward)."""
        r = self.ratios
        return bool(r) and all(q < 0.5 for q in r)

    def to_json(self) -> dict:
        return {
            "z0": [float(self.z0), 0.0],
            "delta_norms": [float(d) for d in self.delta_norms],
            "ratios": [float(q) for q in self.ratios],
            "M_est": float(self.M_est),
            "I_norm_est": float(self.I_norm_est),
            "contraction": self.contraction,
        }


def check_window(lam: complex) -> None:
    """The half-plane window needs the right half-plane inside S+_0."""
    al = arg_lambda(lam)
    if not (math.pi / 4 < al < 7 * math.pi / 4):
        raise OutsideSigma(
            f"arg lambda = {al:.4f}: the right half-plane is not inside S+_0; use the other branch")


def iterate(params: DDEParameters, branch: str, z0: float, n_iters: int = 5, n_rho: int = 24,
            n_t: int = 24, n_lag: int = 48, n_conv: int = 128, strict: bool = False) -> IterationState:
    """y_0 = 0, y_k = I W[y_{k-1}] on the window Re z >= z0."""
    lam = complex(lambda_from_mu(params, branch))
    check_window(lam)
    b = float(params.a) / 2
    grid = HalfPlaneGrid(float(z0), n_rho, n_t)
    nodes = grid.nodes
    r_nodes = np.array([r_kernel(z, b) for z in nodes.ravel()]).reshape(nodes.shape)
    rule = ray_rule(nodes, lam, n_lag)
    state = IterationState(float(z0), lam, grid)
    y = SampledFunction.zero(grid)
    for _ in range(n_iters):
        w_nodes = apply_W(y, nodes, b, lam, grid.z0, r_values=r_nodes, n_conv=n_conv)
        w = SampledFunction.from_nodes(grid, w_nodes, 1.5)
        y_new = SampledFunction.from_nodes(grid, apply_I(w, nodes, lam, rule=rule), 2.0)
        state.delta_norms.append(weighted_norm(y_new - y, grid))
        state.iterates.append(y_new)
        y = y_new
    y1 = state.iterates[0]
    conv = conv_mu(y1, grid.probe(21), b, grid.z0, n=n_conv)
    z = grid.probe(21)
    state.M_est = float(np.max(np.abs(z * z * conv)) / b / weighted_norm(y1, grid, 21))
    state.I_norm_est = operator_norm_I(grid, lam, n_lag)
    if strict and not state.contraction:
        raise NoContraction(f"no contraction at z0={z0}; increase z0")
    return state


def large_z_coefficient(y: SampledFunction, z: float = 1e4) -> complex:
    """z^2 y(z) far out on the real axis, to compare with the z^-2 formal term."""
    return complex(y.weighted(np.array([complex(z)]))[0])
