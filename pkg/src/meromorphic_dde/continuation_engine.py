"""Slab-by-slab meromorphic continuation of solutions of the shift equation.

Given f on a rectangle wider than ``a`` in the real direction, f on the next
slab ``[xi+, xi+ + a]`` solves the Riccati equation ``f' = f**2 + h`` with
``h(x) = mu - f'(x-a) - f(x-a)**2`` known from the previous slab.  Writing
``f = -u'/u`` turns this into ``u'' + h u = 0``, which is integrated along
horizontal lines.  Zeros of ``u`` become poles of f with residue -1; double
poles of h (images of earlier poles) are classified with Frobenius data.

Each continued slab stores ``q = f * prod((x - p_j)/L)`` as a 2D Chebyshev
interpolant, so f and its exact derivative are cheap to evaluate anywhere in
the slab.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import solve_ivp

from .errors import (
    ContourCrossesPole,
    NearPole,
    NewtonStall,
    NonIntegerN,
    OutOfRegion,
    StepFailure,
)
from .patch import PoleRecord, SolutionPatch, StripRegion, type_from_residue
from .series_core import DDEParameters

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContinuationConfig:
    rk_tol: float = 1e-12
    n_xi: int = 40
    eta_density: float = 28.0
    min_nodes: int = 24
    contour_nodes: int = 64
    pole_exclusion_radius: float = 0.1
    chain_tol: float = 1e-3
    residue_radius: float = 0.25
    samples_per_segment: int = 8
    newton_maxiter: int = 40
    chain_clearance: float = 0.15
    exterior_margin: float = 0.5
    lookahead: float = 0.4


# --------------------------------------------------------------------------
# elementary pieces


def h_from_f(patch: SolutionPatch, params: DDEParameters, check: bool = True):
    """h(x) = mu - f'(x-a) - f(x-a)^2 as a vectorized callable."""
    a = float(params.a)
    mu = complex(params.mu)

    def h(x):
        xa = np.asarray(x, dtype=complex) - a
        if check and not np.all(patch.region.contains(xa, pad=1e-6)):
            raise OutOfRegion("x - a lies outside the known patch")
        f = patch.value(xa)
        return mu - patch.derivative(xa) - f * f

    return h


def seed_u(patch: SolutionPatch, x_tilde: complex, a: float | None = None):
    """Initial data u = 1, u' = -f at x_tilde, so that f = -u'/u."""
    pts = [x_tilde] if a is None else [x_tilde, x_tilde - a]
    if not np.all(patch.region.contains(np.array(pts))):
        raise OutOfRegion("seed point (and its shift) must lie in the patch")
    return 1.0 + 0j, -complex(np.asarray(patch.value(np.array([x_tilde])))[0])


@dataclass
class Trajectory:
    """(u, u') along a polyline, possibly for a batch of parallel paths."""

    x: np.ndarray  # (n_vertices, batch)
    u: np.ndarray
    up: np.ndarray
    segments: list

    def sample(self, per_segment: int):
        """Dense samples (x, u, u') with ``per_segment`` points per segment."""
        xs, us, ups = [], [], []
        s = np.linspace(0.0, 1.0, per_segment, endpoint=False)
        nb = self.x.shape[1]
        for k, sol in enumerate(self.segments):
            xa, xb = self.x[k], self.x[k + 1]
            y = sol(s)  # (2 nb, len(s))
            xs.append(xa[None, :] + s[:, None] * (xb - xa)[None, :])
            us.append(y[:nb].T)
            ups.append(y[nb:].T)
        xs.append(self.x[-1:])
        us.append(self.u[-1:])
        ups.append(self.up[-1:])
        return np.concatenate(xs), np.concatenate(us), np.concatenate(ups)

    def f(self):
        return -self.up / self.u


def integrate_u(h, path, u0, up0, tol: float = 1e-12) -> Trajectory:
    """Integrate u'' + h u = 0 along a polyline (or a batch of them).

    ``path`` has shape (n_vertices,) or (n_vertices, batch); each segment is
    parametrized by s in [0, 1] and solved with an embedded 8th-order
    Runge-Kutta pair with dense output.
    """
    path = np.asarray(path, dtype=complex)
    if path.ndim == 1:
        path = path[:, None]
    nb = path.shape[1]
    u = np.empty(path.shape, dtype=complex)
    up = np.empty(path.shape, dtype=complex)
    u[0] = np.broadcast_to(np.asarray(u0, dtype=complex), (nb,))
    up[0] = np.broadcast_to(np.asarray(up0, dtype=complex), (nb,))
    segs = []
    for k in range(len(path) - 1):
        xa, dx = path[k], path[k + 1] - path[k]

        def rhs(s, y, xa=xa, dx=dx):
            uu, vv = y[:nb], y[nb:]
            hh = h(xa + s * dx)
            return np.concatenate([vv * dx, -hh * uu * dx])

        y0 = np.concatenate([u[k], up[k]])
        scale = np.max(np.abs(y0)) or 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=tol,
                            atol=tol * 1e-6 * scale, dense_output=True)
        if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
            raise StepFailure(f"integration failed on segment {k}: {sol.message}")
        u[k + 1] = sol.y[:nb, -1]
        up[k + 1] = sol.y[nb:, -1]
        segs.append(sol.sol)
    return Trajectory(path, u, up, segs)


def _ode_point(h, x_start, u0, up0, x_end, tol):
    tr = integrate_u(h, np.array([x_start, x_end]), u0, up0, tol)
    return complex(tr.u[-1, 0]), complex(tr.up[-1, 0])


def newton_zero(h, x, u, up, tol=1e-12, maxiter=40, guess=None):
    """Refine a zero of u by Newton steps, each realized by a short ODE solve."""
    if guess is not None:
        u, up = _ode_point(h, x, u, up, guess, tol)
        x = guess
    for _ in range(maxiter):
        step = -u / up
        if not np.isfinite(step):
            raise NewtonStall("derivative vanished")
        x_new = x + step
        u, up = _ode_point(h, x, u, up, x_new, tol)
        x = x_new
        if abs(step) < 1e-13 * (1 + abs(x)):
            return x, u, up
    if abs(u / up) < 1e-9:
        return x, u, up
    raise NewtonStall(f"Newton did not converge near {x}")


def find_poles(trajectory, slab: StripRegion, h=None, *, threshold: float,
               exclude: Sequence[complex] = (), exclude_radius: float = 0.0,
               per_segment: int = 8, tol: float = 1e-12, merge_radius: float | None = None):
    """Zeros of u near the sampled paths, as (location, u'(location)) pairs.

    A sample qualifies when |u/u'| (the Newton distance to the nearest zero,
    independent of how u was normalized) has a local minimum below
    ``threshold``.  Candidates from all trajectories are refined by Newton
    (when ``h`` is given) closest first; later candidates that land within
    ``merge_radius`` of an accepted zero are the same zero seen from another
    path and are skipped.
    """
    trajs = trajectory if isinstance(trajectory, (list, tuple)) else [trajectory]
    if merge_radius is None:
        merge_radius = min(0.05, threshold)
    cands = []
    for tr in trajs:
        xs, us, ups = tr.sample(per_segment)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.abs(us / ups)
        n = g.shape[0]
        for j in range(g.shape[1]):
            col = g[:, j]
            for i in range(n):
                left = col[i - 1] if i > 0 else np.inf
                right = col[i + 1] if i < n - 1 else np.inf
                if col[i] <= left and col[i] <= right and col[i] < threshold:
                    # Newton starts from the nearest path vertex: vertex values are
                    # step end points, more accurate than dense-output samples
                    k = min(int(round(i / per_segment)), tr.x.shape[0] - 1)
                    guess = complex(xs[i, j] - us[i, j] / ups[i, j])
                    cands.append((float(col[i]), guess, complex(tr.x[k, j]), complex(tr.u[k, j]),
                                  complex(tr.up[k, j])))
    cands.sort(key=lambda c: (c[0], c[1].real, c[1].imag))
    found: list[tuple[complex, complex]] = []
    for _, guess, x0, u0, up0 in cands:
        if any(abs(guess - e) < exclude_radius or abs(x0 - e) < exclude_radius for e in exclude):
            continue
        if any(abs(guess - p) < merge_radius for p, _ in found):
            continue
        if h is not None:
            try:
                x, _, upz = newton_zero(h, x0, u0, up0, tol, guess=guess)
            except (NewtonStall, StepFailure) as exc:
                log.warning("zero refinement failed: %s", exc)
                continue
        else:
            x, upz = guess, up0
        if not bool(slab.contains(x, pad=1e-9)):
            continue
        if any(abs(x - e) < exclude_radius for e in exclude):
            continue
        if any(abs(x - p) < merge_radius for p, _ in found):
            continue
        found.append((x, upz))
    found.sort(key=lambda t: (round(t[0].real, 8), round(t[0].imag, 8)))
    return found


# --------------------------------------------------------------------------
# local (Frobenius) analysis


@dataclass(frozen=True)
class LocalODEData:
    center: complex
    N: int
    laurent: dict  # k -> A_k for h = sum A_k (x-c)^k, k >= -2
    N_raw: complex = 0j
    odd_max: float = 0.0
    scale: float = 1.0


def laurent_coefficients(fn, center: complex, radius: float, kmin: int, kmax: int, n_nodes: int = 64):
    """A_k = (1/2 pi i) \\oint fn(x) (x-c)^(-k-1) dx by the trapezoid rule."""
    th = 2 * np.pi * np.arange(n_nodes) / n_nodes
    e = np.exp(1j * th)
    vals = np.asarray(fn(center + radius * e), dtype=complex)
    out = {}
    for k in range(kmin, kmax + 1):
        out[k] = complex(np.mean(vals * e ** (-k)) / radius**k)
    return out


def frobenius_classify(h, center: complex, radius: float = 0.05, n_nodes: int = 64,
                       tol: float = 1e-6, extra: int = 4) -> LocalODEData:
    """Leading Laurent data of h at ``center`` and the integer N it implies.

    N is recovered from A_{-2} = -N(N-1).  Coefficients are extracted at two
    radii; disagreement flags contamination by another singularity.
    """
    lo = laurent_coefficients(h, center, radius, -4, 2 * 8 + extra, n_nodes)
    hi = laurent_coefficients(h, center, radius / 2, -4, 2 * 8 + extra, n_nodes)
    scale = max(1.0, abs(lo[-2]), abs(lo[0]))
    if abs(lo[-2] - hi[-2]) > 1e-3 * scale:
        raise ContourCrossesPole(f"Laurent data at {center} depend on the contour radius "
                                 f"({lo[-2]:.6g} vs {hi[-2]:.6g} at r={radius:.3g})")
    for k in (-4, -3):
        if abs(lo[k]) > 1e-3 * scale:
            raise NonIntegerN(f"h has a pole of order > 2 at {center}")
    A2 = lo[-2]
    N_raw = (1 + np.sqrt(complex(1 - 4 * A2))) / 2
    N = int(round(N_raw.real))
    if abs(N_raw - N) > tol:
        warnings.warn(f"non-integer Frobenius exponent {N_raw} at {center}", RuntimeWarning)
    N = max(N, 1)
    odd = [abs(lo[k]) for k in range(-1, 2 * N - 2, 2)]
    laurent = {k: v for k, v in lo.items() if k >= -2}
    laurent[-2] = complex(-N * (N - 1))
    return LocalODEData(center, N, laurent, N_raw, max(odd) if odd else 0.0, scale)


def local_expansion_u(data: LocalODEData, kind: str, order: int) -> list:
    """Coefficients u_k of u = (x-c)^sigma (1 + sum u_k (x-c)^k).

    sigma = N for the special ("m8") solution, 1-N for the generic ("m9")
    one.  For "m9" the resonant coefficient u_{2N-1} is set to zero; the
    no-logarithm condition there is checked by the caller through
    :func:`resonance_defect`.
    """
    N = data.N
    sigma = N if kind == "m8" else 1 - N
    A = data.laurent
    Am2 = A.get(-2, 0)
    u = [1.0 + 0j]
    for k in range(1, order + 1):
        rhs = -sum(A.get(m, 0) * u[k - 2 - m] for m in range(-1, k - 1))
        P = (sigma + k) * (sigma + k - 1) + Am2
        if abs(P) < 1e-12:
            u.append(0j)
        else:
            u.append(rhs / P)
    return u


def resonance_defect(data: LocalODEData) -> complex:
    """Right side of the m9 recursion at the resonant index (zero = no logs)."""
    N = data.N
    if N < 2:
        return 0j
    k = 2 * N - 1
    u = local_expansion_u(data, "m9", k - 1)
    A = data.laurent
    return -sum(A.get(m, 0) * u[k - 2 - m] for m in range(-1, k - 1))


def predict_next_N(N: int, kind: str) -> int:
    """N+1 after a special (m8) solution, N-1 after a generic (m9) one."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return N + 1 if kind == "m8" else N - 1


def residue_at(f, pole: complex, radius: float, n_nodes: int = 64) -> complex:
    """(1/2 pi i) \\oint f dx over |x - pole| = radius (trapezoid rule)."""
    th = 2 * np.pi * np.arange(n_nodes) / n_nodes
    d = radius * np.exp(1j * th)
    vals = np.asarray(f(pole + d), dtype=complex)
    if not np.all(np.isfinite(vals)):
        raise ContourCrossesPole("f is singular on the contour")
    return complex(np.mean(vals * d))


def integrate_u_circle(h, center, radius, theta0, u0, up0, n_nodes, tol=1e-12):
    """(x, u, u') at ``n_nodes + 1`` equispaced points of one full turn around ``center``."""
    def rhs(t, y):
        e = radius * np.exp(1j * t)
        dx = 1j * e
        return np.array([y[1] * dx, -h(np.array([center + e]))[0] * y[0] * dx])

    th = theta0 + 2 * np.pi * np.arange(n_nodes + 1) / n_nodes
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = solve_ivp(rhs, (th[0], th[-1]), np.array([u0, up0], dtype=complex), method="DOP853",
                        rtol=tol, atol=tol * 1e-6 * max(abs(u0), abs(up0)), t_eval=th)
    if not sol.success:
        raise StepFailure(f"contour integration failed: {sol.message}")
    return center + radius * np.exp(1j * th), sol.y[0], sol.y[1]


def _residue_by_ode(h, x_start, u0, up0, center, radius, n_nodes, tol):
    """Residue of -u'/u around ``center`` with u continued along the circle.

    Also returns the change of u'/u after one turn, which vanishes when u is
    single valued (no logarithmic terms).
    """
    x_circ = center - radius
    if abs(x_start - x_circ) > 0:
        u0, up0 = _ode_point(h, x_start, u0, up0, x_circ, tol)
    x, u, up = integrate_u_circle(h, center, radius, np.pi, u0, up0, n_nodes, tol)
    f = -up[:-1] / u[:-1]
    mono = abs(up[-1] / u[-1] - up[0] / u[0])
    return complex(np.mean(f * (x[:-1] - center))), mono


# --------------------------------------------------------------------------
# slab representation


def _cheb_T(t, n: int) -> np.ndarray:
    """T_0..T_{n-1} at real points t, shape (len(t), n); valid slightly outside [-1, 1]."""
    th = np.arccos(np.asarray(t, dtype=complex))
    return np.cos(th[:, None] * np.arange(n)[None, :]).real


def _lobatto(n: int) -> np.ndarray:
    return np.cos(np.pi * np.arange(n) / (n - 1))[::-1]


class ChebSlab:
    """f on a rectangle as q / prod((x - p_j)/L) with q a 2D Chebyshev interpolant."""

    def __init__(self, region: StripRegion, coeffs: np.ndarray, poles: Sequence[complex]):
        self.region = region
        self.coeffs = coeffs
        self.dcoeffs = C.chebder(coeffs, axis=0) * (2.0 / region.width)
        self.pole_x = np.asarray(poles, dtype=complex)
        self.L = math.hypot(region.width, region.height)
        tail_x = np.max(np.abs(coeffs[-3:, :]))
        tail_y = np.max(np.abs(coeffs[:, -3:]))
        self.tail = float(max(tail_x, tail_y) / np.max(np.abs(coeffs)))

    @classmethod
    def fit(cls, region, f_nodes, x_nodes, poles):
        L = math.hypot(region.width, region.height)
        q = f_nodes.copy()
        for p in poles:
            q = q * (x_nodes - p) / L
        nx, ny = q.shape
        tx, ty = _lobatto(nx), _lobatto(ny)
        Vx = C.chebvander(tx, nx - 1)
        Vy = C.chebvander(ty, ny - 1)
        coef = np.linalg.solve(Vx, q)
        coef = np.linalg.solve(Vy, coef.T).T
        return cls(region, coef, poles)

    def _t(self, x):
        r = self.region
        tx = (2 * x.real - (r.xi_range[0] + r.xi_range[1])) / r.width
        ty = (2 * x.imag - (r.eta_lo + r.eta_hi)) / r.height
        return tx, ty

    def _pi(self, x):
        pr = np.ones_like(x)
        s = np.zeros_like(x)
        for p in self.pole_x:
            pr = pr * (x - p) / self.L
            s = s + 1 / (x - p)
        return pr, s

    def _q(self, x, deriv: bool):
        tx, ty = self._t(x.ravel())
        Tx = _cheb_T(tx, self.coeffs.shape[0])
        Ty = _cheb_T(ty, self.coeffs.shape[1])
        q = np.einsum("pi,ij,pj->p", Tx, self.coeffs, Ty).reshape(x.shape)
        if not deriv:
            return q, None
        qd = np.einsum("pi,ij,pj->p", Tx[:, :-1], self.dcoeffs, Ty).reshape(x.shape)
        return q, qd

    def value(self, x):
        x = np.asarray(x, dtype=complex)
        q, _ = self._q(x, False)
        pr, _ = self._pi(x)
        return q / pr

    def derivative(self, x):
        x = np.asarray(x, dtype=complex)
        q, qd = self._q(x, True)
        pr, s = self._pi(x)
        return qd / pr - q / pr * s

    def value_and_derivative(self, x):
        x = np.asarray(x, dtype=complex)
        q, qd = self._q(x, True)
        pr, s = self._pi(x)
        f = q / pr
        return f, qd / pr - f * s

    def line_evaluator(self, etas):
        """(f, f') on the horizontal lines Im x = etas, as a function of Re x.

        Collapsing the eta direction once makes each evaluation a single
        small matrix-vector product.
        """
        etas = np.asarray(etas, dtype=float)
        r = self.region
        ty = (2 * etas - (r.eta_lo + r.eta_hi)) / r.height
        Ty = C.chebvander(ty, self.coeffs.shape[1] - 1).T
        cq = self.coeffs @ Ty
        cd = self.dcoeffs @ Ty
        cd = np.vstack([cd, np.zeros((1, cd.shape[1]))])
        mid, half = 0.5 * (r.xi_range[0] + r.xi_range[1]), 0.5 * r.width

        def ev(xi: float):
            T = _cheb_T(np.array([(xi - mid) / half]), cq.shape[0])[0]
            q, qd = T @ cq, T @ cd
            x = xi + 1j * etas
            pr, s = self._pi(x)
            f = q / pr
            return f, qd / pr - f * s

        return ev


@dataclass
class Slab:
    region: StripRegion
    value: Callable
    derivative: Callable
    poles: list
    index: int
    rep: ChebSlab | None = None
    diagnostics: dict = field(default_factory=dict)


class PiecewisePatch:
    """Slabs ordered left to right, each owning ``xi_range[0] <= Re x < xi_range[1]``."""

    def __init__(self, slabs: list[Slab]):
        self.slabs = slabs

    @property
    def region(self) -> StripRegion:
        r0, r1 = self.slabs[0].region, self.slabs[-1].region
        return StripRegion((r0.xi_range[0], r1.xi_range[1]),
                           max(s.region.eta_lo for s in self.slabs),
                           min(s.region.eta_hi for s in self.slabs))

    def _dispatch(self, x, attr):
        x = np.asarray(x, dtype=complex)
        out = np.empty_like(x)
        done = np.zeros(x.shape, dtype=bool)
        for s in reversed(self.slabs):
            m = (~done) & (x.real >= s.region.xi_range[0] - 1e-12)
            if np.any(m):
                out[m] = getattr(s, attr)(x[m])
                done |= m
        if not np.all(done):
            s = self.slabs[0]
            out[~done] = getattr(s, attr)(x[~done])
        return out

    def value(self, x):
        return self._dispatch(x, "value")

    def derivative(self, x):
        return self._dispatch(x, "derivative")

    @property
    def poles(self):
        return [p for s in self.slabs for p in s.poles]

    def as_patch(self) -> SolutionPatch:
        return SolutionPatch(self.region, self.value, self.derivative, tuple(self.poles))


# --------------------------------------------------------------------------
# reflection


def reflect_left(params: DDEParameters) -> DDEParameters:
    """Parameters of g(t) = f(-t), which solves the same equation with -mu."""
    return DDEParameters(params.a, -params.mu)


def reflect_patch(patch: SolutionPatch) -> SolutionPatch:
    """g(t) = f(-t), g'(t) = -f'(-t); residues change sign."""
    value, deriv = patch.value, patch.derivative
    return SolutionPatch(
        patch.region.reflected(),
        lambda t: value(-np.asarray(t, dtype=complex)),
        lambda t: -deriv(-np.asarray(t, dtype=complex)),
        tuple(p.reflected() for p in patch.poles),
    )


# --------------------------------------------------------------------------
# one continuation step


def continue_right(pw: PiecewisePatch, params: DDEParameters, config: ContinuationConfig = ContinuationConfig()):
    """Continue f over the next slab of width a; returns the new :class:`Slab`."""
    a = float(params.a)
    last = pw.slabs[-1]
    reg = last.region
    xi0 = reg.xi_range[1]
    new_reg = StripRegion((xi0, xi0 + a), reg.eta_lo, reg.eta_hi)
    if not pw.region.is_a_wide(a) and pw.region.width < a - 1e-12:
        raise OutOfRegion("continuation needs data on a region at least a wide")
    h = h_from_f(SolutionPatch(StripRegion((xi0 - a - 1.0, xi0 + 1e-9), reg.eta_lo - 1.0, reg.eta_hi + 1.0),
                               pw.value, pw.derivative), params, check=False)

    # double poles of h: images of poles of f one step to the left
    chain_src = [p for p in pw.poles if xi0 - a - 1e-12 <= p.x.real < xi0 - 1e-12 and
                 reg.eta_lo <= p.x.imag <= reg.eta_hi and p.local_type != "regular"]
    chain_pts = [p.x + a for p in chain_src]

    nx = max(config.min_nodes, int(math.ceil(config.n_xi * a)))
    ny0 = max(config.min_nodes, int(math.ceil(config.eta_density * new_reg.height)))
    etas = _eta_grid(new_reg, ny0, [c.imag for c in chain_pts])
    ny = len(etas)
    xs = xi0 + a * (_lobatto(nx) + 1) / 2
    X = xs[:, None] + 1j * etas[None, :]
    f_left = pw.value(X[0])
    prev_rep = last.rep if last.rep is not None else _seed_rep(last, a, nx, ny)
    rho0 = config.chain_clearance
    dirty = np.array([any(abs(e - c.imag) < rho0 and xi0 - rho0 < c.real < xi0 + a + rho0
                          for c in chain_pts) for e in etas], dtype=bool)
    clean = ~dirty
    F = np.empty(X.shape, dtype=complex)
    trajs = []
    if np.any(clean):
        tr = integrate_u(_line_h(prev_rep, etas[clean], a, complex(params.mu), h), X[:, clean],
                         np.ones(int(clean.sum()), dtype=complex), -f_left[clean], config.rk_tol)
        F[:, clean] = -tr.up / tr.u
        trajs.append(tr)
    for j in np.flatnonzero(dirty):
        heights = [etas[j]] + [c.imag + sg * rho0 for c in chain_pts for sg in (1, -1)]
        hj = _point_h(prev_rep, a, complex(params.mu), h, heights)
        col, tr = _detour_line(hj, pw, xs, etas[j], chain_pts, rho0, new_reg, config.rk_tol)
        F[:, j] = col
        trajs.append(tr)

    gap = float(np.max(np.diff(etas)))
    excl = 2.5 * gap
    zeros = find_poles(trajs, new_reg, h, threshold=1.5 * gap, exclude=chain_pts,
                       exclude_radius=excl, per_segment=config.samples_per_segment, tol=config.rk_tol)

    records: list[PoleRecord] = []
    singular = [z for z, _ in zeros] + chain_pts
    diag = {"chain_checks": [], "zero_residues": []}

    singular += [p.x + a for p in pw.poles if p.local_type != "regular"]

    def radius_for(c):
        others = [abs(c - s) for s in singular if abs(c - s) > 1e-9]
        r = config.residue_radius
        if others:
            r = min(r, 0.4 * min(others))
        # contours may leave the slab only slightly (h is extrapolated there)
        edge = min(new_reg.xi_range[1] - c.real, new_reg.eta_hi - c.imag, c.imag - new_reg.eta_lo)
        return max(min(r, edge + 0.1), min(r, 0.05))

    for x, upz in zeros:
        rho = radius_for(x)
        res, _ = _residue_by_ode(h, x, 0j, upz, x, rho, config.contour_nodes, config.rk_tol)
        diag["zero_residues"].append(res)
        N, kind = type_from_residue(res.real)
        records.append(PoleRecord(complex(x), 0, N, res, kind, slab=last.index + 1))

    for src_rec, c in zip(chain_src, chain_pts):
        rho = radius_for(c)
        while True:
            try:
                data = frobenius_classify(h, c, radius=rho, n_nodes=config.contour_nodes)
                break
            except ContourCrossesPole:
                if rho < 0.02:
                    raise
                rho /= 2
        start = xi0 + 1j * c.imag
        if abs(start - c) < rho * 1.01:
            start = c - rho
            u0, up0 = _ode_from_left(h, pw, xi0, c.imag, start, config.rk_tol)
        else:
            u0, up0 = 1.0 + 0j, -complex(pw.value(np.array([start]))[0])
        res, mono = _residue_by_ode(h, start, u0, up0, c, rho, config.contour_nodes, config.rk_tol)
        N_res, kind = type_from_residue(res.real)
        if kind == "regular" and data.N > 1:
            warnings.warn(f"regular point with N={data.N} at {c}", RuntimeWarning)
        if kind != "regular" and N_res != data.N:
            warnings.warn(f"residue {res} inconsistent with N={data.N} at {c}", RuntimeWarning)
        predicted = predict_next_N(src_rec.frobenius_N, src_rec.local_type) if src_rec.local_type != "regular" else 0
        diag["chain_checks"].append({"x": c, "N": data.N, "predicted": predicted, "residue": res,
                                     "type": kind, "odd_max": data.odd_max, "monodromy": mono})
        if kind != "regular":
            records.append(PoleRecord(complex(c), src_rec.chain + 1, data.N, res, kind, slab=last.index + 1))

    # Known singularities just outside the slab (earlier poles to the left,
    # chain candidates to the right) slow Chebyshev convergence; dividing
    # them out as well keeps q analytic on a larger neighbourhood.
    near = config.exterior_margin
    exterior = [p.x for p in pw.poles if xi0 - near < p.x.real < xi0
                and reg.eta_lo - near < p.x.imag < reg.eta_hi + near and p.local_type != "regular"]
    exterior += [r.x + a for r in records if r.x.real + a < xi0 + a + near]
    poles = [r.x for r in records] + exterior
    rep = ChebSlab.fit(new_reg, F, X, poles)
    if config.lookahead > 0:
        ahead = _lookahead_zeros(rep, new_reg, etas, a, complex(params.mu), config, exterior)
        if ahead:
            diag["lookahead"] = ahead
            poles = poles + ahead
            rep = ChebSlab.fit(new_reg, F, X, poles)
    diag["cheb_tail"] = rep.tail
    if rep.tail > 1e-8:
        log.warning("slab %d: Chebyshev tail %.2e; consider more nodes", last.index + 1, rep.tail)
    return Slab(new_reg, rep.value, rep.derivative, records, last.index + 1, rep, diag)


def _eta_grid(region: StripRegion, ny0: int, avoid: Sequence[float], clearance: float = 0.3):
    """Lobatto nodes in eta whose lines keep clear of the given heights.

    Near a pole of f the potential h is a difference of two 1/d^2 terms, so
    a line passing at distance d from a singular point of h loses accuracy
    like 1/d^2.  The node count is bumped until every avoided height sits at
    least ``clearance`` local node gaps away from the nearest line.
    """
    best, best_score = None, -1.0
    for ny in range(ny0, ny0 + 16):
        etas = region.eta_lo + region.height * (_lobatto(ny) + 1) / 2
        if not avoid:
            return etas
        score = min(_clearance(etas, e) for e in avoid)
        if score >= clearance:
            return etas
        if score > best_score:
            best, best_score = etas, score
    log.warning("eta grid clearance only %.2f node gaps", best_score)
    return best


def _clearance(etas, e):
    if e <= etas[0] or e >= etas[-1]:
        return np.inf
    k = int(np.searchsorted(etas, e))
    gap = etas[k] - etas[k - 1]
    return min(e - etas[k - 1], etas[k] - e) / gap


def _detour_line(h, pw, xs, eta, chain_pts, rho0, region, tol):
    """f at the nodes xs + i*eta, keeping the path at least rho0 from chain points.

    Where the line enters the box |Re(x - c)| < rho0 around a chain point c
    the path moves to Im x = Im c +/- rho0, runs past the box and returns.
    Nodes inside the box are reached by short vertical spurs from the detour.
    """
    boxes = []
    for c in sorted(chain_pts, key=lambda c: c.real):
        if abs(eta - c.imag) >= rho0 or not (xs[0] - rho0 < c.real < xs[-1] + rho0):
            continue
        side = 1.0 if eta >= c.imag else -1.0
        eta_d = c.imag + side * rho0
        if not region.eta_lo <= eta_d <= region.eta_hi:
            eta_d = c.imag - side * rho0
        lo, hi = c.real - rho0, c.real + rho0
        if boxes and lo < boxes[-1][1]:
            boxes[-1] = (boxes[-1][0], hi, boxes[-1][2])
        else:
            boxes.append((lo, hi, eta_d))

    def box_of(xi):
        for b in boxes:
            if b[0] < xi < b[1]:
                return b
        return None

    verts, src = [], []
    cur = box_of(xs[0])
    verts.append(xs[0] + 1j * (cur[2] if cur else eta))
    for k, xi in enumerate(xs):
        b = box_of(xi)
        if b is not cur:
            if cur is not None:
                verts += [cur[1] + 1j * cur[2], cur[1] + 1j * eta]
            if b is not None:
                verts += [b[0] + 1j * eta, b[0] + 1j * b[2]]
            cur = b
        v = xi + 1j * (b[2] if b else eta)
        if abs(v - verts[-1]) > 0:
            verts.append(v)
        src.append((len(verts) - 1, b is not None))
    start = verts[0]
    f0 = complex(pw.value(np.array([start]))[0])
    tr = integrate_u(h, np.array(verts), 1.0 + 0j, -f0, tol)
    col = np.empty(len(xs), dtype=complex)
    spurs = [k for k, (_, sp) in enumerate(src) if sp]
    for k, (vi, sp) in enumerate(src):
        if not sp:
            col[k] = -tr.up[vi, 0] / tr.u[vi, 0]
    if spurs:
        vis = [src[k][0] for k in spurs]
        starts = np.array([verts[v] for v in vis])
        ends = xs[spurs] + 1j * eta
        # spurs of one box share length and direction, so they run as one batch
        for d in np.unique(np.round((ends - starts).imag, 12)):
            sel = np.isclose((ends - starts).imag, d)
            st = integrate_u(h, np.array([starts[sel], ends[sel]]), tr.u[np.array(vis)[sel], 0],
                             tr.up[np.array(vis)[sel], 0], tol)
            col[np.array(spurs)[sel]] = -st.up[-1] / st.u[-1]
    return col, tr


def _lookahead_zeros(rep: ChebSlab, region: StripRegion, etas, a, mu, config, known):
    """Zero-born poles of the next slab lying within ``config.lookahead`` of the right edge.

    The new slab already determines h a little beyond its right edge, so the
    lines can be pushed past it.  The zeros found there are only used to
    divide out nearby singularities, so modest accuracy suffices.
    """
    xi1 = region.xi_range[1]
    m = config.lookahead
    n = max(8, int(math.ceil(config.n_xi * m)))
    xs = xi1 + m * (_lobatto(n) + 1) / 2
    X = xs[:, None] + 1j * etas[None, :]

    def h_gen(x):
        x = np.asarray(x, dtype=complex)
        f = rep.value(x - a)
        return mu - rep.derivative(x - a) - f * f

    clear = np.array([all(abs(e - k.imag) >= config.chain_clearance for k in known
                          if xi1 - config.chain_clearance < k.real < xi1 + m + config.chain_clearance)
                      for e in etas], dtype=bool)
    if not np.any(clear):
        return []
    f0 = rep.value(X[0, clear])
    ahead_reg = StripRegion((xi1, xi1 + m), region.eta_lo, region.eta_hi)
    try:
        tr = integrate_u(_line_h(rep, etas[clear], a, mu, h_gen), X[:, clear],
                         np.ones(int(clear.sum()), dtype=complex), -f0, config.rk_tol * 100)
        gap = float(np.max(np.diff(etas)))
        found = find_poles(tr, ahead_reg, h_gen, threshold=1.5 * gap, exclude=list(known),
                           exclude_radius=2.5 * gap, per_segment=config.samples_per_segment,
                           tol=config.rk_tol * 100)
    except (StepFailure, NewtonStall) as exc:
        log.debug("look-ahead skipped: %s", exc)
        return []
    return [z for z, _ in found if z.real > xi1 + 1e-6]


def _seed_rep(slab: Slab, a: float, nx: int, ny: int) -> ChebSlab:
    """Chebyshev representation of the last a-wide part of a seed slab."""
    r = slab.region
    sub = StripRegion((r.xi_range[1] - a, r.xi_range[1]), r.eta_lo, r.eta_hi)
    xs = sub.xi_range[0] + a * (_lobatto(nx) + 1) / 2
    etas = sub.eta_lo + sub.height * (_lobatto(ny) + 1) / 2
    X = xs[:, None] + 1j * etas[None, :]
    poles = [p.x for p in slab.poles if sub.contains(p.x, pad=0.0) and p.local_type != "regular"]
    rep = ChebSlab.fit(sub, slab.value(X), X, poles)
    slab.rep = rep
    return rep


def _line_h(rep: ChebSlab, etas, a: float, mu: complex, fallback):
    """h on the batch of horizontal lines; other point sets use ``fallback``."""
    ev = rep.line_evaluator(etas)
    n = len(etas)

    def h(x):
        x = np.asarray(x)
        if x.shape == (n,) and np.ptp(x.real) == 0.0 and np.array_equal(x.imag, etas):
            f, fp = ev(float(x.real[0]) - a)
            return mu - fp - f * f
        return fallback(x)

    return h


def _point_h(rep: ChebSlab, a: float, mu: complex, fallback, heights):
    """Scalar-path h: cached line evaluators on ``heights``, ``rep`` elsewhere.

    Points whose shift leaves the slab of ``rep`` go to ``fallback``.
    """
    evs = {float(e): rep.line_evaluator([e]) for e in heights}
    r = rep.region

    def h(x):
        x = np.asarray(x, dtype=complex)
        xm = x - a
        if not np.all(r.contains(xm, pad=0.0)):
            return fallback(x)
        if x.shape == (1,) and float(xm[0].imag) in evs:
            f, fp = evs[float(xm[0].imag)](float(xm[0].real))
        else:
            f, fp = rep.value_and_derivative(xm)
        return mu - fp - f * f

    return h


def _ode_from_left(h, pw, xi0, eta, target, tol):
    start = xi0 + 1j * eta
    u0, up0 = 1.0 + 0j, -complex(pw.value(np.array([start]))[0])
    return _ode_point(h, start, u0, up0, target, tol)


# --------------------------------------------------------------------------
# drivers


@dataclass
class ContinuationResult:
    params: DDEParameters
    seed: SolutionPatch
    right: PiecewisePatch
    left: PiecewisePatch | None  # in the reflected frame

    def _split(self, x, attr, sign):
        x = np.asarray(x, dtype=complex)
        if self.left is None:
            return getattr(self.right, attr)(x)
        m = x.real < self.seed.region.xi_range[0]
        out = np.empty_like(x)
        if np.any(~m):
            out[~m] = getattr(self.right, attr)(x[~m])
        if np.any(m):
            out[m] = sign * getattr(self.left, attr)(-x[m])
        return out

    def value(self, x):
        return self._split(x, "value", 1.0)

    def derivative(self, x):
        return self._split(x, "derivative", -1.0)

    @property
    def region(self) -> StripRegion:
        r = self.right.region
        lo = r.xi_range[0] if self.left is None else -self.left.region.xi_range[1]
        return StripRegion((lo, r.xi_range[1]), r.eta_lo, r.eta_hi)

    @property
    def poles(self) -> list[PoleRecord]:
        out = [p for s in self.right.slabs[1:] for p in s.poles]
        if self.left is not None:
            out += [p.reflected() for s in self.left.slabs[1:] for p in s.poles]
        return sorted(out, key=lambda p: (round(p.x.real, 9), round(p.x.imag, 9)))

    @property
    def slabs(self):
        out = []
        if self.left is not None:
            out += [("left", s) for s in self.left.slabs[1:]]
        out += [("right", s) for s in self.right.slabs[1:]]
        return out

    def as_patch(self) -> SolutionPatch:
        return SolutionPatch(self.region, self.value, self.derivative, tuple(self.poles))


def continue_patch(seed: SolutionPatch, params: DDEParameters, n_right: int, n_left: int = 0,
                   config: ContinuationConfig = ContinuationConfig()) -> ContinuationResult:
    """Continue an a-wide seed ``n_right`` slabs rightward and ``n_left`` leftward."""
    a = float(params.a)
    if not seed.region.is_a_wide(a) and abs(seed.region.width - a) > 1e-12:
        raise OutOfRegion("seed region must be at least a wide in the real direction")
    seed_slab = Slab(seed.region, seed.value, seed.derivative, list(seed.poles), 0)
    right = PiecewisePatch([seed_slab])
    for _ in range(n_right):
        right.slabs.append(continue_right(right, params, config))
    left = None
    if n_left:
        rseed = reflect_patch(seed)
        rparams = reflect_left(params)
        left = PiecewisePatch([Slab(rseed.region, rseed.value, rseed.derivative, list(rseed.poles), 0)])
        for _ in range(n_left):
            left.slabs.append(continue_right(left, rparams, config))
    return ContinuationResult(params, seed, right, left)


def series_patch(fs, region: StripRegion, n_terms: int | None = None) -> SolutionPatch:
    """Seed patch f(x) = f_hat(x + b) from a truncated formal solution.

    One truncation order is used on the whole region (the optimal one at the
    point nearest the origin) so that value and derivative stay analytic.
    """
    from .series_core import evaluate_series

    b = float(fs.params.a) / 2
    s = fs.as_series()
    corners = np.array([region.xi_range[0] + 1j * e for e in (region.eta_lo, region.eta_hi, 0.0)
                        if region.eta_lo <= e <= region.eta_hi]) + b
    if np.any(corners.real <= 0):
        raise OutOfRegion("series seed needs Re(x + b) > 0 on the region")
    items = [(n, complex(c)) for n, c in s.items()]
    if n_terms is None:
        zc = complex(corners[np.argmin(np.abs(corners))])
        n_terms = len(items)
        mags = [abs(c) * abs(zc) ** (-n / 2) for n, c in items]
        dec = [i for i, (n, c) in enumerate(items) if n > 0 and c != 0]
        if dec:
            imin = min(dec, key=mags.__getitem__)
            n_terms = imin if imin < len(items) - 1 else len(items)
        _, err = evaluate_series(s, zc, n_terms)
        log.info("series seed: %d terms, first omitted term %.2e", n_terms, err)
    ns = np.array([n for n, _ in items[:n_terms]], dtype=float)
    cs = np.array([c for _, c in items[:n_terms]])

    def value(x):
        z = np.asarray(x, dtype=complex) + b
        lz = np.log(z)
        return np.sum(cs * np.exp(-0.5 * np.multiply.outer(lz, ns)), axis=-1)

    def derivative(x):
        z = np.asarray(x, dtype=complex) + b
        lz = np.log(z)
        return np.sum(cs * (-0.5 * ns) * np.exp(-np.multiply.outer(lz, 0.5 * ns + 1)), axis=-1)

    return SolutionPatch(region, value, derivative, ())


# --------------------------------------------------------------------------
# diagnostics


def _away_from_poles(patch, x, radius):
    for p in getattr(patch, "poles", ()):
        px = p.x if isinstance(p, PoleRecord) else p
        if np.any(np.abs(np.asarray(x) - px) < radius):
            return False
    return True


def dde_residual_numeric(patch, x, params: DDEParameters, near: float = 0.0):
    """f'(x) + f'(x+a) + f(x)^2 - f(x+a)^2 - mu with structural derivatives."""
    a = float(params.a)
    x = np.asarray(x, dtype=complex)
    reg = patch.region
    if not (np.all(reg.contains(x, pad=1e-9)) and np.all(reg.contains(x + a, pad=1e-9))):
        raise OutOfRegion("x and x + a must both lie in the patch")
    if near > 0 and not (_away_from_poles(patch, x, near) and _away_from_poles(patch, x + a, near)):
        raise NearPole("evaluation point too close to a pole")
    f0, f1 = patch.value(x), patch.value(x + a)
    return patch.derivative(x) + patch.derivative(x + a) + f0 * f0 - f1 * f1 - complex(params.mu)


def potentials(patch, spectral_const: complex, x):
    """(f^2 - f' + c, f^2 + f' + c): the potentials before and after factor exchange."""
    x = np.asarray(x, dtype=complex)
    f, fp = patch.value(x), patch.derivative(x)
    return f * f - fp + spectral_const, f * f + fp + spectral_const
