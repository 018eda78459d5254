"""Sectors of validity for the formal solutions and the integration rays used by the IDE.

Angles live on the universal cover: they are plain reals that are never
folded into (-pi, pi] until a complex number is actually formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import OutsideSigma

TWO_PI = 2 * math.pi
_EPS = 1e-12


def beta_n(arg_lambda: float, n: int) -> float:
    """Bisector angle (2/3) pi (1 + 2n) - (2/3) arg(lambda)."""
    if n not in (0, 1, 2):
        raise ValueError("n must be 0, 1 or 2")
    return 2 * math.pi * (1 + 2 * n) / 3 - 2 * arg_lambda / 3


@dataclass(frozen=True)
class SectorSpec:
    branch: str
    n: int
    beta: float
    arg_lo: float
    arg_hi: float
    empty: bool

    @property
    def opening(self) -> float:
        return 0.0 if self.empty else self.arg_hi - self.arg_lo

    def contains_arg(self, theta: float) -> bool:
        return not self.empty and self.arg_lo < theta < self.arg_hi

    def contains_right_half_plane(self) -> bool:
        return not self.empty and self.arg_lo < -math.pi / 2 and self.arg_hi > math.pi / 2

    def to_json(self) -> dict:
        return {"branch": self.branch, "n": self.n, "beta": self.beta,
                "arg_lo": self.arg_lo, "arg_hi": self.arg_hi, "empty": self.empty,
                "opening": self.opening}


def _next_above(beta: float, offset: float) -> float:
    """Smallest angle offset + 2*pi*k strictly above beta."""
    k = math.floor((beta - offset) / TWO_PI + _EPS) + 1
    return offset + TWO_PI * k


def _next_below(beta: float, offset: float) -> float:
    k = math.ceil((beta - offset) / TWO_PI - _EPS) - 1
    return offset + TWO_PI * k


def _is_multiple(x: float, offset: float) -> bool:
    t = (x - offset) / TWO_PI
    return abs(t - round(t)) < 1e-9


def sector(branch: str, n: int, arg_lambda: float) -> SectorSpec:
    """S+_n or S-_n.

    Start from the ray ``arg z = beta_n`` and grow in both directions until
    reaching either the forbidden direction (negative reals for S+, positive
    reals for S-) or the ray ``beta_n +/- pi``.
    """
    beta = beta_n(arg_lambda, n)
    offset = math.pi if branch == "+" else 0.0
    if _is_multiple(beta, offset):
        return SectorSpec(branch, n, beta, beta, beta, True)
    hi = min(beta + math.pi, _next_above(beta, offset))
    lo = max(beta - math.pi, _next_below(beta, offset))
    return SectorSpec(branch, n, beta, lo, hi, False)


@dataclass(frozen=True)
class ContourSpec:
    anchor: complex  # zeta
    ray_angle: float
    case: str  # "bisector", "upper", "lower"


@dataclass(frozen=True)
class SigmaSpec:
    """Shifted image sector zeta0 + {arg in (arg_lo, arg_hi)} in the zeta-plane."""

    zeta0: complex
    arg_lo: float
    arg_hi: float

    def contains(self, zeta: complex) -> bool:
        d = zeta - self.zeta0
        if d == 0:
            return True
        th = math.atan2(d.imag, d.real)
        for k in (-1, 0, 1):
            if self.arg_lo - 1e-12 <= th + TWO_PI * k <= self.arg_hi + 1e-12:
                return True
        return False


def gamma_contour(zeta: complex, beta0: float, sigma: SigmaSpec | None = None,
                  arg_zeta: float | None = None) -> ContourSpec:
    """Ray from ``zeta`` along which exp((4/3) lambda (tau - zeta)) stays bounded.

    Parallel to the image bisector (3/2) beta0 when arg(zeta) is within pi/2 of
    it, otherwise perpendicular to arg(zeta), turned toward the bisector.
    """
    if sigma is not None and not sigma.contains(zeta):
        raise OutsideSigma(f"zeta={zeta} is outside the shifted sector")
    if arg_zeta is None:
        arg_zeta = math.atan2(zeta.imag, zeta.real)
    d = arg_zeta - 1.5 * beta0
    if abs(d) < math.pi / 2:
        return ContourSpec(zeta, 1.5 * beta0, "bisector")
    if d < -math.pi / 2:
        return ContourSpec(zeta, arg_zeta + math.pi / 2, "upper")
    return ContourSpec(zeta, arg_zeta - math.pi / 2, "lower")


def map_zeta(r: float, theta: float) -> tuple[float, float]:
    """z = r e^{i theta}  ->  zeta = z^{3/2} in tracked polar form."""
    return r**1.5, 1.5 * theta


def map_z(rho: float, phi: float) -> tuple[float, float]:
    """Inverse of :func:`map_zeta`."""
    return rho ** (2.0 / 3.0), phi / 1.5


def polar_to_complex(r: float, theta: float) -> complex:
    return complex(r * math.cos(theta), r * math.sin(theta))
