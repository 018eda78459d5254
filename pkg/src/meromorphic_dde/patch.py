"""Regions, pole records and solution patches shared across modules."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class StripRegion:
    """Rectangle ``xi_range[0] <= Re x <= xi_range[1]``, ``eta_lo <= Im x <= eta_hi``.

    The shift ``a`` is real, so the direction that has to be wider than ``a``
    is the real one; see :meth:`is_a_wide`.
    """

    xi_range: tuple[float, float]
    eta_lo: float
    eta_hi: float

    def __post_init__(self):
        if not self.eta_hi > self.eta_lo:
            raise ValueError("eta_hi must exceed eta_lo")
        if not self.xi_range[1] > self.xi_range[0]:
            raise ValueError("empty xi range")

    @property
    def width(self) -> float:
        return self.xi_range[1] - self.xi_range[0]

    @property
    def height(self) -> float:
        return self.eta_hi - self.eta_lo

    def is_a_wide(self, a: float) -> bool:
        return self.width > a

    def contains(self, x, pad: float = 1e-12):
        x = np.asarray(x)
        return (
            (x.real >= self.xi_range[0] - pad)
            & (x.real <= self.xi_range[1] + pad)
            & (x.imag >= self.eta_lo - pad)
            & (x.imag <= self.eta_hi + pad)
        )

    def shifted(self, dx: float) -> "StripRegion":
        return StripRegion((self.xi_range[0] + dx, self.xi_range[1] + dx), self.eta_lo, self.eta_hi)

    def reflected(self) -> "StripRegion":
        """Image under x -> -x."""
        return StripRegion((-self.xi_range[1], -self.xi_range[0]), -self.eta_hi, -self.eta_lo)

    def union_right(self, other: "StripRegion") -> "StripRegion":
        return StripRegion((self.xi_range[0], other.xi_range[1]),
                           max(self.eta_lo, other.eta_lo), min(self.eta_hi, other.eta_hi))


@dataclass(frozen=True)
class PoleRecord:
    x: complex
    chain: int
    frobenius_N: int
    residue: complex
    local_type: str  # "m8", "m9" or "regular"
    slab: int = 0
    direction: int = 1

    def to_json(self) -> dict:
        return {
            "x": [float(self.x.real), float(self.x.imag)],
            "chain": int(self.chain),
            "N": int(self.frobenius_N),
            "residue": [float(self.residue.real), float(self.residue.imag)],
            "type": self.local_type,
        }

    def reflected(self) -> "PoleRecord":
        """The same pole seen through x -> -x, where residues change sign."""
        res = -self.residue
        N, kind = type_from_residue(res.real)
        return replace(self, x=-self.x, residue=res, frobenius_N=N, local_type=kind,
                       direction=-self.direction)


def type_from_residue(r: float) -> tuple[int, str]:
    """Frobenius data implied by an integer residue of f = -u'/u.

    A zero of order N of u gives residue -N (special solution); a pole of
    order N-1 gives residue N-1 (generic solution).  Residue 0 is regular.
    """
    k = int(round(r))
    if k < 0:
        return -k, "m8"
    if k == 0:
        return 1, "regular"
    return k + 1, "m9"


@dataclass(frozen=True)
class SolutionPatch:
    """A solution known on ``region`` through vectorized evaluators."""

    region: StripRegion
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    poles: tuple[PoleRecord, ...] = field(default_factory=tuple)

    def __call__(self, x):
        return self.value(x)
