from fractions import Fraction

import numpy as np
import pytest

from frobenius_cases import classified_transition, manufactured_h
from meromorphic_dde.continuation_engine import (
    continue_patch,
    dde_residual_numeric,
    find_poles,
    frobenius_classify,
    h_from_f,
    integrate_u,
    local_expansion_u,
    potentials,
    predict_next_N,
    reflect_left,
    reflect_patch,
    residue_at,
    resonance_defect,
    seed_u,
    series_patch,
)
from meromorphic_dde.errors import NearPole, OutOfRegion
from meromorphic_dde.patch import PoleRecord, SolutionPatch, StripRegion
from meromorphic_dde.series_core import DDEParameters, evaluate_series, formal_solution
from meromorphic_dde.special_functions import Lattice, mu0_pole_lattice, mu0_solution

MU0 = DDEParameters(Fraction(1), Fraction(0))
MU1 = DDEParameters(Fraction(1), Fraction(-1))


def const_patch(c, region=StripRegion((0.0, 1.0), -1.0, 1.0)):
    return SolutionPatch(region, lambda x: np.full(np.shape(x), c, dtype=complex),
                         lambda x: np.zeros(np.shape(x), dtype=complex))


# --- ODE pieces --------------------------------------------------------------

def test_cos_zeros_on_real_path():
    h = lambda x: np.ones_like(np.asarray(x, dtype=complex))  # noqa: E731
    path = np.linspace(0, 10, 41)
    tr = integrate_u(h, path, 1.0, 0.0)
    zeros = find_poles(tr, StripRegion((0, 10), -1, 1), h, threshold=0.5)
    expected = [np.pi / 2 + k * np.pi for k in range(3)]
    assert len(zeros) == 3
    for (x, _), e in zip(zeros, expected):
        assert abs(x - e) < 1e-10


def test_exponential_has_no_zeros():
    h = lambda x: -np.ones_like(np.asarray(x, dtype=complex))  # noqa: E731
    tr = integrate_u(h, np.linspace(0, 5, 21), 1.0, 1.0)
    assert find_poles(tr, StripRegion((0, 5), -1, 1), h, threshold=0.5) == []


def test_linearization_consistency_on_elliptic_solution():
    lat, x0 = Lattice(3, 3j), 0.31 + 1.4j
    f = mu0_solution(lat, x0, 1.0, StripRegion((0.81, 2.81), -1, 2))
    h = h_from_f(f, MU0)
    start = 1.9 + 0.2j
    u0, up0 = seed_u(f, start, 1.0)
    path = np.linspace(start, 2.7 + 0.2j, 9)
    tr = integrate_u(h, path, u0, up0)
    assert np.abs(tr.f()[:, 0] - f.value(path)).max() < 1e-10


# --- Frobenius data -------------------------------------------------------------

def test_classify_examples():
    const = lambda c: (lambda x: np.full(np.shape(x), c, dtype=complex))  # noqa: E731
    assert frobenius_classify(const(0.4), 0.0).N == 1
    assert frobenius_classify(lambda x: -2 / np.asarray(x) ** 2 + 0.3, 0.0).N == 2
    assert frobenius_classify(lambda x: -6 / np.asarray(x) ** 2 + 0.3, 0.0).N == 3


def test_simple_zero_expansion():
    h0, h1 = 0.7, -0.2
    data = frobenius_classify(lambda x: h0 + h1 * np.asarray(x), 0.0)
    u = local_expansion_u(data, "m8", 3)
    assert abs(u[1]) < 1e-14
    assert abs(u[2] + h0 / 6) < 1e-13
    assert abs(u[3] + h1 / 12) < 1e-13


def test_zero_h_gives_exact_linear_u():
    data = frobenius_classify(lambda x: np.zeros(np.shape(x), dtype=complex), 0.0)
    assert data.N == 1
    assert np.allclose(local_expansion_u(data, "m8", 6), [1, 0, 0, 0, 0, 0, 0], atol=1e-15)


@pytest.mark.parametrize("N", [2, 3])
@pytest.mark.parametrize("kind", ["m8", "m9"])
def test_odd_coefficients_vanish(N, kind):
    data = frobenius_classify(manufactured_h(N), 0.0, radius=0.3)
    assert data.N == N
    u = local_expansion_u(data, kind, 2 * N + 2)
    assert max(abs(u[k]) for k in range(1, 2 * N, 2)) < 1e-10 * data.scale
    assert abs(resonance_defect(data)) < 1e-10 * data.scale


def test_odd_term_in_h_shows_up_after_the_protected_range():
    data = frobenius_classify(manufactured_h(2), 0.0, radius=0.3)
    u = local_expansion_u(data, "m8", 6)
    assert abs(u[5]) > 1e-3


@pytest.mark.parametrize("N,kind,expected", [(1, "m8", 2), (2, "m9", 1), (2, "m8", 3),
                                             (3, "m8", 4), (3, "m9", 2)])
def test_predicted_transitions_match_classified_data(N, kind, expected):
    assert predict_next_N(N, kind) == expected
    assert classified_transition(N, kind) == (N, expected)


def test_predict_next_N_rejects_zero():
    with pytest.raises(ValueError):
        predict_next_N(0, "m8")


def test_residue_at_simple_pole():
    f = lambda x: -1 / (np.asarray(x) - 0.3j) + np.sin(x)  # noqa: E731
    assert abs(residue_at(f, 0.3j, 0.1) + 1) < 1e-13


# --- reflection, residual, potentials -------------------------------------------

def test_reflection():
    assert reflect_left(DDEParameters(Fraction(1), Fraction(3))).mu == -3
    lat, x0 = Lattice(3, 3j), 0.31 + 1.4j
    f = mu0_solution(lat, x0, 1.0, StripRegion((0.81, 2.81), -1, 2))
    twice = reflect_patch(reflect_patch(f))
    x = np.array([1.0 + 0.3j, 2.1 - 0.5j])
    assert np.array_equal(twice.value(x), f.value(x))
    assert np.array_equal(twice.derivative(x), f.derivative(x))
    g = reflect_patch(f)
    t = np.array([-2.5 + 0.3j, -2.0 - 0.2j])
    assert np.abs(dde_residual_numeric(g, t, reflect_left(MU0))).max() < 1e-10


def test_residual_of_constants():
    p = const_patch(2.0)
    x = np.array([0.1 + 0.2j, 0.3])
    assert np.allclose(dde_residual_numeric(p, x, DDEParameters(0.5, 0.0)), 0)
    assert np.allclose(dde_residual_numeric(p, x, DDEParameters(0.5, 1.5)), -1.5)


def test_residual_guards():
    p = const_patch(2.0)
    with pytest.raises(OutOfRegion):
        dde_residual_numeric(p, np.array([0.9]), DDEParameters(0.5, 0.0))
    q = SolutionPatch(p.region, p.value, p.derivative, (PoleRecord(0.2 + 0j, 0, 1, -1 + 0j, "m8"),))
    with pytest.raises(NearPole):
        dde_residual_numeric(q, np.array([0.25]), DDEParameters(0.5, 0.0), near=0.1)


def test_potentials():
    zero = const_patch(0.0)
    assert potentials(zero, 5.0, np.array([0.3]))[0][0] == 5
    assert potentials(zero, 5.0, np.array([0.3]))[1][0] == 5
    lat, x0 = Lattice(3, 3j), 0.31 + 1.4j
    f = mu0_solution(lat, x0, 1.0, StripRegion((0.81, 2.81), -1, 2))
    x = np.array([1.0 + 0.1j, 1.5 - 0.7j])
    _, u_tilde = potentials(f, 0.2, x)
    u_pot, _ = potentials(f, 0.2, x + 1.0)
    assert np.abs(u_tilde - u_pot).max() < 1e-8


def test_constant_solution_continues_unchanged():
    res = continue_patch(const_patch(2.0), MU0, 1)
    x = np.array([1.2 + 0.5j, 1.9 - 0.8j, 1.5])
    assert np.abs(res.value(x) - 2).max() < 1e-10
    assert res.poles == []


# --- whole runs (session fixtures) ----------------------------------------------

def test_mu0_run_matches_closed_form(mu0_run):
    res = mu0_run.result
    lat, x0 = Lattice(3, 3j), 0.31 + 1.4j
    exact = mu0_solution(lat, x0, 1.0)
    reg = res.region
    pl = np.array([p for p, _ in mu0_pole_lattice(lat, x0, 1.0, reg, pad=1)])
    rng = np.random.default_rng(0)
    x = rng.uniform(*reg.xi_range, 3000) + 1j * rng.uniform(reg.eta_lo, reg.eta_hi, 3000)
    x = x[np.min(np.abs(x[:, None] - pl[None, :]), axis=1) >= 0.1]
    assert np.abs(res.value(x) - exact.value(x)).max() < 1e-6
    assert np.abs(res.derivative(x) - exact.derivative(x)).max() < 1e-5


def test_mu0_run_chain_checks(mu0_run):
    checks = [c for _, s in mu0_run.result.slabs for c in s.diagnostics.get("chain_checks", [])]
    assert checks
    for c in checks:
        assert c["N"] == c["predicted"]
        assert c["monodromy"] < 1e-8


def test_mu_neg_residual_and_poles(mu_neg_run):
    res = mu_neg_run.result
    reg = res.region
    P = np.array([p.x for p in res.poles])
    rng = np.random.default_rng(1)
    x = rng.uniform(reg.xi_range[0], reg.xi_range[1] - 1, 3000) + 1j * rng.uniform(reg.eta_lo, reg.eta_hi, 3000)
    d = np.minimum(np.min(np.abs(x[:, None] - P[None, :]), axis=1),
                   np.min(np.abs(x[:, None] + 1 - P[None, :]), axis=1))
    assert np.abs(dde_residual_numeric(res, x[d > 0.1], MU1)).max() < 1e-6
    assert len(res.poles) >= 6


def test_mu_neg_residues_stable_under_radius_halving(mu_neg_run):
    res = mu_neg_run.result
    P = [p.x for p in res.poles]
    checked = 0
    for p in res.poles:
        gap = min([abs(p.x - q) for q in P if q != p.x] + [1.0])
        r = min(0.25, 0.4 * gap)
        if not res.region.contains(p.x, pad=-r):
            continue
        r1 = residue_at(res.value, p.x, r, 128)
        r2 = residue_at(res.value, p.x, r / 2, 128)
        assert abs(r1 - r2) < 1e-6
        checked += 1
    assert checked >= 4


def test_series_agrees_with_continuation_beyond_the_seed(mu_neg_run):
    """Cross-check of the asymptotic series against the continued solution one slab left of the seed."""
    res = mu_neg_run.result
    s = formal_solution(MU1, "-", K=60, kind="mp").as_series()
    for x in (7.0 + 0.5j, 7.2 - 1.0j, 6.8 + 2.0j):
        val, err = evaluate_series(s, x + 0.5)
        assert abs(res.value(np.array([x]))[0] - val) < max(1e-9, 10 * err)


def test_series_seed_needs_positive_z():
    fs = formal_solution(MU1, "-", K=10, kind="mp")
    with pytest.raises(OutOfRegion):
        series_patch(fs, StripRegion((-1.0, 0.0), -1, 1))
