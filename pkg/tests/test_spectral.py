import numpy as np
import pytest

from diracshell.errors import DomainError, ExcludedCouplingError
from diracshell.kernels import PhysParams
from diracshell.operators import assemble_M
from diracshell.radial import sphere_bound_states_radial
from diracshell.spectral import (
    eig_M,
    eigenvalue_count_experiment,
    estimate_M0,
    find_bound_states,
    pairing_check,
    scan_curves,
    trace_formula_check,
)
from diracshell.surface import make_sphere

P = PhysParams(1.0, 1.0)


@pytest.fixture(scope="module")
def sphere():
    return make_sphere(1.0, 8)


@pytest.fixture(scope="module")
def curve(sphere):
    return scan_curves(P, sphere, np.linspace(-1.0, 1.0, 21))


def test_eig_rejects_complex_lambda(sphere):
    with pytest.raises(DomainError):
        eig_M(assemble_M(P, 0.1 + 0.2j, sphere))


def test_grid_validation(sphere):
    with pytest.raises(DomainError, match="outside spectral gap"):
        scan_curves(P, sphere, [-1.5, 0.0, 0.5])
    with pytest.raises(DomainError):
        scan_curves(P, sphere, [0.0, 0.5])


def test_branches_are_monotone(curve):
    assert curve.values.shape == (21, assemble_M(P, 0.0, curve.surface).dimension)
    assert curve.monotonicity_violations(1e-6) == []


def test_threads_do_not_change_results(sphere):
    grid = np.linspace(-0.5, 0.5, 4)
    a = scan_curves(P, sphere, grid)
    b = scan_curves(P, sphere, grid, threads=2)
    assert np.array_equal(a.values, b.values)


def test_bound_states_match_radial_roots(sphere, curve):
    p = P.with_eta(-1.5)
    found = find_bound_states(p, sphere, curve)
    exact = sphere_bound_states_radial(1.0, p, 7)
    # channels with |kappa| <= lmax are carried exactly by the Galerkin blocks
    lams = np.array([b.lambda_star for b in found])
    for r in exact:
        if abs(r.kappa) <= 3:
            assert np.min(np.abs(lams - r.lambda_star)) < 1e-9


def test_bound_state_multiplicity(sphere, curve):
    p = P.with_eta(-1.5)
    found = find_bound_states(p, sphere, curve)
    exact = {round(r.lambda_star, 8): r.degeneracy for r in sphere_bound_states_radial(1.0, p, 3)}
    lowest = found[0]
    assert lowest.multiplicity_estimate == exact[round(lowest.lambda_star, 8)]


def test_zero_and_excluded_coupling(sphere, curve):
    assert find_bound_states(P.with_eta(0.0), sphere, curve) == []
    with pytest.raises(ExcludedCouplingError):
        find_bound_states(P.with_eta(2.0), sphere, curve)


def test_pairing_of_outliers(sphere):
    rep = pairing_check(assemble_M(P, 0.0, sphere))
    assert 4 <= len(rep.outliers) <= 10
    assert rep.max_defect < 1e-8


def test_M0_estimate_bounds_spectrum(sphere):
    est = estimate_M0(P, sphere, grid=np.linspace(-1.0, 1.0, 5))
    assert est.value >= np.max(np.abs(eig_M(assemble_M(P, 0.3, sphere)).values)) - 1e-12
    assert est.value == pytest.approx(est.norms.max())


def test_trace_check_agrees(sphere):
    rep = trace_formula_check(P.with_eta(1.0), sphere, 0.3 + 0.5j)
    assert rep.relative_gap < 1e-4
    assert rep.inner_gap < 1e-6


def test_count_experiment(sphere):
    rows = eigenvalue_count_experiment(P, sphere, [-1.5], [1.0], grid_points=11)
    assert rows[0].distinct >= 1
    assert rows[0].total >= rows[0].distinct
