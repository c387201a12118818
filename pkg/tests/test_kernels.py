import numpy as np
import pytest

from diracshell import kernels as kn
from diracshell.errors import BranchPointError, DomainError


def dirac_apply(p, field, x, h=1e-4):
    # -i c alpha.grad + m c^2 beta by central differences
    out = p.rest_energy * np.einsum("ij,...j->...i", kn.BETA, field(x))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        d = (field(x + e) - field(x - e)) / (2 * h)
        out = out - 1j * p.c * np.einsum("ij,...j->...i", kn.ALPHA[j], d)
    return out


def test_anticommutators_exact():
    assert np.all(kn.DiracAlgebra().anticommutator_defects() == 0.0)


def test_params_validation():
    with pytest.raises(DomainError):
        kn.PhysParams(0.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        kn.PhysParams(1.0, 1.0, np.inf)
    assert kn.PhysParams(1, 2, 4.0).is_excluded_coupling()
    assert not kn.PhysParams(1, 2, 3.9).is_excluded_coupling()


def test_wavenumber_branch():
    p = kn.PhysParams(1.0, 1.0)
    for lam in (0.3, -0.7, 0.2 + 0.5j, -1.5 + 0.1j):
        k = kn.wavenumber(p, lam)
        assert k.imag >= 0
        assert abs(k**2 - (lam**2 / p.c**2 - (p.m * p.c) ** 2)) < 1e-14
    assert abs(kn.wavenumber(p, 0.0) - 1j) < 1e-15


def test_resolvent_point_checks():
    p = kn.PhysParams(1.0, 2.0)
    with pytest.raises(DomainError):
        kn.check_resolvent_point(p, 5.0)
    with pytest.raises(BranchPointError):
        kn.check_resolvent_point(p, 4.0, allow_endpoints=False)
    assert kn.check_resolvent_point(p, 4.0) == 4.0


@pytest.mark.parametrize("lam", [0.3, 0.2 + 0.6j])
def test_green_kernel_solves_free_equation(lam):
    p = kn.PhysParams(1.0, 1.3)
    x = np.array([0.3, -0.4, 0.7])
    col = np.array([1.0, 0.5j, -0.2, 0.1])

    def field(y):
        return kn.green_kernel(p, lam, y) @ col

    res = dirac_apply(p, field, x) - lam * field(x)
    assert np.max(np.abs(res)) < 1e-6 * np.max(np.abs(field(x)))


def test_green_kernel_hermitian_symmetry():
    p = kn.PhysParams(1.0, 1.0)
    x = np.array([[0.2, 0.1, -0.5], [1.0, 2.0, 0.3]])
    for lam in (0.4, 0.1 + 0.3j):
        g = kn.green_kernel(p, lam, x)
        gs = kn.green_kernel(p, np.conj(lam), -x)
        assert np.allclose(g, np.conj(np.swapaxes(gs, -1, -2)), atol=1e-14)


def test_dlambda_matches_difference():
    p = kn.PhysParams(1.0, 1.0)
    x = np.array([0.3, 0.2, -0.4])
    lam, h = 0.25, 1e-5
    fd = (kn.green_kernel(p, lam + h, x) - kn.green_kernel(p, lam - h, x)) / (2 * h)
    assert np.allclose(kn.green_kernel_dlambda(p, lam, x), fd, atol=1e-8)


def test_forms_match_kernels():
    p = kn.PhysParams(1.0, 1.5)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20, 3))
    u = rng.normal(size=(20, 4)) + 1j * rng.normal(size=(20, 4))
    lam = 0.3 + 0.4j
    pairs = [
        (kn.green_form(p, lam), kn.green_kernel(p, lam, x)),
        (kn.shifted_green_form(p, lam), kn.shifted_green_kernel(p, lam, x)),
        (kn.schrodinger_form(p.m, lam), kn.schrodinger_kernel_lifted(p.m, lam, x)),
    ]
    for form, full in pairs:
        assert np.allclose(form(x), full, atol=1e-14)
        assert np.allclose(form.apply(x, u), np.einsum("nij,nj->ni", full, u), atol=1e-14)


def test_shifted_kernel_equals_green_kernel_at_shifted_point():
    p = kn.PhysParams(1.0, 4.0)
    x = np.array([[0.5, 0.1, 0.2]])
    lam = 0.2 + 0.5j
    assert np.allclose(kn.shifted_green_kernel(p, lam, x), kn.green_kernel(p, lam + p.rest_energy, x), rtol=1e-10)


def test_nonrel_kernel_difference_decays():
    x = np.array([[0.4, -0.2, 0.6]])
    lam = 1j
    d = [np.abs(kn.nonrel_kernel_difference(kn.PhysParams(1.0, c), lam, x)).max() for c in (8.0, 16.0, 32.0)]
    assert d[0] > d[1] > d[2]
    assert 1.6 < d[0] / d[1] < 2.4
