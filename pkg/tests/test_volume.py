import numpy as np
import pytest
from scipy.integrate import quad

from diracshell import kernels as kn
from diracshell.errors import DomainError
from diracshell.resolvent import free_resolvent_apply
from diracshell.volume import VolumeGrid, ball_rule, cone_direction_rule, convolve, direction_rule, polar_rule

SPIN = np.array([1.0, 0.5j, 0.2, -0.3])


def gaussian(y, c0=np.array([0.1, -0.2, 0.3]), width=0.6):
    return np.exp(-np.sum((y - c0) ** 2, axis=-1) / width**2)[..., None] * SPIN


def yukawa_ball(d, a, mu):
    # int_{|y| < a} exp(-mu |x - y|) / (4 pi |x - y|) dy for |x| = d, via shell averages
    def shell(rho):
        lo, hi = min(rho, d), max(rho, d)
        return rho**2 * np.exp(-mu * hi) * np.sinh(mu * lo) / (mu * lo * hi)

    pts = [d] if d < a else None
    return quad(shell, 0.0, a, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


@pytest.mark.parametrize("kw", [dict(n=0), dict(half_width=0.0), dict(rule="simpson"), dict(panels=0)])
def test_grid_validation(kw):
    with pytest.raises(DomainError):
        VolumeGrid(**kw)


def test_direction_rules_integrate_polynomials():
    for w, ww in (direction_rule(8), cone_direction_rule(np.array([0.4, -1.1, 0.7]), 1.0, 12)):
        assert abs(ww.sum() - 4 * np.pi) < 1e-8
        assert abs(np.sum(ww * w[:, 2] ** 2) - 4 * np.pi / 3) < 1e-8
        assert abs(np.sum(ww * w[:, 0] * w[:, 1])) < 1e-8


def test_polar_and_ball_rules_measure_the_box():
    grid = VolumeGrid(half_width=1.5, radial_order=6, angular_order=10, panels=3)
    _, wt = polar_rule(np.array([0.2, -0.4, 0.9]), grid)
    # the ray length has kinks at the box faces, hence only percent accuracy;
    # sources are assumed negligible there
    assert abs(wt.sum() - 27.0) < 0.02 * 27.0
    _, wt = ball_rule(np.zeros(3), 2.0, grid, (1.0,))
    assert abs(wt.sum() - 4 * np.pi * 8 / 3) < 1e-10


def test_free_resolvent_solves_dirac_equation():
    p = kn.PhysParams(1.0, 1.0)
    lam = 0.2 + 0.6j
    grid = VolumeGrid(center=(0.1, -0.2, 0.3), half_width=3.0, radial_order=10, angular_order=14, panels=6)
    x0 = np.array([0.1, 0.2, 0.5])
    h = 1e-3
    pts = [x0]
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        pts += [x0 + e, x0 - e]
    u = free_resolvent_apply(p, lam, gaussian, np.array(pts), grid)
    lhs = p.rest_energy * kn.BETA @ u[0] - lam * u[0]
    for j in range(3):
        lhs = lhs - 1j * p.c * kn.ALPHA[j] @ (u[1 + 2 * j] - u[2 + 2 * j]) / (2 * h)
    rhs = gaussian(x0)
    assert np.abs(lhs - rhs).max() < 1e-4 * np.abs(rhs).max()


def test_far_target_rules_agree_with_midpoint():
    # away from the source the midpoint sum of a smooth integrand is very accurate
    form = kn.green_form(kn.PhysParams(1.0, 1.0), 0.3j)
    x = np.array([[4.0, 0.5, -0.5]])
    ball = convolve(form, gaussian, x, VolumeGrid(center=(0.1, -0.2, 0.3), half_width=2.5))
    mid = convolve(form, gaussian, x, VolumeGrid(center=(0.1, -0.2, 0.3), half_width=2.5, n=40, rule="midpoint"))
    assert np.abs(ball - mid).max() < 1e-6 * np.abs(mid).max()


def test_jump_across_sphere_is_resolved():
    # indicator of the unit ball against the Yukawa kernel, exact by shell averages
    m, lam = 1.0, -0.5  # k = i, so exp(ikr) = exp(-r)
    form = kn.schrodinger_form(m, lam)

    def ball(y):
        inside = np.sum(y**2, axis=-1) < 1.0
        return inside[..., None] * np.array([1.0, 0.0, 0.0, 0.0])

    targets = np.array([[0.2, 0.3, 0.1], [0.0, 0.0, 1.6], [1.05, 0.0, 0.0], [0.0, 0.6, -0.7]])
    grid = VolumeGrid(half_width=1.2, radial_order=8, angular_order=12, panels=4)
    got = convolve(form, ball, targets, grid, interface_radius=1.0)[:, 0]
    ref = np.array([2.0 * m * yukawa_ball(np.linalg.norm(x), 1.0, 1.0) for x in targets])
    assert np.abs(got - ref).max() < 1e-6 * np.abs(ref).max()
