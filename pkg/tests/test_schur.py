import numpy as np
import pytest
from scipy.integrate import quad

from diracshell.errors import DomainError
from diracshell.kernels import PhysParams
from diracshell.schur import (
    CertificateKind,
    NormCertificate,
    certify_gamma0,
    certify_M0,
    certify_R0,
    certify_operator_norm,
    fit_bounded_part_kappa,
    fit_kernel_kappa,
    surface_constant,
    volume_constant,
)
from diracshell.surface import icosphere, load_mesh, make_sphere, write_off


def radial_quad(s, R, k2):
    inner = quad(lambda r: 4 * np.pi * r ** (2 - s), 0, R, epsabs=0, epsrel=1e-13)[0]
    outer = quad(lambda r: 4 * np.pi * r**2 * np.exp(-k2 * r), R, np.inf, epsabs=0, epsrel=1e-13)[0]
    return inner + outer


@pytest.mark.parametrize("s,R,k2", [(2.0, 1.0, 1.0), (0.5, 2.0, 0.3), (2.9, 0.5, 4.0)])
def test_volume_constant_closed_form(s, R, k2):
    ref = radial_quad(s, R, k2)
    assert abs(volume_constant(s, R, k2) - ref) < 1e-10 * ref


@pytest.mark.parametrize("args", [(3.0, 1.0, 1.0), (0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
def test_volume_constant_domain(args):
    with pytest.raises(DomainError):
        volume_constant(*args)


def test_surface_constant_modes():
    s = make_sphere(1.0, 12)
    polar = surface_constant(1.0, s, "polar")
    assert polar.value == pytest.approx(8 * np.pi, rel=1e-12)
    punct = surface_constant(1.0, s)
    assert punct.refined_value is not None
    assert abs(punct.value / (8 * np.pi) - 1) < 0.03
    with pytest.raises(DomainError):
        surface_constant(2.0, s)
    with pytest.raises(DomainError):
        surface_constant(1.0, s, "exact")


def test_surface_constant_on_mesh(tmp_path):
    v, f = icosphere(2)
    write_off(tmp_path / "m.off", v, f)
    mesh = load_mesh(tmp_path / "m.off")
    sc = surface_constant(1.0, mesh)
    assert sc.stable is None
    assert 0.8 < sc.value / (8 * np.pi) < 1.2
    with pytest.raises(DomainError):
        surface_constant(1.0, mesh, "polar")


def test_certificate_kinds():
    s = make_sphere(1.0, 8)
    vol = certify_operator_norm("volume_conv", 2.0, kappa2=1.0, R=1.0, s_exp=2.0)
    assert vol.bound == pytest.approx(2.0 * volume_constant(2.0, 1.0, 1.0))
    assert vol.holds is None
    sts = certify_operator_norm(CertificateKind.SURF_TO_SURF, 1.5, surface=s, surface_mode="polar")
    assert sts.bound == pytest.approx(1.5 * 8 * np.pi)
    stv = certify_operator_norm("surf_to_vol", 1.0, kappa2=1.0, R=1.0, surface=s, surface_mode="polar")
    e = stv.as_dict()
    assert stv.K == pytest.approx(np.sqrt(e["K_surface"] * e["kappa3"] * e["K_volume"]))
    with pytest.raises(DomainError):
        certify_operator_norm("surf_to_vol", 1.0, kappa2=1.0, R=1.0)
    with pytest.raises(DomainError):
        certify_operator_norm("volume_conv", -1.0, kappa2=1.0, R=1.0, s_exp=2.0)
    with pytest.raises(ValueError):
        certify_operator_norm("vol_to_surf", 1.0)


def test_certificate_holds_flag():
    assert NormCertificate("x", 1.0, 2.0, 2.0, measured_norm=1.9).holds
    assert not NormCertificate("x", 1.0, 2.0, 2.0, measured_norm=2.1).holds


def test_bounded_part_fit_dominates_samples():
    p = PhysParams(1.0, 1.0)
    kappa = fit_bounded_part_kappa(p)
    assert kappa > 0
    assert fit_bounded_part_kappa(p, radii=[0.1, 1.0, 10.0]) <= kappa * (1 + 1e-12)


def test_M0_certificate_holds():
    cert = certify_M0(PhysParams(1.0, 1.0), make_sphere(1.0, 8))
    assert cert.holds
    assert cert.extra["cauchy_norm"] > 0


def test_kernel_fit_and_derived_certificates():
    p = PhysParams(1.0, 1.0)
    kappa = fit_kernel_kappa(p, 0.0, 1.0, 1.0)
    assert kappa > 0
    with pytest.raises(DomainError):
        fit_kernel_kappa(p, 0.0, 1.0, 1.5)
    g = certify_gamma0(p, make_sphere(1.0, 8))
    assert g.rule == "surf_to_vol" and g.holds
    r = certify_R0(p)
    assert r.measured_norm == pytest.approx(1.0) and r.holds
