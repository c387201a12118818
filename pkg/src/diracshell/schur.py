"""Schur-test norm certificates for the integral operators of the problem.

A kernel bounded by kappa_1 tau(x - y) gives an operator of norm at most
kappa_1 K, where K bounds the row and column integrals of tau. Three
geometries are covered:

* ``volume_conv``: R^3 to R^3, tau(x) = |x|^-s on |x| <= R and
  exp(-kappa_2 |x|) beyond;
* ``surf_to_vol``: surface densities to volume fields with the mixed
  exponents 2 - s (surface side) and 2 + s (volume side);
* ``surf_to_surf``: surface to surface with tau(x) = 1 + 1/|x|.

The strongly singular principal-value part of the boundary operator is not
certified; its discrete norm is measured separately.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels as kn
from .errors import DomainError
from .harmonics import QuadratureOrders, SphereGalerkin
from .kernels import PhysParams
from .surface import Surface


class CertificateKind(str, enum.Enum):
    VOLUME_CONV = "volume_conv"
    SURF_TO_VOL = "surf_to_vol"
    SURF_TO_SURF = "surf_to_surf"


def volume_constant(s_exp: float, R: float, kappa2: float) -> float:
    """Closed form of int_{R^3} tau(y) dy for tau = |y|^-s inside B(0, R), exp(-kappa2 |y|) outside.

    Raises
    ------
    DomainError
        If the exponent is not in (0, 3) or R, kappa2 are not positive.
    """
    if not 0.0 < s_exp < 3.0:
        raise DomainError(f"exponent s={s_exp} makes the volume integral diverge (need 0 < s < 3)")
    if not (R > 0 and kappa2 > 0):
        raise DomainError("R and kappa2 must be positive")
    ball = 4.0 * np.pi * R ** (3.0 - s_exp) / (3.0 - s_exp)
    tail = 4.0 * np.pi * np.exp(-kappa2 * R) * (R**2 / kappa2 + 2.0 * R / kappa2**2 + 2.0 / kappa2**3)
    return float(ball + tail)


@dataclass(frozen=True)
class SurfaceConstant:
    """Value of sup_x int_S (1 + |x - y|^-s) dsigma(y) and how it was obtained.

    ``stable`` compares the value with the one on a surface with doubled
    resolution (spheres only; None otherwise) at a 3 percent threshold.
    """

    value: float
    s_exp: float
    mode: str
    stable: bool | None = None
    refined_value: float | None = None


def _punctured(s_exp: float, surf: Surface) -> float:
    best = 0.0
    nodes, w = surf.nodes, surf.weights
    for i in range(surf.n_nodes):
        r = np.linalg.norm(nodes - nodes[i], axis=1)
        r[i] = np.inf
        best = max(best, float(np.sum(w * (1.0 + r**-s_exp)) - w[i]))
    return best


def _sphere_polar(s_exp: float, surf: Surface) -> float:
    # the integral does not depend on the point; polar coordinates about it
    a = surf.descriptor.radius
    n = max(32, 4 * surf.descriptor.n_theta)
    g, gw = np.polynomial.legendre.leggauss(n)
    th = 0.5 * np.pi * (g + 1.0)
    wth = 0.5 * np.pi * gw
    dist = 2.0 * a * np.sin(0.5 * th)
    # dsigma = 2 pi a^2 sin(th) dth and sin(th) / dist^s ~ th^(1 - s) is integrable
    return float(np.sum(wth * 2.0 * np.pi * a**2 * np.sin(th) * (1.0 + dist**-s_exp)))


def surface_constant(s_exp: float, surf: Surface, mode: str = "punctured", check_refinement: bool = True) -> SurfaceConstant:
    """Surface constant of the Schur test.

    Parameters
    ----------
    s_exp : float
        Exponent in (0, 2).
    surf : Surface
    mode : {"punctured", "polar"}
        ``punctured`` takes the largest node sum with the self term
        dropped; ``polar`` (spheres only) integrates in polar coordinates
        about a point, which is exact up to quadrature round-off.
    check_refinement : bool
        For spheres in punctured mode, also evaluate at doubled n_theta.
    """
    if not 0.0 < s_exp < 2.0:
        raise DomainError(f"exponent s={s_exp} is not integrable on a surface (need 0 < s < 2)")
    if mode == "polar":
        if not surf.is_sphere:
            raise DomainError("polar mode needs a sphere")
        return SurfaceConstant(_sphere_polar(s_exp, surf), s_exp, mode)
    if mode != "punctured":
        raise DomainError(f"unknown surface constant mode {mode!r}")
    value = _punctured(s_exp, surf)
    if check_refinement and surf.is_sphere:
        from .surface import make_sphere

        d = surf.descriptor
        fine = _punctured(s_exp, make_sphere(d.radius, 2 * d.n_theta))
        return SurfaceConstant(value, s_exp, mode, bool(abs(fine - value) <= 0.03 * fine), fine)
    return SurfaceConstant(value, s_exp, mode)


@dataclass(frozen=True)
class NormCertificate:
    """Upper bound kappa_1 * K for an operator norm.

    ``measured_norm`` is filled in when the certificate is checked against
    a discretisation; ``extra`` holds auxiliary constants.
    """

    rule: str
    kappa1: float
    K: float
    bound: float
    measured_norm: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kappa1 < 0 or self.K < 0:
            raise DomainError("certificate constants must be non-negative")

    @property
    def holds(self) -> bool | None:
        if self.measured_norm is None:
            return None
        return self.measured_norm <= self.bound

    def as_dict(self) -> dict:
        return {
            "rule": self.rule,
            "kappa1": self.kappa1,
            "K": self.K,
            "bound": self.bound,
            "measured_norm": self.measured_norm,
            **{k: v for k, v in self.extra.items()},
        }


def _kappa3(s_exp: float, R: float, kappa2: float) -> float:
    # sup_{r >= R} r^(2 - s) exp(-kappa2 r); the maximiser is r = (2 - s) / kappa2
    r = max(R, (2.0 - s_exp) / kappa2)
    return float(r ** (2.0 - s_exp) * np.exp(-kappa2 * r))


def certify_operator_norm(
    kind,
    kappa1: float,
    kappa2: float | None = None,
    R: float | None = None,
    s_exp: float | None = None,
    surface: Surface | None = None,
    surface_mode: str = "punctured",
) -> NormCertificate:
    """Schur-test bound for one of the three operator geometries.

    Parameters
    ----------
    kind : CertificateKind or str
    kappa1 : float
        Kernel prefactor.
    kappa2, R : float
        Decay rate and radius of the near zone (volume kinds).
    s_exp : float
        Singularity exponent for ``volume_conv``; interpolation exponent in
        (0, 1) for ``surf_to_vol`` (default 1/2).
    surface : Surface
        Needed by the surface kinds.
    """
    kind = CertificateKind(kind)
    if kappa1 < 0:
        raise DomainError("kappa1 must be non-negative")
    if kind is CertificateKind.VOLUME_CONV:
        if None in (kappa2, R, s_exp):
            raise DomainError("volume_conv needs kappa2, R and s")
        K = volume_constant(s_exp, R, kappa2)
        return NormCertificate(kind.value, kappa1, K, kappa1 * K, extra={"s": s_exp, "R": R, "kappa2": kappa2})
    if surface is None:
        raise DomainError(f"{kind.value} needs a surface")
    if kind is CertificateKind.SURF_TO_SURF:
        if s_exp not in (None, 1.0):
            raise DomainError("surf_to_surf uses the bound kappa (1 + 1/|x|)")
        K = surface_constant(1.0, surface, surface_mode, check_refinement=False).value
        return NormCertificate(kind.value, kappa1, K, kappa1 * K)
    if None in (kappa2, R):
        raise DomainError("surf_to_vol needs kappa2 and R")
    s = 0.5 if s_exp is None else float(s_exp)
    if not 0.0 < s < 1.0:
        raise DomainError("interpolation exponent must lie in (0, 1)")
    # |t| <= kappa1 tau with tau = |x|^-2 near, exp(-kappa2 |x|) far; split
    # tau^2 = |x|^-(2-s) * b^2 and bound b^2 by max(1, kappa3) tau_{2+s}
    k_surf = surface_constant(2.0 - s, surface, surface_mode, check_refinement=False).value
    k3 = max(1.0, _kappa3(s, R, kappa2))
    k_vol = volume_constant(2.0 + s, R, kappa2)
    K = float(np.sqrt(k_surf * k3 * k_vol))
    return NormCertificate(
        kind.value, kappa1, K, kappa1 * K,
        extra={"s": s, "R": R, "kappa2": kappa2, "K_surface": k_surf, "K_volume": k_vol, "kappa3": k3},
    )


def fit_bounded_part_kappa(p: PhysParams, radii=None) -> float:
    """Fitted kappa with ||G_0(x) - i alpha.x / (4 pi c |x|^3)|| <= kappa (1 + 1/|x|).

    The strongly singular Cauchy part is removed; the spectral norm of the
    remainder is sampled on a logarithmic radius grid (by rotation
    invariance the direction does not matter).
    """
    radii = np.logspace(-4, 2, 400) if radii is None else np.asarray(radii, dtype=float)
    x = np.stack([radii, 0.0 * radii, 0.0 * radii], axis=1)
    g = kn.green_kernel(p, 0.0, x)
    cauchy = 1j * kn.alpha_dot(x) / (4.0 * np.pi * p.c * radii[:, None, None] ** 3)
    norms = np.linalg.norm(g - cauchy, ord=2, axis=(1, 2))
    return float(np.max(norms / (1.0 + 1.0 / radii)))


def fit_kernel_kappa(p: PhysParams, lam, R: float, kappa2: float, s_exp: float = 2.0, radii=None) -> float:
    """Smallest kappa with ||G_lambda(x)|| <= kappa tau(x) on a radius grid.

    tau(x) = |x|^-s for |x| <= R and exp(-kappa2 |x|) beyond, as in the
    Schur constants. kappa2 must not exceed the decay rate Im k(lambda).
    """
    if kappa2 > kn.wavenumber(p, lam).imag * (1.0 + 1e-12):
        raise DomainError("kappa2 exceeds the decay rate of the kernel")
    radii = np.logspace(-4, 2.5, 600) if radii is None else np.asarray(radii, dtype=float)
    x = np.stack([radii, 0.0 * radii, 0.0 * radii], axis=1)
    norms = np.linalg.norm(kn.green_kernel(p, lam, x), ord=2, axis=(1, 2))
    tau = np.where(radii <= R, radii ** (-s_exp), np.exp(-kappa2 * radii))
    return float(np.max(norms / tau))


def certify_gamma0(p: PhysParams, surf: Surface, R: float = 1.0, s_exp: float = 0.5) -> NormCertificate:
    """Check ||gamma_N(0)|| against its surface-to-volume certificate.

    The discrete norm is measured through ||gamma(0)||^2 = ||dM/dlambda(0)||,
    which holds because dM/dlambda = gamma(lambda)^* gamma(lambda) at real
    lambda.
    """
    from .operators import assemble_dM

    kappa2 = float(p.m * p.c)
    kappa = fit_kernel_kappa(p, 0.0, R, kappa2, 2.0)
    cert = certify_operator_norm(CertificateKind.SURF_TO_VOL, kappa, kappa2, R, s_exp, surf,
                                 "polar" if surf.is_sphere else "punctured")
    measured = float(np.sqrt(assemble_dM(p, 0.0, surf).norm2()))
    return NormCertificate(cert.rule, cert.kappa1, cert.K, cert.bound, measured, cert.extra)


def certify_R0(p: PhysParams, R: float = 1.0) -> NormCertificate:
    """Volume certificate for the free resolvent at lambda = 0.

    The reference norm is the exact value 1/(mc^2) from the Fourier
    representation, since the volume operator is not discretised densely.
    """
    kappa2 = float(p.m * p.c)
    kappa = fit_kernel_kappa(p, 0.0, R, kappa2, 2.0)
    cert = certify_operator_norm(CertificateKind.VOLUME_CONV, kappa, kappa2, R, 2.0)
    return NormCertificate(cert.rule, cert.kappa1, cert.K, cert.bound, 1.0 / p.rest_energy, cert.extra)


def certify_M0(p: PhysParams, surf: Surface) -> NormCertificate:
    """Check ||M_N(0)|| <= kappa K + ||C_N|| on a sphere.

    K is the polar surface constant for s = 1, kappa comes from
    :func:`fit_bounded_part_kappa` and C_N is the discretised Cauchy part
    with kernel i alpha.x / (4 pi c |x|^3), whose norm is measured.
    """
    from .operators import assemble_M

    kappa = fit_bounded_part_kappa(p)
    K = surface_constant(1.0, surf, "polar" if surf.is_sphere else "punctured", check_refinement=False).value
    engine = SphereGalerkin(surf, QuadratureOrders.default(surf.descriptor.n_theta - 1)) if surf.is_sphere else None
    m0 = assemble_M(p, 0.0, surf)

    def cauchy(x):
        r = np.linalg.norm(x, axis=-1)
        return 1j * kn.alpha_dot(x) / (4.0 * np.pi * p.c * r[..., None, None] ** 3)

    if engine is not None:
        c_norm = max(float(np.linalg.norm(h, 2)) for h in engine.matrices(cauchy).values())
    else:
        from .operators import discretization_for

        c_norm = float(np.linalg.norm(discretization_for(surf).matrices(cauchy)[0], 2))
    measured = m0.norm2()
    return NormCertificate(
        CertificateKind.SURF_TO_SURF.value,
        kappa,
        K,
        kappa * K + c_norm,
        measured,
        extra={"cauchy_norm": c_norm, "bounded_part_bound": kappa * K},
    )
