"""Partial-wave reduction of the spherical shell problem.

For a sphere of radius a the four-spinor solutions of (free Dirac - lambda) u = 0
in channel kappa take the form

    u = ( g(r) Omega_kappa , i f(r) Omega_{-kappa} ),

with g, f built from modified spherical Bessel functions of the decay rate
q = sqrt((mc)^2 - lambda^2/c^2). Inside the regular solution uses i_l,
outside the decaying one uses k_l. Imposing

    (eta/2)(u_+ + u_-) = -i c alpha.nu (u_+ - u_-)   at r = a

(u_+ interior limit, nu outward) gives a 2 x 2 homogeneous system whose
determinant, after eliminating amplitudes, is

    D = (eta^2/4 - c^2) W + eta c S,
    W = g_i f_e - g_e f_i,   S = g_i g_e + f_i f_e.

The derivation is written out in docs/radial_reduction.md.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import spherical_in, spherical_kn

from .errors import DomainError, ExcludedCouplingError
from .kernels import PhysParams


@dataclass(frozen=True)
class RadialChannel:
    """Spin-orbit channel kappa on a sphere of radius a."""

    kappa: int
    radius: float
    p: PhysParams

    def __post_init__(self):
        if int(self.kappa) != self.kappa or self.kappa == 0:
            raise DomainError("kappa must be a non-zero integer")
        if not self.radius > 0:
            raise DomainError("radius must be positive")

    @property
    def l(self) -> int:
        return self.kappa if self.kappa > 0 else -self.kappa - 1

    @property
    def l_partner(self) -> int:
        return self.l - 1 if self.kappa > 0 else self.l + 1

    @property
    def degeneracy(self) -> int:
        return 2 * abs(self.kappa)


def channel_functions(ch: RadialChannel, lam: float):
    """Boundary values (g_i, f_i, g_e, f_e) of the interior and exterior solutions."""
    p = ch.p
    lam = float(lam)
    if abs(lam) >= p.rest_energy:
        raise DomainError(f"lambda={lam} is not inside the open gap")
    q = np.sqrt((p.m * p.c) ** 2 - lam**2 / p.c**2)
    z = q * ch.radius
    pre = p.c * q / (lam + p.rest_energy)
    gi = spherical_in(ch.l, z)
    fi = pre * spherical_in(ch.l_partner, z)
    ge = spherical_kn(ch.l, z)
    fe = -pre * spherical_kn(ch.l_partner, z)
    return gi, fi, ge, fe


def _w_s(ch: RadialChannel, lam: float):
    gi, fi, ge, fe = channel_functions(ch, lam)
    return gi * fe - ge * fi, gi * ge + fi * fe


def channel_determinant(ch: RadialChannel, lam: float) -> float:
    """Matching determinant; its zeros in lambda are the channel's bound states."""
    w, s = _w_s(ch, lam)
    eta, c = ch.p.eta, ch.p.c
    return float((eta**2 / 4.0 - c**2) * w + eta * c * s)


def channel_weyl_eigenvalues(ch: RadialChannel, lam: float) -> tuple[float, float]:
    """The two eigenvalues of M(lambda) carried by channel kappa.

    They are -1/eta for the two couplings eta at which the determinant
    vanishes; their product is -1/(4c^2).
    """
    w, s = _w_s(ch, lam)
    c = ch.p.c
    root = np.hypot(s, w)
    # eta = 2c(-s +- root)/w, so -1/eta = -(s +- root)/(2cw); the smaller
    # root is recovered from the product to avoid cancellation
    mu1 = -(s + root) / (2.0 * c * w) if w != 0 else -np.inf
    mu2 = -(s - root) / (2.0 * c * w) if w != 0 else -1.0 / (4.0 * c * c * mu1)
    if w != 0 and abs(s - root) < 1e-8 * root:
        mu2 = -1.0 / (4.0 * c * c * mu1)
    lo, hi = sorted((float(mu1), float(mu2)))
    return lo, hi


@dataclass(frozen=True)
class RadialRoot:
    kappa: int
    lambda_star: float
    degeneracy: int


def sphere_bound_states_radial(
    a: float, p: PhysParams, kappa_max: int, grid: int = 2001, xtol: float = 1e-14
) -> list[RadialRoot]:
    """All channel roots for |kappa| <= kappa_max, sorted by energy.

    Each channel determinant is scanned on ``grid`` points of the open gap
    and sign changes are refined by a bracketing Brent iteration.
    """
    if kappa_max < 1:
        raise DomainError("kappa_max must be >= 1")
    if p.is_excluded_coupling():
        raise ExcludedCouplingError("excluded coupling eta=+-2c")
    mc2 = p.rest_energy
    edge = 1e-9 * mc2
    lams = np.linspace(-mc2 + edge, mc2 - edge, int(grid))
    out = []
    for kap in range(1, kappa_max + 1):
        for kappa in (-kap, kap):
            ch = RadialChannel(kappa, a, p)
            d = np.array([channel_determinant(ch, x) for x in lams])
            for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
                r = brentq(lambda x: channel_determinant(ch, x), lams[i], lams[i + 1], xtol=xtol, rtol=1e-15)
                out.append(RadialRoot(kappa, float(r), ch.degeneracy))
            for i in np.nonzero(d == 0.0)[0]:
                out.append(RadialRoot(kappa, float(lams[i]), ch.degeneracy))
    return sorted(out, key=lambda r: (r.lambda_star, r.kappa))
