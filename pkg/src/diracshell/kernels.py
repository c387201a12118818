"""Dirac algebra and the closed-form integral kernels of the free resolvent.

All kernel functions are vectorised: a displacement array of shape
``(..., 3)`` yields kernel values of shape ``(..., 4, 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchPointError, DomainError, SingularityError

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_Z2 = np.zeros((2, 2), dtype=complex)
_I2 = np.eye(2, dtype=complex)

ALPHA = np.array([np.block([[_Z2, s], [s, _Z2]]) for s in SIGMA])
BETA = np.block([[_I2, _Z2], [_Z2, -_I2]])
P_PLUS = np.block([[_I2, _Z2], [_Z2, _Z2]])
I4 = np.eye(4, dtype=complex)


@dataclass(frozen=True)
class DiracAlgebra:
    """The constant matrices alpha_1..3, beta and the upper-component projector."""

    alpha: np.ndarray = ALPHA
    beta: np.ndarray = BETA
    p_plus: np.ndarray = P_PLUS

    def generators(self) -> list[np.ndarray]:
        """Return ``[beta, alpha_1, alpha_2, alpha_3]``."""
        return [self.beta, *self.alpha]

    def anticommutator_defects(self) -> np.ndarray:
        """Max-abs defect of ``a_j a_k + a_k a_j - 2 delta_jk I`` for all 16 pairs."""
        g = self.generators()
        out = np.zeros((4, 4))
        for j in range(4):
            for k in range(4):
                d = g[j] @ g[k] + g[k] @ g[j] - 2.0 * (j == k) * I4
                out[j, k] = np.max(np.abs(d))
        return out


@dataclass(frozen=True)
class PhysParams:
    """Mass, speed of light and shell coupling strength.

    Attributes
    ----------
    m : float
        Particle mass, strictly positive.
    c : float
        Speed of light, strictly positive.
    eta : float
        Real coupling strength of the shell interaction.
    """

    m: float = 1.0
    c: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if not (self.m > 0 and self.c > 0):
            raise DomainError(f"need m > 0 and c > 0, got m={self.m}, c={self.c}")
        if not np.isfinite(self.eta):
            raise DomainError("eta must be finite")

    @property
    def rest_energy(self) -> float:
        return self.m * self.c**2

    def is_excluded_coupling(self, rtol: float = 1e-12) -> bool:
        return abs(abs(self.eta) - 2.0 * self.c) <= rtol * 2.0 * self.c

    def with_eta(self, eta: float) -> "PhysParams":
        return PhysParams(self.m, self.c, float(eta))

    def with_c(self, c: float) -> "PhysParams":
        return PhysParams(self.m, float(c), self.eta)


def branch_sqrt(z):
    """Square root with non-negative imaginary part (non-negative on [0, inf))."""
    s = np.sqrt(np.asarray(z, dtype=complex))
    return np.where(s.imag < 0, -s, s)


def endpoint_sign(p: PhysParams, lam, rtol: float = 1e-13) -> int:
    """Return +1 or -1 if ``lam`` is the gap endpoint +-mc^2, else 0."""
    lam = complex(lam)
    mc2 = p.rest_energy
    if abs(lam.imag) <= rtol * mc2:
        if abs(lam.real - mc2) <= rtol * mc2:
            return 1
        if abs(lam.real + mc2) <= rtol * mc2:
            return -1
    return 0


def check_resolvent_point(p: PhysParams, lam, allow_endpoints: bool = True) -> complex:
    """Validate that ``lam`` lies in the resolvent set of the free operator."""
    lam = complex(lam)
    if not np.isfinite(lam):
        raise DomainError("spectral parameter must be finite")
    if lam.imag == 0.0 and abs(lam.real) >= p.rest_energy:
        if endpoint_sign(p, lam) != 0:
            if allow_endpoints:
                return lam
            raise BranchPointError(f"lambda={lam.real} is a gap endpoint")
        raise DomainError(
            f"lambda={lam.real} lies in the essential spectrum |lambda| > mc^2={p.rest_energy}"
        )
    return lam


def wavenumber(p: PhysParams, lam) -> complex:
    """k(lambda) = sqrt(lambda^2/c^2 - (mc)^2) on the branch Im k >= 0."""
    lam = complex(lam)
    return complex(branch_sqrt(lam**2 / p.c**2 - (p.m * p.c) ** 2))


def _radius(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("displacements must have trailing dimension 3")
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0.0):
        raise SingularityError("kernel evaluated at zero displacement")
    return x, r


def alpha_dot(x) -> np.ndarray:
    """alpha . x for displacements of shape (..., 3)."""
    return np.einsum("...j,jab->...ab", np.asarray(x, dtype=float), ALPHA)


def _assemble(scalar, const, cauchy, x):
    """Combine ``scalar * (const + cauchy * alpha.x)`` into (..., 4, 4) values."""
    scalar = np.asarray(scalar)
    cauchy = np.asarray(cauchy)
    out = alpha_dot(x) * cauchy[..., None, None]
    out = out + const
    return out * scalar[..., None, None]


def _green(k, diag, c, x):
    # diag is the 4x4 constant part, lambda/c^2 + m beta in the unshifted case
    x, r = _radius(x)
    e = np.exp(1j * k * r) / (4.0 * np.pi * r)
    cauchy = (1.0 - 1j * k * r) * 1j / (c * r**2)
    return _assemble(e, diag, cauchy, x)


def green_kernel(p: PhysParams, lam, x) -> np.ndarray:
    """Free Dirac resolvent kernel G_lambda(x).

    Parameters
    ----------
    p : PhysParams
    lam : complex
        Spectral parameter in the resolvent set or one of the gap endpoints.
    x : array_like, shape (..., 3)
        Non-zero displacements.

    Returns
    -------
    numpy.ndarray, shape (..., 4, 4)
    """
    lam = check_resolvent_point(p, lam)
    sgn = endpoint_sign(p, lam)
    if sgn:
        x, r = _radius(x)
        diag = p.m * (BETA + sgn * I4)
        return _assemble(1.0 / (4.0 * np.pi * r), diag, 1j / (p.c * r**2), x)
    k = wavenumber(p, lam)
    diag = lam / p.c**2 * I4 + p.m * BETA
    return _green(k, diag, p.c, x)


def green_kernel_dlambda(p: PhysParams, lam, x) -> np.ndarray:
    """Analytic derivative of G_lambda(x) with respect to lambda.

    With k' = lambda / (c^2 k) the derivative reads
    e^{ikr}/(4 pi r) [I/c^2 + i k' r (lambda/c^2 + m beta) + i lambda alpha.x / c^3].
    It is only weakly singular at x = 0.
    """
    lam = check_resolvent_point(p, lam, allow_endpoints=False)
    k = wavenumber(p, lam)
    x, r = _radius(x)
    c = p.c
    dk = lam / (c**2 * k)
    e = np.exp(1j * k * r) / (4.0 * np.pi * r)
    diag = lam / c**2 * I4 + p.m * BETA
    out = np.asarray(1j * dk * r)[..., None, None] * diag + I4 / c**2
    out = out + alpha_dot(x) * (1j * lam / c**3)
    return out * np.asarray(e)[..., None, None]


def schrodinger_wavenumber(m: float, lam) -> complex:
    lam = complex(lam)
    if lam.imag == 0.0 and lam.real >= 0.0:
        raise DomainError(f"lambda={lam.real} lies in [0, inf)")
    return complex(branch_sqrt(2.0 * m * lam))


def schrodinger_kernel(m: float, lam, x) -> np.ndarray:
    """Scalar kernel K_lambda(x) = 2m e^{i sqrt(2 m lambda)|x|} / (4 pi |x|)."""
    k = schrodinger_wavenumber(m, lam)
    _, r = _radius(x)
    return 2.0 * m * np.exp(1j * k * r) / (4.0 * np.pi * r)


def schrodinger_kernel_lifted(m: float, lam, x) -> np.ndarray:
    """K_lambda(x) P_+ as (..., 4, 4) values."""
    return np.asarray(schrodinger_kernel(m, lam, x))[..., None, None] * P_PLUS


def shifted_green_kernel(p: PhysParams, lam, x) -> np.ndarray:
    """G_{lambda + mc^2}(x), evaluated without cancellation for large c.

    Uses k^2 = lambda^2/c^2 + 2 m lambda and the constant part
    lambda/c^2 + 2 m P_+, which are algebraically identical to the
    unshifted expressions.
    """
    lam = complex(lam)
    check_resolvent_point(p, lam + p.rest_energy)
    if lam == 0:
        return green_kernel(p, p.rest_energy, x)
    k = complex(branch_sqrt(lam**2 / p.c**2 + 2.0 * p.m * lam))
    diag = lam / p.c**2 * I4 + 2.0 * p.m * P_PLUS
    return _green(k, diag, p.c, x)


def nonrel_kernel_difference(p: PhysParams, lam, x) -> np.ndarray:
    """G_{lambda+mc^2}(x) - K_lambda(x) P_+ for non-real ``lam``."""
    lam = complex(lam)
    if lam.imag == 0.0:
        raise DomainError("nonrelativistic comparison needs non-real lambda")
    return shifted_green_kernel(p, lam, x) - schrodinger_kernel_lifted(p.m, lam, x)


def sigma_dot_apply(x, u):
    """(sigma . x) u for 2-spinors u of shape (..., 2)."""
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    u0, u1 = u[..., 0], u[..., 1]
    return np.stack([x3 * u0 + (x1 - 1j * x2) * u1, (x1 + 1j * x2) * u0 - x3 * u1], axis=-1)


@dataclass(frozen=True)
class KernelForm:
    """Matrix-free form of a kernel  s(r) (D + q(r) alpha.x),  D constant diagonal.

    ``k`` is the wavenumber in s(r) = pref * e^{ikr} / (4 pi r); the Cauchy
    factor is q(r) = (1 - ikr) i / (c r^2), or zero when ``c`` is None.
    Applying the kernel to vectors costs a few flops per point instead of a
    4 x 4 product.
    """

    k: complex
    diag: np.ndarray
    c: float | None
    pref: float = 1.0

    def _parts(self, x):
        x, r = _radius(x)
        s = self.pref * np.exp(1j * self.k * r) / (4.0 * np.pi * r)
        q = None if self.c is None else (1.0 - 1j * self.k * r) * 1j / (self.c * r**2)
        return x, s, q

    def __call__(self, x) -> np.ndarray:
        x, s, q = self._parts(x)
        out = np.zeros(np.shape(s) + (4, 4), dtype=complex) + np.diag(self.diag)
        if q is not None:
            out = out + alpha_dot(x) * q[..., None, None]
        return out * s[..., None, None]

    def apply(self, x, f) -> np.ndarray:
        """K(x) f for displacements (..., 3) and vectors (..., 4)."""
        x, s, q = self._parts(x)
        out = self.diag * f
        if q is not None:
            ax = np.concatenate([sigma_dot_apply(x, f[..., 2:]), sigma_dot_apply(x, f[..., :2])], axis=-1)
            out = out + q[..., None] * ax
        return s[..., None] * out


def green_form(p: PhysParams, lam) -> KernelForm:
    """:class:`KernelForm` of G_lambda (lambda off the real gap endpoints)."""
    lam = check_resolvent_point(p, lam, allow_endpoints=False)
    return KernelForm(wavenumber(p, lam), np.diag(lam / p.c**2 * I4 + p.m * BETA), p.c)


def shifted_green_form(p: PhysParams, lam) -> KernelForm:
    """:class:`KernelForm` of G_{lambda + mc^2} without cancellation."""
    lam = complex(lam)
    check_resolvent_point(p, lam + p.rest_energy, allow_endpoints=False)
    k = complex(branch_sqrt(lam**2 / p.c**2 + 2.0 * p.m * lam))
    return KernelForm(k, np.diag(lam / p.c**2 * I4 + 2.0 * p.m * P_PLUS), p.c)


def schrodinger_form(m: float, lam) -> KernelForm:
    """:class:`KernelForm` of K_lambda P_+."""
    return KernelForm(schrodinger_wavenumber(m, lam), np.diag(P_PLUS).astype(complex), None, 2.0 * m)
