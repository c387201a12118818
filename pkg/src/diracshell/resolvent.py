"""Perturbed resolvents of the delta-shell Dirac and Schrodinger operators.

Both follow the same Krein-type pipeline:

    R(lambda) f = R_0(lambda) f - gamma(lambda) psi,
    (I + eta M(lambda)) psi = eta gamma(conj(lambda))^* f,

with the free resolvent evaluated by volume quadrature, the adjoint layer
potential on the surface, a blockwise linear solve, and the layer potential
at the targets. :class:`ResolventField` packages the result as a callable
volume field, so that resolvents can be composed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as kn
from .errors import DomainError, ExcludedCouplingError, IllConditionedError
from .kernels import PhysParams
from .operators import (
    assemble_M,
    assemble_M_schrodinger,
    assemble_M_shifted,
    discretization_for,
    gamma_star_coefficients,
    layer_values,
    _adjoint_form,
    _check_targets,
)
from .surface import Surface
from .volume import VolumeGrid, convolve

COND_LIMIT = 1e12


def _non_real(lam) -> complex:
    lam = complex(lam)
    if lam.imag == 0.0:
        raise DomainError("resolvent evaluation needs non-real lambda")
    return lam


def _interface(s: Surface | None):
    return s.descriptor.radius if (s is not None and s.is_sphere) else None


def free_resolvent_apply(p: PhysParams, lam, f, targets, vol_grid: VolumeGrid, form=None) -> np.ndarray:
    """(A_0 - lambda)^-1 f at the targets by volume quadrature of the kernel convolution.

    Parameters
    ----------
    p : PhysParams
    lam : complex
        Point of the resolvent set.
    f : callable
        Maps points (M, 3) to values (M, 4). Fields that jump across a
        sphere may expose it as an ``interface`` attribute; rays of the
        polar rule are then split there.
    targets : array_like, shape (P, 3)
    vol_grid : VolumeGrid
    form : KernelForm, optional
        Kernel override, e.g. the shifted kernel.

    Returns
    -------
    numpy.ndarray, shape (P, 4)
    """
    lam = kn.check_resolvent_point(p, lam, allow_endpoints=False)
    form = form or kn.green_form(p, lam)
    return convolve(form, f, targets, vol_grid, _interface(getattr(f, "interface", None)))


@dataclass(frozen=True)
class ResolventRequest:
    """Inputs of :func:`dirac_resolvent_apply`.

    ``surface`` carries the shell; the other fields are as in
    :func:`free_resolvent_apply`.
    """

    p: PhysParams
    lam: complex
    f: object
    targets: np.ndarray
    vol_grid: VolumeGrid
    surface: Surface
    method: str | None = None

    def __post_init__(self):
        _non_real(self.lam)
        object.__setattr__(self, "targets", np.atleast_2d(np.asarray(self.targets, dtype=float)))


@dataclass
class ResolventField:
    """The perturbed resolvent applied to a source, as a callable volume field.

    Calling the field on points (M, 3) returns the values (M, 4). Points
    on the surface itself are not allowed.
    """

    free_form: kn.KernelForm
    source: object
    vol_grid: VolumeGrid
    interface: Surface
    discretization: object
    psi: dict
    condition: float
    projector: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = convolve(self.free_form, self.source, points, self.vol_grid, _interface(getattr(self.source, "interface", None)))
        out = out - layer_values(self.discretization, self.free_form, self.psi, points)
        if self.projector is not None:
            out = out * self.projector
        return out

    def correction(self, points) -> np.ndarray:
        """gamma(lambda) psi alone."""
        return layer_values(self.discretization, self.free_form, self.psi, np.atleast_2d(points))


def _solve(m_op, eta: float, rhs: dict) -> tuple[dict, float]:
    psi, cond = {}, 1.0
    for k, h in m_op.blocks.items():
        a = np.eye(len(h)) + eta * h
        ck = np.linalg.cond(a)
        cond = max(cond, ck)
        if not np.isfinite(ck) or ck > COND_LIMIT:
            raise IllConditionedError(f"I + eta M has condition number {ck:.3e} in block {k}")
        psi[k] = np.linalg.solve(a, eta * rhs[k])
    return psi, cond


def _krein_field(form, m_op, eta, f, vol_grid, s, method, projector=None) -> ResolventField:
    disc = discretization_for(s, method)
    if eta == 0.0:
        psi = {k: np.zeros(h.shape[0], dtype=complex) for k, h in m_op.blocks.items()}
        cond = 1.0
    else:
        # gamma(conj(lambda))^* f has the kernel of gamma(lambda) itself
        adj = _adjoint_form(form)
        rhs = gamma_star_coefficients(disc, adj, adj, f, vol_grid, _interface(getattr(f, "interface", None)))
        psi, cond = _solve(m_op, eta, rhs)
    return ResolventField(form, f, vol_grid, s, disc, psi, cond, projector)


def dirac_resolvent_field(
    p: PhysParams, lam, s: Surface, f, vol_grid: VolumeGrid, method: str | None = None, shifted: bool = False
) -> ResolventField:
    """(A_eta - lambda)^-1 f as a callable field.

    With ``shifted`` the spectral parameter is lambda + mc^2 and all
    kernels use the cancellation-free shifted form.
    """
    lam = _non_real(lam)
    if p.is_excluded_coupling():
        raise ExcludedCouplingError("excluded coupling eta=+-2c")
    if shifted:
        form = kn.shifted_green_form(p, lam)
        m_op = assemble_M_shifted(p, lam, s, method=method) if p.eta != 0.0 else _zero_op(s, method)
    else:
        form = kn.green_form(p, lam)
        m_op = assemble_M(p, lam, s, method=method) if p.eta != 0.0 else _zero_op(s, method)
    return _krein_field(form, m_op, p.eta, f, vol_grid, s, method)


class _ZeroOp:
    def __init__(self, disc):
        self.blocks = {k: np.zeros((n, n), dtype=complex) for k, n in disc.block_sizes().items()}


def _zero_op(s, method):
    return _ZeroOp(discretization_for(s, method))


def dirac_resolvent_apply(req: ResolventRequest) -> np.ndarray:
    """(A_eta - lambda)^-1 f at the request targets, shape (P, 4).

    Raises
    ------
    ExcludedCouplingError
        For eta = +-2c.
    IllConditionedError
        When I + eta M_N(lambda) is numerically singular.
    """
    targets = _check_targets(req.surface, req.targets, None)
    fld = dirac_resolvent_field(req.p, req.lam, req.surface, req.f, req.vol_grid, req.method)
    return fld(targets)


def schrodinger_resolvent_field(
    m: float, eta: float, lam, s: Surface, f, vol_grid: VolumeGrid, method: str | None = None
) -> ResolventField:
    """(-Delta_eta - lambda)^-1 acting on the upper components of f, as a field."""
    lam = _non_real(lam)
    pp = np.diag(kn.P_PLUS).astype(complex)

    def upper(y):
        return np.asarray(f(y), dtype=complex) * pp

    form = kn.schrodinger_form(m, lam)
    m_op = assemble_M_schrodinger(m, lam, s, method=method) if eta != 0.0 else _zero_op(s, method)
    return _krein_field(form, m_op, float(eta), upper, vol_grid, s, method, projector=pp)


def schrodinger_resolvent_apply(m: float, eta: float, lam, f, targets, vol_grid: VolumeGrid, s: Surface, method=None):
    """(-Delta_eta - lambda)^-1 P_+ f at the targets; the lower components are zero."""
    targets = _check_targets(s, targets, None)
    return schrodinger_resolvent_field(m, eta, lam, s, f, vol_grid, method)(targets)


@dataclass(frozen=True)
class NonrelRow:
    c: float
    deviation_M: float
    deviation_resolvent: float
    lower_norm: float


@dataclass(frozen=True)
class NonrelTable:
    rows: tuple
    slope_M: float
    slope_resolvent: float

    def as_dict(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "slope_M": self.slope_M,
            "slope_resolvent": self.slope_resolvent,
        }


def _slope(cs, devs) -> float:
    cs, devs = np.asarray(cs, float), np.asarray(devs, float)
    ok = devs > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(cs[ok]), np.log(devs[ok]), 1)[0])


def nonrel_limit_experiment(
    m: float,
    eta: float,
    lam,
    c_list,
    s: Surface,
    f=None,
    targets=None,
    vol_grid: VolumeGrid | None = None,
    method: str | None = None,
) -> NonrelTable:
    """Compare the Dirac problem at lambda + mc^2 with the Schrodinger problem at lambda.

    For each c the table holds ||M(lambda + mc^2) - M~(lambda) P_+||_2, the
    largest deviation of the two resolvents over the targets, and the largest
    norm of the lower components of the Dirac output. Without a source only
    the operator deviation is computed. Slopes are least-squares fits of log
    deviation against log c.
    """
    lam = _non_real(lam)
    c_list = [float(c) for c in c_list]
    if any(b <= a for a, b in zip(c_list, c_list[1:])):
        raise DomainError("c_list must be increasing")
    m_s = assemble_M_schrodinger(m, lam, s, method=method)
    schr = None
    if f is not None:
        targets = _check_targets(s, targets, None)
        schr = schrodinger_resolvent_field(m, eta, lam, s, f, vol_grid, method)(targets)
    rows = []
    for c in c_list:
        p = PhysParams(m, c, eta)
        if p.is_excluded_coupling():
            raise ExcludedCouplingError(f"excluded coupling eta=+-2c at c={c}")
        m_d = assemble_M_shifted(p, lam, s, method=method)
        dev_m = max(float(np.linalg.norm(m_d.blocks[k] - m_s.blocks[k], 2)) for k in m_d.blocks)
        dev_r = lower = float("nan")
        if f is not None:
            out = dirac_resolvent_field(p, lam, s, f, vol_grid, method, shifted=True)(targets)
            dev_r = float(np.max(np.linalg.norm(out - schr, axis=1)))
            lower = float(np.max(np.linalg.norm(out[:, 2:], axis=1)))
        rows.append(NonrelRow(c, dev_m, dev_r, lower))
    return NonrelTable(
        tuple(rows),
        _slope(c_list, [r.deviation_M for r in rows]),
        _slope(c_list, [r.deviation_resolvent for r in rows]) if f is not None else float("nan"),
    )
