"""Assembly of the boundary operators M(lambda), dM/dlambda and the
Schrodinger counterpart, plus the surface-to-volume layer potentials.

Two discretisations share one interface. Spheres use the block Galerkin
scheme of :mod:`diracshell.harmonics`; triangle meshes use a Nystrom matrix
on the face centroids with the diagonal (self) interaction excluded. Both
store the operator in orthonormal coordinates, so the weighted inner
product of node values becomes the Euclidean one there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels as kn
from .errors import AssemblyIntegrityError, DomainError, NearSingularError
from .harmonics import QuadratureOrders, SphereGalerkin
from .kernels import PhysParams
from .surface import Surface
from .volume import VolumeGrid, convolve


class OperatorKind(str, enum.Enum):
    WEYL_M = "WeylM"
    WEYL_M_DERIVATIVE = "WeylMDerivative"
    SCHRODINGER_M = "SchrodingerM"


class PVPolicy(str, enum.Enum):
    DIAGONAL_EXCLUSION = "DiagonalExclusion"
    ROTATED_POLAR = "RotatedPolar"


class NodeDiscretization:
    """Nystrom coordinates: c_i = sqrt(w_i) phi(x_i), a single block with id 0."""

    block_ids = (0,)

    def __init__(self, surface: Surface):
        self.surface = surface
        self._sqw = np.repeat(np.sqrt(surface.weights), 4)

    @property
    def dimension(self) -> int:
        return 4 * self.surface.n_nodes

    def block_sizes(self) -> dict[int, int]:
        return {0: self.dimension}

    def matrices(self, kernel, ks=None, row_chunk: int = 256) -> dict[int, np.ndarray]:
        s = self.surface
        n = s.n_nodes
        sq = np.sqrt(s.weights)
        out = np.zeros((n, 4, n, 4), dtype=complex)
        for start in range(0, n, row_chunk):
            rows = np.arange(start, min(start + row_chunk, n))
            disp = s.nodes[rows, None, :] - s.nodes[None, :, :]
            self_pair = rows[:, None] == np.arange(n)[None, :]
            disp[self_pair] = 1.0  # placeholder, zeroed below
            vals = kernel(disp)
            vals[self_pair] = 0.0
            vals *= (sq[rows, None] * sq[None, :])[:, :, None, None]
            out[rows] = vals.transpose(0, 2, 1, 3)
        return {0: out.reshape(4 * n, 4 * n)}

    def synthesize(self, coeffs) -> np.ndarray:
        return (coeffs[0] / self._sqw).reshape(-1, 4)

    def analyze(self, values) -> dict[int, np.ndarray]:
        return {0: np.asarray(values, dtype=complex).reshape(-1) * self._sqw}

    def node_matrix(self, blocks) -> np.ndarray:
        return blocks[0] * (1.0 / self._sqw)[:, None] * self._sqw[None, :]


class GalerkinDiscretization:
    """Adapter exposing :class:`SphereGalerkin` through the common interface."""

    def __init__(self, surface: Surface, orders: QuadratureOrders | None = None):
        self.surface = surface
        self.engine = SphereGalerkin(surface, orders)
        self.block_ids = self.engine.block_ids

    @property
    def dimension(self) -> int:
        return self.engine.dimension

    def block_sizes(self) -> dict[int, int]:
        return {k: b.size for k, b in self.engine.blocks.items()}

    def matrices(self, kernel, ks=None):
        return self.engine.matrices(kernel, ks)

    def synthesize(self, coeffs) -> np.ndarray:
        return self.engine.synthesize(coeffs)

    def analyze(self, values):
        return self.engine.analyze(values)

    def node_matrix(self, blocks) -> np.ndarray:
        n = self.surface.n_nodes
        w = np.repeat(self.surface.weights, 4)
        out = np.zeros((4 * n, 4 * n), dtype=complex)
        for k, h in blocks.items():
            v = self.engine._node_cache[k].reshape(4 * n, -1)
            out += (v @ h) @ (v.conj().T * w[None, :])
        return out


_DISCRETIZATIONS: dict[tuple, object] = {}


def discretization_for(surface: Surface, method: str | None = None):
    """Shared discretisation object for a surface (cached by identity)."""
    if method is None:
        method = "galerkin" if surface.is_sphere else "nystrom"
    if method not in ("galerkin", "nystrom"):
        raise DomainError(f"unknown discretisation method {method!r}")
    if method == "galerkin" and not surface.is_sphere:
        raise DomainError("the Galerkin scheme needs a spherical surface")
    key = (id(surface), method)
    disc = _DISCRETIZATIONS.get(key)
    if disc is None or disc.surface is not surface:
        disc = GalerkinDiscretization(surface) if method == "galerkin" else NodeDiscretization(surface)
        if len(_DISCRETIZATIONS) > 16:
            _DISCRETIZATIONS.clear()
        _DISCRETIZATIONS[key] = disc
    return disc


@dataclass(frozen=True)
class AssembledOperator:
    """A discretised boundary operator at one spectral point.

    ``blocks`` maps block ids to square matrices in orthonormal coordinates;
    for meshes there is one block, for spheres one per azimuthal number.
    """

    lam: complex
    kind: OperatorKind
    surface: Surface
    pv_policy: PVPolicy
    blocks: dict
    discretization: object = field(repr=False)
    params: PhysParams | None = None

    @property
    def surface_id(self) -> str:
        return self.surface.tag

    @property
    def dimension(self) -> int:
        return sum(b.shape[0] for b in self.blocks.values())

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense 4N x 4N matrix acting on node values (memory heavy for large N)."""
        return self.discretization.node_matrix(self.blocks)

    def dense(self) -> np.ndarray:
        """Block-diagonal matrix in orthonormal coordinates."""
        sizes = [b.shape[0] for b in self.blocks.values()]
        out = np.zeros((sum(sizes), sum(sizes)), dtype=complex)
        i = 0
        for b in self.blocks.values():
            n = b.shape[0]
            out[i : i + n, i : i + n] = b
            i += n
        return out

    def frobenius(self) -> float:
        return float(np.sqrt(sum(np.linalg.norm(b) ** 2 for b in self.blocks.values())))

    def hermiticity_residual(self) -> float:
        """||A - A^dagger||_F / ||A||_F in the weighted inner product."""
        num = np.sqrt(sum(np.linalg.norm(b - b.conj().T) ** 2 for b in self.blocks.values()))
        den = self.frobenius()
        return float(num / den) if den > 0 else 0.0

    def norm2(self) -> float:
        """Operator 2-norm in the weighted inner product."""
        return max(float(np.linalg.norm(b, 2)) for b in self.blocks.values() if b.size)

    def apply(self, values) -> np.ndarray:
        """Apply the operator to node values of shape (N, 4)."""
        c = self.discretization.analyze(values)
        return self.discretization.synthesize({k: self.blocks[k] @ c[k] for k in self.blocks})

    def combine(self, other: "AssembledOperator", a: complex = 1.0, b: complex = 1.0):
        """Blockwise a*self + b*other (same discretisation)."""
        if other.discretization is not self.discretization:
            raise ValueError("operators use different discretisations")
        blocks = {k: a * self.blocks[k] + b * other.blocks[k] for k in self.blocks}
        return AssembledOperator(
            self.lam, self.kind, self.surface, self.pv_policy, blocks, self.discretization, self.params
        )


def _policy(disc) -> PVPolicy:
    return PVPolicy.ROTATED_POLAR if isinstance(disc, GalerkinDiscretization) else PVPolicy.DIAGONAL_EXCLUSION


def _build(kind, lam, s, kernel, method, blocks, params):
    disc = discretization_for(s, method)
    mats = disc.matrices(kernel, blocks)
    for k, h in mats.items():
        if not np.all(np.isfinite(h)):
            raise AssemblyIntegrityError(f"non-finite entries in block {k}")
    return AssembledOperator(complex(lam), kind, s, _policy(disc), mats, disc, params)


def assemble_M(p: PhysParams, lam, s: Surface, method: str | None = None, blocks=None) -> AssembledOperator:
    """Discretise M(lambda), the principal-value boundary operator with kernel G_lambda.

    Parameters
    ----------
    p : PhysParams
    lam : complex
        In the resolvent set of the free operator or a gap endpoint.
    s : Surface
    method : {"galerkin", "nystrom"}, optional
        Defaults to Galerkin on spheres and Nystrom elsewhere.
    blocks : iterable of int, optional
        Restrict a Galerkin assembly to some azimuthal blocks.
    """
    lam = kn.check_resolvent_point(p, lam)
    return _build(OperatorKind.WEYL_M, lam, s, lambda x: kn.green_kernel(p, lam, x), method, blocks, p)


def assemble_dM(p: PhysParams, lam, s: Surface, method: str | None = None, blocks=None) -> AssembledOperator:
    """Discretise dM/dlambda from the analytic derivative kernel."""
    lam = kn.check_resolvent_point(p, lam, allow_endpoints=False)
    return _build(
        OperatorKind.WEYL_M_DERIVATIVE, lam, s, lambda x: kn.green_kernel_dlambda(p, lam, x), method, blocks, p
    )


def assemble_M_schrodinger(m: float, lam, s: Surface, method: str | None = None, blocks=None) -> AssembledOperator:
    """Discretise the Schrodinger boundary operator lifted to K_lambda P_+."""
    kn.schrodinger_wavenumber(m, lam)
    return _build(
        OperatorKind.SCHRODINGER_M, lam, s, lambda x: kn.schrodinger_kernel_lifted(m, lam, x), method, blocks, None
    )


def assemble_M_shifted(p: PhysParams, lam, s: Surface, method: str | None = None, blocks=None) -> AssembledOperator:
    """M(lambda + mc^2), evaluated with the cancellation-free shifted kernel."""
    lam = complex(lam)
    return _build(
        OperatorKind.WEYL_M,
        lam + p.rest_energy,
        s,
        lambda x: kn.shifted_green_kernel(p, lam, x),
        method,
        blocks,
        p,
    )


@dataclass(frozen=True)
class SurfaceDensity:
    """Complex 4-vector values of a density at the surface nodes, shape (N, 4)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[1] != 4:
            raise ValueError("density values must have shape (N, 4)")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        object.__setattr__(self, "values", v)


def _check_targets(s: Surface, targets, h_min: float | None) -> np.ndarray:
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[1] != 3:
        raise ValueError("targets must have shape (P, 3)")
    h = s.mean_spacing() if h_min is None else h_min
    d = np.min(np.linalg.norm(targets[:, None, :] - s.nodes[None, :, :], axis=2), axis=1)
    if np.any(d < h) or np.any(d == 0.0):
        raise NearSingularError(
            f"target within {d.min():.3g} of the surface nodes (minimum distance {h:.3g})"
        )
    return targets


def layer_values(disc, form, coeffs: dict, points) -> np.ndarray:
    """Layer potential of a density given by its coefficients, at arbitrary points.

    Galerkin discretisations integrate the synthesised density with a
    polar rule centred at the nearest surface point, which stays accurate
    arbitrarily close to the sphere. Nystrom discretisations use the node
    sum.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(disc, GalerkinDiscretization):
        return disc.engine.layer_potential(form, coeffs, points)
    s = disc.surface
    wphi = s.weights[:, None] * disc.synthesize(coeffs)
    out = np.zeros((len(points), 4), dtype=complex)
    for i, x in enumerate(points):
        out[i] = form.apply(x - s.nodes, wphi).sum(axis=0)
    return out


def _sphere_volume_rule(engine: SphereGalerkin, vol: VolumeGrid):
    """Product grid centred at the sphere, split at its radius.

    Returns meridian radii and polar cosines (P,), their weights (P,), and
    the azimuths (n_az,) with uniform weight.
    """
    a = engine.radius
    reach = float(np.linalg.norm(np.abs(vol.center_array) + vol.half_width))
    bp = sorted({0.0, 0.5 * a, a, *[a * 2.0**j for j in range(1, 16) if a * 2.0**j < reach], max(reach, 1.5 * a)})
    g, gw = np.polynomial.legendre.leggauss(vol.radial_order)
    r = np.concatenate([lo + 0.5 * (hi - lo) * (g + 1.0) for lo, hi in zip(bp[:-1], bp[1:])])
    wr = np.concatenate([0.5 * (hi - lo) * gw for lo, hi in zip(bp[:-1], bp[1:])]) * r**2
    nt = max(vol.angular_order, engine.lmax + 2)
    t, wt = np.polynomial.legendre.leggauss(nt)
    n_az = 2 * nt
    phi = 2.0 * np.pi * np.arange(n_az) / n_az
    return np.repeat(r, nt), np.tile(t, len(r)), np.outer(wr, wt).ravel(), phi


def gamma_star_coefficients(disc, form, matrix_kernel, f, vol: VolumeGrid, interface_radius=None) -> dict:
    """Coefficients of gamma(lambda)^* f, where ``form`` is the kernel of gamma(lambda).

    On spheres, coefficient b equals <gamma(lambda) v_b, f> evaluated on a
    product grid centred at the sphere, so the result is the exact adjoint of
    :func:`layer_values` in the discrete volume inner product. On meshes
    the adjoint kernel is integrated with the target-centred polar rule (or
    the midpoint rule) at each node.
    """
    if isinstance(disc, GalerkinDiscretization) and vol.rule == "polar":
        eng = disc.engine
        r, t, w, phi = _sphere_volume_rule(eng, vol)
        st = np.sqrt(1.0 - t**2)
        pts = np.stack(
            [
                np.outer(r * st, np.cos(phi)).ravel(),
                np.outer(r * st, np.sin(phi)).ravel(),
                np.repeat(r * t, len(phi)),
            ],
            axis=1,
        )
        fv = np.asarray(f(pts), dtype=complex).reshape(len(r), len(phi), 4)
        # azimuthal Fourier modes of the source, one per order in use
        modes = np.fft.fft(fv, axis=1) * (2.0 * np.pi / len(phi))
        mer = eng.layer_on_meridian(matrix_kernel, r, t)
        out = {}
        for k, vals in mer.items():
            orders = eng.blocks[k].orders()
            fm = np.stack([modes[:, int(m) % len(phi), s] for s, m in enumerate(orders)], axis=1)
            out[k] = np.einsum("p,psb,ps->b", w, vals.conj(), fm)
        return out
    s = disc.surface
    adj = _adjoint_form(form)
    vals = convolve(adj, f, s.nodes, vol, interface_radius)
    return disc.analyze(vals)


def _adjoint_form(form: kn.KernelForm) -> kn.KernelForm:
    """The same kernel at the conjugate spectral parameter (k -> -conj(k))."""
    return kn.KernelForm(-np.conj(form.k), np.conj(form.diag), form.c, form.pref)


def apply_gamma(p: PhysParams, lam, s: Surface, phi, targets, kernel=None, h_min=None, method=None) -> np.ndarray:
    """Layer potential gamma(lambda) phi = int_S G_lambda(x_t - y) phi(y) dsigma(y) at off-surface targets.

    Nystrom discretisations use the quadrature sum over nodes; on spheres the
    density is expanded in the Galerkin basis and integrated with a polar
    rule centred at the nearest surface point.

    Returns
    -------
    numpy.ndarray, shape (n_targets, 4)
    """
    lam = kn.check_resolvent_point(p, lam, allow_endpoints=False)
    phi = phi.values if isinstance(phi, SurfaceDensity) else np.asarray(phi, dtype=complex)
    targets = _check_targets(s, targets, h_min)
    form = kernel or kn.green_form(p, lam)
    disc = discretization_for(s, method)
    return layer_values(disc, form, disc.analyze(phi), targets)


def apply_gamma_star(
    p: PhysParams, lam, s: Surface, f, vol_grid: VolumeGrid, method=None, interface_radius=None
) -> SurfaceDensity:
    """Adjoint layer potential gamma(lambda)^* f = int G_{conj(lambda)}(x - y) f(y) dy on the surface.

    ``f`` maps points of shape (M, 3) to values of shape (M, 4) and is
    negligible outside the box of ``vol_grid``.
    """
    lam = kn.check_resolvent_point(p, lam, allow_endpoints=False)
    disc = discretization_for(s, method)
    form = kn.green_form(p, lam)
    coeffs = gamma_star_coefficients(disc, form, form, f, vol_grid, interface_radius)
    return SurfaceDensity(disc.synthesize(coeffs))
