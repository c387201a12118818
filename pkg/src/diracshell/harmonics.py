"""Spinor spherical-harmonic Galerkin machinery for spherical shells.

On a sphere the boundary operators commute with rotations about the z-axis,
so a basis of functions with definite total azimuthal number m_j = k + 1/2
splits every operator into independent blocks. Each block is spanned by the
4-spinors (Omega, 0) and (0, Omega), where Omega runs over the two-component
spinor harmonics with total angular momentum |m_j| <= j <= L - 1/2. The
scalar degree of every basis function is at most L, so the sphere's
Gauss-Legendre x uniform grid with n_theta = L + 1 integrates products of
basis functions exactly.

Matrix elements <v_b, T v_a> of an integral operator T with a translation
invariant kernel are computed in two stages. The inner integral (T v_a)(x)
uses polar coordinates centred at the target x, Gauss-Legendre in the
polar angle and an even trapezoid rule in the azimuth, so the odd Cauchy
part of the kernel cancels pairwise and the remaining integrand is smooth.
The outer integral exploits equivariance: targets on the meridian phi = 0
suffice, and Gauss-Legendre in cos(theta) finishes the projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .surface import Surface


def normalized_legendre(lmax: int, m: int, t: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre values for degrees ``0..lmax`` at order ``m >= 0``.

    Returns an array of shape ``(lmax + 1, len(t))`` whose rows with degree
    below ``m`` are zero; ``P[l] * exp(i m phi)`` is the Condon-Shortley
    spherical harmonic Y_l^m.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((lmax + 1,) + t.shape)
    if m > lmax:
        return out
    st = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    pmm = np.full(t.shape, 1.0 / np.sqrt(4.0 * np.pi))
    for j in range(1, m + 1):
        pmm = -np.sqrt((2.0 * j + 1.0) / (2.0 * j)) * st * pmm
    out[m] = pmm
    if m + 1 <= lmax:
        out[m + 1] = np.sqrt(2.0 * m + 3.0) * t * pmm
    for l in range(m + 2, lmax + 1):
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
        b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
        out[l] = a * (t * out[l - 1] - b * out[l - 2])
    return out


def signed_legendre(lmax: int, m: int, t: np.ndarray) -> np.ndarray:
    """Like :func:`normalized_legendre` but for any integer order ``m``."""
    p = normalized_legendre(lmax, abs(m), t)
    if m < 0 and (m % 2):
        p = -p
    return p


# component s of a 4-spinor carries spin up (s = 0, 2) or spin down (s = 1, 3)
SPIN_DOWN = np.array([0, 1, 0, 1])


@dataclass(frozen=True)
class SpinorBlock:
    """Basis of one azimuthal block, m_j = k + 1/2.

    ``coef[b, s, l]`` is the coefficient of Y_l^{k + SPIN_DOWN[s]} in
    component ``s`` of basis function ``b`` on the unit sphere.
    ``labels[b]`` holds ``(j, l, upper)`` with ``upper`` true for (Omega, 0).
    """

    k: int
    coef: np.ndarray
    labels: tuple

    @property
    def size(self) -> int:
        return self.coef.shape[0]

    @property
    def m_j(self) -> float:
        return self.k + 0.5

    def orders(self) -> np.ndarray:
        return self.k + SPIN_DOWN


def spinor_block(k: int, lmax: int) -> SpinorBlock:
    """Spinor harmonics with m_j = k + 1/2 and j <= lmax - 1/2."""
    mj = k + 0.5
    rows, labels = [], []
    j = abs(mj)
    while j <= lmax - 0.5 + 1e-9:
        for l in (int(round(j - 0.5)), int(round(j + 0.5))):
            up = np.zeros(lmax + 1)
            dn = np.zeros(lmax + 1)
            if l == j - 0.5:
                cu = np.sqrt((l + mj + 0.5) / (2 * l + 1))
                cd = np.sqrt((l - mj + 0.5) / (2 * l + 1))
            else:
                cu = -np.sqrt((l - mj + 0.5) / (2 * l + 1))
                cd = np.sqrt((l + mj + 0.5) / (2 * l + 1))
            if abs(k) <= l:
                up[l] = cu
            if abs(k + 1) <= l:
                dn[l] = cd
            for upper in (True, False):
                c = np.zeros((4, lmax + 1))
                c[0 if upper else 2] = up
                c[1 if upper else 3] = dn
                rows.append(c)
                labels.append((j, l, upper))
        j += 1.0
    return SpinorBlock(k, np.array(rows), tuple(labels))


@dataclass(frozen=True)
class QuadratureOrders:
    """Outer Gauss-Legendre count and inner polar/azimuthal counts."""

    outer: int
    polar: int
    azimuthal: int

    @classmethod
    def default(cls, lmax: int) -> "QuadratureOrders":
        az = lmax + 4
        az += az % 2
        return cls(outer=lmax + 3, polar=lmax + 9, azimuthal=az)


class SphereGalerkin:
    """Block Galerkin discretisation of translation invariant surface operators.

    Parameters
    ----------
    surface : Surface
        A sphere from :func:`make_sphere`; the band limit is ``n_theta - 1``.
    orders : QuadratureOrders, optional
    """

    def __init__(self, surface: Surface, orders: QuadratureOrders | None = None):
        if not surface.is_sphere:
            raise ValueError("SphereGalerkin needs a spherical surface")
        self.surface = surface
        self.radius = surface.descriptor.radius
        self.lmax = surface.descriptor.n_theta - 1
        self.orders = orders or QuadratureOrders.default(self.lmax)
        self.block_ids = tuple(range(-self.lmax, self.lmax))
        self.blocks = {k: spinor_block(k, self.lmax) for k in self.block_ids}

    @property
    def dimension(self) -> int:
        return sum(b.size for b in self.blocks.values())

    @cached_property
    def _outer(self):
        t, w = np.polynomial.legendre.leggauss(self.orders.outer)
        return t, w

    def _polar_rule(self, panels):
        """Gauss-Legendre nodes in the polar angle over consecutive panels."""
        g, gw = np.polynomial.legendre.leggauss(self.orders.polar)
        th, wth = [], []
        for lo, hi in zip(panels[:-1], panels[1:]):
            th.append(lo + 0.5 * (hi - lo) * (g + 1.0))
            wth.append(0.5 * (hi - lo) * gw)
        th, wth = np.concatenate(th), np.concatenate(wth)
        return th, wth * np.sin(th)

    def _rotated_rule(self, r_t: np.ndarray, t_t: np.ndarray):
        """Polar quadrature on the sphere centred at the radial projection of each target.

        Targets sit on the meridian phi = 0 at radius ``r_t`` and polar
        cosine ``t_t``. Off-surface targets get a geometric sequence of
        polar panels starting at a width proportional to their distance
        from the sphere, which resolves the nearly singular integrand.

        Returns per-target lists of displacements (Q, 3), polar cosines and
        azimuths of the surface points (Q,) and weights (Q,).
        """
        a = self.radius
        n2 = self.orders.azimuthal
        psi = 2.0 * np.pi * np.arange(n2) / n2
        disp, tqs, phs, ws = [], [], [], []
        for r, t in zip(np.atleast_1d(r_t), np.atleast_1d(t_t)):
            d = abs(r - a) / a
            panels = [0.0]
            if d > 0.0:
                edge = 4.0 * d
                while edge < 0.5 * np.pi:
                    panels.append(edge)
                    edge *= 4.0
            panels.append(np.pi)
            th, wth = self._polar_rule(panels)
            st_o = np.sqrt(max(0.0, 1.0 - t * t))
            nu = np.array([st_o, 0.0, t])
            e1 = np.array([t, 0.0, -st_o])
            e2 = np.array([0.0, 1.0, 0.0])
            sth = np.repeat(np.sin(th), n2)
            cth = np.repeat(np.cos(th), n2)
            ps = np.tile(psi, len(th))
            y = a * (
                (sth * np.cos(ps))[:, None] * e1
                + (sth * np.sin(ps))[:, None] * e2
                + cth[:, None] * nu
            )
            disp.append(r * nu[None, :] - y)
            tqs.append(np.clip(y[:, 2] / a, -1.0, 1.0))
            phs.append(np.arctan2(y[:, 1], y[:, 0]))
            ws.append(np.repeat(wth, n2) * (2.0 * np.pi / n2) * a**2)
        return disp, tqs, phs, ws

    def _orders_needed(self, ks):
        return sorted({int(m) for k in ks for m in self.blocks[k].orders()})

    def outer_values(self, k: int) -> np.ndarray:
        """Basis values on the meridian phi = 0 at the outer nodes, shape (n_o, 4, size)."""
        t_o, _ = self._outer
        blk = self.blocks[k]
        out = np.zeros((len(t_o), 4, blk.size))
        for s in range(4):
            p = signed_legendre(self.lmax, int(blk.orders()[s]), t_o)
            out[:, s, :] = p.T @ blk.coef[:, s, :].T
        return out / self.radius

    def _apply_to_basis(self, kernel, r_t, t_t, ks) -> dict[int, np.ndarray]:
        """(T v_b)(x) for every basis function b at meridian targets, shape (P, 4, size)."""
        disp, tq, phq, wq = self._rotated_rule(r_t, t_t)
        n_p = len(tq)
        lmax = self.lmax
        ms = self._orders_needed(ks)

        # z[m][p, s', s, l] = sum_q w_q K(x_p - y_q)[s', s] Y_l^m(y_q)
        z = {m: np.zeros((n_p, 4, 4, lmax + 1), dtype=complex) for m in ms}
        for o in range(n_p):
            g = kernel(disp[o]) * wq[o][:, None, None]
            gmat = g.reshape(len(wq[o]), 16).T
            done = set()
            for m in ms:
                if m in done:
                    continue
                p = normalized_legendre(lmax, abs(m), tq[o])
                for mm in {m, -m} & set(ms):
                    sgn = -1.0 if (mm < 0 and mm % 2) else 1.0
                    y = (sgn * p) * np.exp(1j * mm * phq[o])[None, :]
                    z[mm][o] = (gmat @ y.T).reshape(4, 4, lmax + 1)
                    done.add(mm)

        out = {}
        for k in ks:
            blk = self.blocks[k]
            orders = blk.orders()
            f = np.zeros((n_p, 4, blk.size), dtype=complex)
            for s in range(4):
                f += np.einsum("osl,bl->osb", z[int(orders[s])][:, :, s, :], blk.coef[:, s, :])
            out[k] = f / self.radius
        return out

    def matrices(self, kernel, ks=None) -> dict[int, np.ndarray]:
        """Galerkin blocks of the operator with the given kernel.

        Parameters
        ----------
        kernel : callable
            Maps displacements of shape (..., 3) to (..., 4, 4) values.
        ks : iterable of int, optional
            Block ids to compute; all blocks by default.
        """
        ks = list(self.block_ids if ks is None else ks)
        t_o, w_o = self._outer
        a = self.radius
        f = self._apply_to_basis(kernel, np.full(len(t_o), a), t_o, ks)
        out = {}
        for k in ks:
            v = self.outer_values(k)
            out[k] = 2.0 * np.pi * a**2 * np.einsum("o,osb,osc->bc", w_o, v, f[k])
        return out

    def layer_on_meridian(self, kernel, r_t, t_t, ks=None) -> dict[int, np.ndarray]:
        """Layer potentials of all basis functions at off-surface meridian points."""
        ks = list(self.block_ids if ks is None else ks)
        return self._apply_to_basis(kernel, np.asarray(r_t, float), np.asarray(t_t, float), ks)

    def density_at(self, coeffs: dict, t, phi) -> np.ndarray:
        """Values (Q, 4) of the density with block coefficients ``coeffs`` at surface points.

        ``t`` and ``phi`` are the polar cosines and azimuths of the points.
        """
        t = np.asarray(t, dtype=float)
        phi = np.asarray(phi, dtype=float)
        # radial coefficient vectors grouped by (component, order)
        acc: dict[tuple[int, int], np.ndarray] = {}
        for k, c in coeffs.items():
            blk = self.blocks[k]
            for comp, m in enumerate(blk.orders()):
                a = blk.coef[:, comp, :].T @ c
                key = (comp, int(m))
                acc[key] = acc.get(key, 0.0) + a
        out = np.zeros((len(t), 4), dtype=complex)
        by_abs: dict[int, list] = {}
        for (comp, m), a in acc.items():
            by_abs.setdefault(abs(m), []).append((comp, m, a))
        for am, items in by_abs.items():
            p = normalized_legendre(self.lmax, am, t)
            for comp, m, a in items:
                sgn = -1.0 if (m < 0 and m % 2) else 1.0
                out[:, comp] += sgn * (a @ p) * np.exp(1j * m * phi)
        return out / self.radius

    def _rule_at(self, x):
        """Polar rule on the sphere about the radial projection of the point ``x``."""
        a = self.radius
        r = float(np.linalg.norm(x))
        nu = x / r if r > 0 else np.array([0.0, 0.0, 1.0])
        helper = np.array([1.0, 0.0, 0.0]) if abs(nu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(nu, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(nu, e1)
        d = abs(r - a) / a
        panels = [0.0]
        if d > 0.0:
            edge = 4.0 * d
            while edge < 0.5 * np.pi:
                panels.append(edge)
                edge *= 4.0
        panels.append(np.pi)
        th, wth = self._polar_rule(panels)
        n2 = self.orders.azimuthal
        psi = 2.0 * np.pi * np.arange(n2) / n2
        sth = np.repeat(np.sin(th), n2)
        cth = np.repeat(np.cos(th), n2)
        ps = np.tile(psi, len(th))
        y = a * ((sth * np.cos(ps))[:, None] * e1 + (sth * np.sin(ps))[:, None] * e2 + cth[:, None] * nu)
        return x - y, y, np.repeat(wth, n2) * (2.0 * np.pi / n2) * a**2

    def layer_potential(self, form, coeffs: dict, points, chunk: int = 400_000) -> np.ndarray:
        """Evaluate int_S K(x - y) psi(y) dsigma(y) at off-surface points, shape (P, 4).

        ``form`` is a matrix-free kernel with an ``apply`` method and
        ``psi`` is given by its block coefficients.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((len(points), 4), dtype=complex)
        if not any(np.any(c != 0) for c in coeffs.values()):
            return out
        a = self.radius
        i = 0
        while i < len(points):
            disp, ys, ws, seg = [], [], [], []
            total = 0
            j = i
            while j < len(points) and total < chunk:
                dx, y, w = self._rule_at(points[j])
                disp.append(dx)
                ys.append(y)
                ws.append(w)
                seg.append(len(w))
                total += len(w)
                j += 1
            y = np.concatenate(ys)
            t = np.clip(y[:, 2] / a, -1.0, 1.0)
            phi = np.arctan2(y[:, 1], y[:, 0])
            vals = form.apply(np.concatenate(disp), self.density_at(coeffs, t, phi))
            vals *= np.concatenate(ws)[:, None]
            starts = np.concatenate([[0], np.cumsum(seg)[:-1]])
            out[i:j] = np.add.reduceat(vals, starts, axis=0)
            i = j
        return out

    def node_values(self, k: int) -> np.ndarray:
        """Basis values at the surface nodes, shape (N, 4, size)."""
        d = self.surface.descriptor
        phi = np.pi * np.arange(d.n_phi) / d.n_theta
        blk = self.blocks[k]
        out = np.zeros((d.n_theta, d.n_phi, 4, blk.size), dtype=complex)
        for s in range(4):
            m = int(blk.orders()[s])
            p = signed_legendre(self.lmax, m, d.cos_theta)
            radial = p.T @ blk.coef[:, s, :].T
            out[:, :, s, :] = radial[:, None, :] * np.exp(1j * m * phi)[None, :, None]
        return out.reshape(-1, 4, blk.size) / self.radius

    @cached_property
    def _node_cache(self):
        return {k: self.node_values(k) for k in self.block_ids}

    def synthesize(self, coeffs: dict[int, np.ndarray]) -> np.ndarray:
        """Node values (N, 4) of the density with the given block coefficients."""
        out = np.zeros((self.surface.n_nodes, 4), dtype=complex)
        for k, c in coeffs.items():
            out += self._node_cache[k] @ c
        return out

    def analyze(self, values) -> dict[int, np.ndarray]:
        """Orthogonal projection of node values (N, 4) onto the block bases."""
        values = np.asarray(values)
        w = self.surface.weights
        return {
            k: np.einsum("i,isb,is->b", w, self._node_cache[k].conj(), values)
            for k in self.block_ids
        }
