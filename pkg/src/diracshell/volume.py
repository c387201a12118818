"""Volume quadrature for convolutions with the free kernels.

The kernels are singular like 1/|x - y|^2 at the target, which a tensor
midpoint grid resolves poorly: at targets that are not cell centres the
error of the plain midpoint sum is of order ten percent. The default rule
therefore works in polar coordinates centred at each target, where the
Jacobian r^2 cancels the singularity and the integrand becomes smooth along
rays. Rays are clipped to the source box, split dyadically towards the
target, and split again where they cross a spherical interface across which
the source may jump. For targets outside that sphere the directions are
split at its tangent cone, where the crossing points vary non-smoothly.

Targets outside the box, where the source is negligible, use a product
rule on the ball circumscribing the box instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

RULES = ("polar", "midpoint")


@dataclass(frozen=True)
class VolumeGrid:
    """Box enclosing the support of a source field, plus quadrature orders.

    Parameters
    ----------
    center, half_width : box ``|y - center|_inf <= half_width`` outside which
        the source is negligible.
    n : int
        Cells per side of the midpoint rule.
    rule : {"polar", "midpoint"}
    radial_order : int
        Gauss-Legendre points per radial panel of the polar rules.
    angular_order : int
        Gauss-Legendre points in cos(theta); the azimuth uses twice as many.
    panels : int
        Dyadic radial panels per ray.
    """

    center: tuple = (0.0, 0.0, 0.0)
    half_width: float = 3.0
    n: int = 32
    rule: str = "polar"
    radial_order: int = 8
    angular_order: int = 10
    panels: int = 5

    def __post_init__(self):
        if self.n < 1 or self.radial_order < 1 or self.angular_order < 1 or self.panels < 1:
            raise DomainError("empty volume grid")
        if not self.half_width > 0:
            raise DomainError("volume grid half width must be positive")
        if self.rule not in RULES:
            raise DomainError(f"unknown volume rule {self.rule!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def center_array(self) -> np.ndarray:
        return np.array(self.center)

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def axes(self) -> list[np.ndarray]:
        base = -self.half_width + self.h * (np.arange(self.n) + 0.5)
        return [base + c for c in self.center]

    @property
    def points(self) -> np.ndarray:
        gx, gy, gz = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def outer_radius(self) -> float:
        """Radius of the ball around the centre circumscribing the box."""
        return float(np.sqrt(3.0) * self.half_width)

    @cached_property
    def directions(self):
        return direction_rule(self.angular_order)


def direction_rule(n: int):
    """Unit vectors and weights: Gauss-Legendre in cos(theta) times 2n azimuths."""
    ct, wc = np.polynomial.legendre.leggauss(n)
    ph = np.pi * np.arange(2 * n) / n
    st = np.sqrt(1.0 - ct**2)
    w = np.stack(
        [np.outer(st, np.cos(ph)).ravel(), np.outer(st, np.sin(ph)).ravel(), np.repeat(ct, 2 * n)], axis=1
    )
    return w, np.repeat(wc, 2 * n) * (np.pi / n)


def cone_direction_rule(x, radius: float, n: int):
    """Direction rule at a point outside a sphere centred at the origin, split at its tangent cone.

    The polar axis points from ``x`` to the centre. Inside the cone the
    polar angle is written as sin(theta) = (radius / |x|) sin(u), which
    makes the chord length radius * cos(u) smooth up to the tangent rays;
    outside the cone Gauss-Legendre in cos(theta) is used. Both parts have
    ``n`` polar nodes and 2n azimuths.
    """
    x = np.asarray(x, dtype=float)
    d = float(np.linalg.norm(x))
    ratio = radius / d
    g, gw = np.polynomial.legendre.leggauss(n)
    u = 0.25 * np.pi * (g + 1.0)
    s_in = ratio * np.sin(u)
    c_in = np.sqrt(1.0 - s_in**2)
    w_in = 0.25 * np.pi * gw * ratio * np.cos(u) * s_in / c_in
    ct = np.sqrt(1.0 - ratio**2)
    c_out = 0.5 * (ct - 1.0) + 0.5 * (ct + 1.0) * g
    w_out = 0.5 * (ct + 1.0) * gw
    cth = np.concatenate([c_in, c_out])
    sth = np.sqrt(np.maximum(1.0 - cth**2, 0.0))
    wth = np.concatenate([w_in, w_out])
    # y = x - r w, so the axis towards the centre is w = x / |x|
    e3 = x / d
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(e3, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    ph = np.pi * np.arange(2 * n) / n
    cp, sp = np.cos(ph), np.sin(ph)
    w = (np.outer(sth, cp).ravel()[:, None] * e1 + np.outer(sth, sp).ravel()[:, None] * e2
         + np.repeat(cth, 2 * n)[:, None] * e3)
    return w, np.repeat(wth, 2 * n) * (np.pi / n)


def _ray_box(x, w, grid: VolumeGrid):
    """Parameter interval of y = x - r w (r >= 0) inside the source box."""
    o = x - grid.center_array
    hw = grid.half_width
    d = -w
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-hw - o) / d
        t2 = (hw - o) / d
    inside = np.abs(o) <= hw
    lo = np.where(d == 0, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2)).max(axis=1)
    hi = np.where(d == 0, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2)).min(axis=1)
    lo = np.maximum(lo, 0.0)
    empty = ~(hi > lo) | ~np.isfinite(hi)
    lo = np.where(empty, 0.0, lo)
    hi = np.where(empty, 0.0, hi)
    return lo, hi


def _panel_rule(bp, order):
    """Gauss-Legendre nodes and weights on consecutive panels, row by row."""
    g, gw = np.polynomial.legendre.leggauss(order)
    a, b = bp[:, :-1], bp[:, 1:]
    r = (a[..., None] + 0.5 * (b - a)[..., None] * (g + 1.0)).reshape(len(bp), -1)
    wr = (0.5 * (b - a)[..., None] * gw).reshape(len(bp), -1)
    return r, wr


def polar_rule(x, grid: VolumeGrid, interface_radius: float | None = None):
    """Target-centred rule for int K(x - y) f(y) dy over the source box.

    Returns displacements ``x - y`` of shape (Q, 3) and weights (Q,) that
    include the Jacobian r^2. Points with zero weight are dropped.
    """
    x = np.asarray(x, dtype=float)
    if interface_radius is not None and x @ x > interface_radius**2 * (1.0 + 1e-12):
        w, ww = cone_direction_rule(x, interface_radius, grid.angular_order)
    else:
        w, ww = grid.directions
    lo, hi = _ray_box(x, w, grid)
    bps = [lo, hi]
    for j in range(1, grid.panels):
        bps.append(np.clip(hi * 2.0**-j, lo, hi))
    if interface_radius is not None:
        xw = w @ x
        disc = xw**2 - x @ x + interface_radius**2
        sq = np.sqrt(np.maximum(disc, 0.0))
        for r in (xw - sq, xw + sq):
            bps.append(np.clip(np.where(disc > 0, r, lo), lo, hi))
    bp = np.sort(np.stack(bps, axis=1), axis=1)
    r, wr = _panel_rule(bp, grid.radial_order)
    wt = (wr * r**2 * ww[:, None]).ravel()
    disp = (r[..., None] * w[:, None, :]).reshape(-1, 3)
    keep = wt > 0
    return disp[keep], wt[keep]


def ball_rule(center, radius: float, grid: VolumeGrid, breaks=()):
    """Product rule on the ball |y - center| <= radius.

    Radial panels are split dyadically and at the given radii; returns
    points (Q, 3) and weights (Q,).
    """
    w, ww = grid.directions
    bp = sorted({0.0, float(radius), *[radius * 2.0**-j for j in range(1, grid.panels)],
                 *[float(b) for b in breaks if 0.0 < b < radius]})
    r, wr = _panel_rule(np.array([bp]), grid.radial_order)
    r, wr = r[0], wr[0] * r[0] ** 2
    pts = np.asarray(center, dtype=float) + (r[:, None, None] * w[None, :, :]).reshape(-1, 3)
    return pts, np.outer(wr, ww).ravel()


def convolve(form, f, targets, grid: VolumeGrid, interface_radius: float | None = None, chunk: int = 200_000):
    """Evaluate int K(x - y) f(y) dy at each target.

    Parameters
    ----------
    form : KernelForm
        Matrix-free kernel.
    f : callable
        Maps points (M, 3) to values (M, 4).
    targets : array_like, shape (P, 3)
    grid : VolumeGrid
    interface_radius : float, optional
        Radius of a sphere centred at the origin across which ``f`` may jump.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros((len(targets), 4), dtype=complex)
    if grid.rule == "midpoint":
        pts = grid.points
        fv = np.asarray(f(pts), dtype=complex) * grid.cell_volume
        keep = np.any(fv != 0, axis=1)
        pts, fv = pts[keep], fv[keep]
        for i, x in enumerate(targets):
            d = x - pts
            ok = np.einsum("ij,ij->i", d, d) > (1e-12 * grid.h) ** 2
            out[i] = form.apply(d[ok], fv[ok]).sum(axis=0)
        return out

    far = np.any(np.abs(targets - grid.center_array) > grid.half_width, axis=1)
    if np.any(far):
        if interface_radius is None:
            pts, wts = ball_rule(grid.center_array, grid.outer_radius, grid)
        else:
            # centred on the interface so that the radial split follows it
            reach = float(np.linalg.norm(np.abs(grid.center_array) + grid.half_width))
            pts, wts = ball_rule(np.zeros(3), reach, grid, (interface_radius,))
        fv = np.asarray(f(pts), dtype=complex) * wts[:, None]
        for i in np.nonzero(far)[0]:
            out[i] = form.apply(targets[i] - pts, fv).sum(axis=0)

    # batch near targets so that each call of f sees many points
    batch, sizes, idx = [], [], []

    def flush():
        if not batch:
            return
        d = np.concatenate([b[0] for b in batch])
        wt = np.concatenate([b[1] for b in batch])
        x = np.concatenate([np.broadcast_to(targets[i], b[0].shape) for i, b in zip(idx, batch)])
        vals = form.apply(d, np.asarray(f(x - d), dtype=complex)) * wt[:, None]
        start = 0
        for i, n in zip(idx, sizes):
            out[i] = vals[start : start + n].sum(axis=0)
            start += n
        batch.clear()
        sizes.clear()
        idx.clear()

    total = 0
    for i in np.nonzero(~far)[0]:
        d, wt = polar_rule(targets[i], grid, interface_radius)
        batch.append((d, wt))
        sizes.append(len(wt))
        idx.append(i)
        total += len(wt)
        if total >= chunk:
            flush()
            total = 0
    flush()
    return out
