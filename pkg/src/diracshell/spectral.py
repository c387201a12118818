"""Eigenvalue analysis of M(lambda) across the spectral gap."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels as kn
from .errors import AssemblyIntegrityError, DomainError, ExcludedCouplingError, IllConditionedError
from .kernels import PhysParams
from .operators import AssembledOperator, OperatorKind, assemble_dM, assemble_M
from .surface import Surface

HERMITICITY_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomposition:
    """Sorted eigenvalues and orthonormal eigenvectors, per block and merged."""

    values: np.ndarray
    block_values: dict
    block_vectors: dict


def eig_M(op: AssembledOperator, vectors: bool = True) -> EigenDecomposition:
    """Spectrum of the weighted-Hermitian discretisation of M(lambda) at real lambda.

    Raises
    ------
    AssemblyIntegrityError
        If the Hermiticity residual exceeds 1e-10.
    """
    if op.kind != OperatorKind.WEYL_M:
        raise DomainError("eig_M expects an assembled M(lambda)")
    if op.lam.imag != 0.0:
        raise DomainError("eig_M needs a real spectral parameter")
    res = op.hermiticity_residual()
    if res > HERMITICITY_TOL:
        raise AssemblyIntegrityError(f"Hermiticity residual {res:.3e} exceeds {HERMITICITY_TOL:g}")
    bvals, bvecs = {}, {}
    for k, h in op.blocks.items():
        h = 0.5 * (h + h.conj().T)
        if vectors:
            bvals[k], bvecs[k] = np.linalg.eigh(h)
        else:
            bvals[k] = np.linalg.eigvalsh(h)
    merged = np.sort(np.concatenate(list(bvals.values()))) if bvals else np.zeros(0)
    return EigenDecomposition(merged, bvals, bvecs)


def _check_grid(p: PhysParams, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1:
        raise DomainError("lambda grid must be a non-empty 1-D sequence")
    if np.any(np.abs(grid) > p.rest_energy * (1 + 1e-13)):
        raise DomainError("lambda grid outside spectral gap")
    if np.any(np.diff(grid) < 0):
        raise DomainError("lambda grid must be non-decreasing")
    return np.clip(grid, -p.rest_energy, p.rest_energy)


@dataclass
class SpectralCurve:
    """Eigenvalue branches on a lambda grid.

    ``values[i, b]`` is branch ``b`` at ``lambda_grid[i]``. Branch ``b``
    belongs to symmetry block ``branch_block[b]`` and is the
    ``branch_rank[b]``-th smallest eigenvalue of that block; in one
    dimension the sorted order is the matching that minimises the total
    displacement between adjacent grid points, so the stored links are
    identities.
    """

    lambda_grid: np.ndarray
    values: np.ndarray
    branch_block: np.ndarray
    branch_rank: np.ndarray
    norms: np.ndarray
    params: PhysParams
    surface: Surface
    method: str | None = None
    violations: list = field(default_factory=list)

    @property
    def n_branches(self) -> int:
        return self.values.shape[1]

    def branch_links(self) -> list[np.ndarray]:
        return [np.arange(self.n_branches) for _ in range(len(self.lambda_grid) - 1)]

    def monotonicity_violations(self, slack_rel: float = 1e-6, exclude_cluster: float | None = None):
        """List of (branch, grid index, drop) where a branch decreases beyond slack."""
        slack = slack_rel * float(np.max(self.norms))
        d = np.diff(self.values, axis=0)
        out = []
        half = 1.0 / (2.0 * self.params.c)
        for i, b in zip(*np.nonzero(d < -slack)):
            if exclude_cluster is not None:
                v = self.values[i : i + 2, b]
                if np.all(np.abs(np.abs(v) - half) < exclude_cluster):
                    continue
            out.append((int(b), int(i), float(-d[i, b])))
        return out


def _eig_at(p, s, lam, method, blocks=None):
    op = assemble_M(p, lam, s, method=method, blocks=blocks)
    return op, eig_M(op, vectors=False)


def scan_curves(p: PhysParams, s: Surface, lambda_grid, method: str | None = None, threads: int = 1) -> SpectralCurve:
    """Assemble and diagonalise M(lambda) at every grid point."""
    grid = _check_grid(p, lambda_grid)
    if len(grid) < 3:
        raise DomainError("lambda grid needs at least 3 points")

    def work(lam):
        op, ed = _eig_at(p, s, lam, method)
        return ed.block_values, op.norm2()

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, grid))
    else:
        results = [work(lam) for lam in grid]

    keys = sorted(results[0][0])
    blocks, ranks = [], []
    for k in keys:
        n = len(results[0][0][k])
        blocks += [k] * n
        ranks += list(range(n))
    values = np.array([np.concatenate([bv[k] for k in keys]) for bv, _ in results])
    norms = np.array([nv for _, nv in results])
    curve = SpectralCurve(grid, values, np.array(blocks), np.array(ranks), norms, p, s, method)
    curve.violations = curve.monotonicity_violations()
    return curve


@dataclass(frozen=True)
class BoundState:
    """A root of mu_n(lambda) = -1/eta inside the gap."""

    lambda_star: float
    branch_index: int
    block: int
    residual: float
    multiplicity_estimate: int


def _branch_value(p, s, method, block, rank, lam):
    blocks = None if block is None else [block]
    _, ed = _eig_at(p, s, lam, method, blocks)
    key = 0 if block is None else block
    return ed.block_values[key][rank]


def find_bound_states(p: PhysParams, s: Surface, curve: SpectralCurve, xtol: float = 1e-12) -> list[BoundState]:
    """Roots of mu_n(lambda) + 1/eta for every branch, refined on fresh assemblies.

    Sign changes on the grid are bracketed and refined with a bracketing
    Brent iteration (bisection safeguarded), re-diagonalising only the
    symmetry block that carries the branch. Roots closer than ``10 * xtol``
    are merged into one bound state whose multiplicity is the number of
    crossing branches.
    """
    if p.is_excluded_coupling():
        raise ExcludedCouplingError("excluded coupling eta=+-2c")
    if p.eta == 0.0:
        return []
    target = -1.0 / p.eta
    grid, vals = curve.lambda_grid, curve.values
    f = vals - target
    mc2 = p.rest_energy
    tol = 1e-8 * max(1.0, 1.0 / abs(p.eta))
    sphere_blocks = curve.branch_block if s.is_sphere and curve.method != "nystrom" else None

    roots = []
    for b in range(curve.n_branches):
        fb = f[:, b]
        block = None if sphere_blocks is None else int(sphere_blocks[b])
        rank = int(curve.branch_rank[b])
        for i in range(len(grid) - 1):
            lo, hi = grid[i], grid[i + 1]
            if fb[i] < 0.0 <= fb[i + 1] or fb[i] > 0.0 >= fb[i + 1]:
                if fb[i + 1] == 0.0:
                    lam_star = hi
                else:
                    g = lambda lam: _branch_value(p, s, curve.method, block, rank, lam) - target
                    lam_star = brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
                if abs(lam_star) >= mc2:
                    continue
                res = abs(_branch_value(p, s, curve.method, block, rank, lam_star) - target)
                if res > tol:
                    raise IllConditionedError(f"root refinement stalled with residual {res:.3e}")
                roots.append((lam_star, b, 0 if block is None else block, res))
            elif fb[i] == 0.0 and i == 0 and abs(lo) < mc2:
                roots.append((lo, b, 0 if block is None else block, 0.0))

    roots.sort()
    merged: list[BoundState] = []
    cluster: list = []
    for r in roots + [None]:
        if cluster and (r is None or r[0] - cluster[0][0] > 10 * xtol):
            lam_c = float(np.mean([c[0] for c in cluster]))
            first = cluster[0]
            merged.append(BoundState(lam_c, first[1], first[2], max(c[3] for c in cluster), len(cluster)))
            cluster = []
        if r is not None:
            cluster.append(r)
    for bs in merged:
        assert -mc2 < bs.lambda_star < mc2
    return merged


@dataclass(frozen=True)
class M0Estimate:
    value: float
    grid: np.ndarray
    norms: np.ndarray
    surface_tag: str


def estimate_M0(p: PhysParams, s: Surface, grid=None, method: str | None = None) -> M0Estimate:
    """Largest |eigenvalue| of M_N(lambda) over a grid covering the closed gap."""
    mc2 = p.rest_energy
    grid = np.linspace(-mc2, mc2, 11) if grid is None else _check_grid(p, grid)
    norms = np.array([np.max(np.abs(_eig_at(p, s, lam, method)[1].values)) for lam in grid])
    return M0Estimate(float(norms.max()), np.asarray(grid), norms, s.tag)


@dataclass(frozen=True)
class PairingReport:
    max_defect: float
    defects: np.ndarray
    outliers: np.ndarray
    singular_values: np.ndarray
    tail_ratio: float


def pairing_check(op: AssembledOperator, top: int = 10, cluster_halfwidth: float = 0.05) -> PairingReport:
    """Test the pairing mu <-> -1/(4 c^2 mu) on the eigenvalues outside the clusters.

    Also returns the sorted singular values of M_N^2 - I/(4c^2) and the
    ratio between the first and the one at index dimension/4.
    """
    ed = eig_M(op, vectors=False)
    c = op.params.c
    ev = ed.values
    half = 1.0 / (2.0 * c)
    outside = ev[np.abs(np.abs(ev) - half) >= cluster_halfwidth]
    order = np.argsort(-np.abs(outside))
    chosen = outside[order[:top]]
    defects = []
    for mu in chosen:
        partner = -1.0 / (4.0 * c * c * mu)
        nearest = ev[np.argmin(np.abs(ev - partner))]
        defects.append(abs(nearest - partner) / abs(partner))
    defects = np.array(defects)
    sv = []
    for h in op.blocks.values():
        h = 0.5 * (h + h.conj().T)
        sv.append(np.linalg.svd(h @ h - np.eye(len(h)) * half**2, compute_uv=False))
    sv = np.sort(np.concatenate(sv))[::-1]
    tail = sv[0] / max(sv[len(sv) // 4], np.finfo(float).tiny)
    return PairingReport(float(defects.max()) if len(defects) else 0.0, defects, chosen, sv, float(tail))


@dataclass(frozen=True)
class TraceReport:
    lhs_proxy: complex
    rhs: complex
    relative_gap: float
    inner_gap: float
    condition: float


def _trace_inner(p, s, lam, method):
    """tr[(I + eta M)^-1 eta dM] with the analytic derivative, plus the condition number."""
    m = assemble_M(p, lam, s, method=method)
    dm = assemble_dM(p, lam, s, method=method)
    tr = 0.0 + 0.0j
    cond = 1.0
    for k, h in m.blocks.items():
        a = np.eye(len(h)) + p.eta * h
        cond = max(cond, np.linalg.cond(a))
        tr += np.trace(np.linalg.solve(a, p.eta * dm.blocks[k]))
    return tr, cond, m, dm


def trace_formula_check(
    p: PhysParams, s: Surface, lam, method: str | None = None, contour_points: int = 32, step_rel: float = 1e-3
) -> TraceReport:
    """Second lambda-derivative of tr[(I + eta M)^-1 eta dM], two ways.

    ``rhs`` is -1/2 of the second derivative computed by the Cauchy
    integral formula on a circle of radius |Im lambda|/2 using the analytic
    dM. ``lhs_proxy`` is the same quantity from central second differences
    with step ``step_rel * |Im lambda|``. ``inner_gap`` compares the inner
    trace built from the analytic dM with one built from a central
    difference of M itself.
    """
    lam = complex(lam)
    if lam.imag == 0.0:
        raise DomainError("trace check needs non-real lambda")
    if p.is_excluded_coupling():
        raise ExcludedCouplingError("excluded coupling eta=+-2c")
    kn.check_resolvent_point(p, lam)
    if p.eta == 0.0:
        return TraceReport(0j, 0j, 0.0, 0.0, 1.0)

    def inner(z):
        tr, cond, _, _ = _trace_inner(p, s, z, method)
        if cond > 1e12:
            raise IllConditionedError(f"I + eta M has condition number {cond:.3e}")
        return tr, cond

    rho = 0.5 * abs(lam.imag)
    th = 2.0 * np.pi * np.arange(contour_points) / contour_points
    vals = np.array([inner(lam + rho * np.exp(1j * t))[0] for t in th])
    # f''(lam) = 2/(2 pi i) oint f(z)/(z - lam)^3 dz, trapezoid on the circle
    d2_contour = 2.0 * np.mean(vals * np.exp(-2j * th)) / rho**2

    h = step_rel * abs(lam.imag)
    f0, cond = inner(lam)
    fp, _ = inner(lam + h)
    fm, _ = inner(lam - h)
    d2_fd = (fp - 2.0 * f0 + fm) / h**2

    rhs = -0.5 * d2_contour
    lhs = -0.5 * d2_fd
    gap = abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny)

    # inner object with dM from a central difference of M
    hm = 1e-5 * abs(lam.imag)
    mp = assemble_M(p, lam + hm, s, method=method)
    mm = assemble_M(p, lam - hm, s, method=method)
    m0 = assemble_M(p, lam, s, method=method)
    tr_fd = 0.0 + 0.0j
    for k, b in m0.blocks.items():
        a = np.eye(len(b)) + p.eta * b
        tr_fd += np.trace(np.linalg.solve(a, p.eta * (mp.blocks[k] - mm.blocks[k]) / (2 * hm)))
    inner_gap = abs(tr_fd - f0) / max(abs(f0), np.finfo(float).tiny)
    return TraceReport(complex(lhs), complex(rhs), float(gap), float(inner_gap), float(cond))


@dataclass(frozen=True)
class CountRow:
    c: float
    eta: float
    distinct: int
    total: int


def eigenvalue_count_experiment(
    p: PhysParams, s: Surface, eta_list, c_list, grid_points: int = 41, method: str | None = None
) -> list[CountRow]:
    """Number of bound states (distinct and with multiplicity) for each (c, eta) pair."""
    rows = []
    for c in c_list:
        pc = p.with_c(c)
        grid = np.linspace(-pc.rest_energy, pc.rest_energy, grid_points)
        curve = scan_curves(pc, s, grid, method=method)
        for eta in eta_list:
            pe = pc.with_eta(eta)
            if pe.is_excluded_coupling():
                raise ExcludedCouplingError(f"excluded coupling eta=+-2c at c={c}")
            found = find_bound_states(pe, s, curve)
            rows.append(CountRow(float(c), float(eta), len(found), sum(b.multiplicity_estimate for b in found)))
    return rows
