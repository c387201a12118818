"""Batch front end: ``solver <validate|run> --config PATH [--threads N] [--out-dir D]``.

Configurations are INI files (see docs/config.md). Data files are written
atomically and contain no timestamps; run metadata goes to ``run.log`` in
the output directory.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, MeshError, SolverError

EXPERIMENTS = ("curves", "bound-states", "nonrel-limit", "trace-check", "certify", "oracle-compare")
SECTIONS = ("physics", "surface", "experiment", "lambda_grid", "nonrel", "trace", "oracle", "certify", "output", "tolerances")

log = logging.getLogger("diracshell.cli")


@dataclass
class RunConfig:
    """Parsed and typed configuration."""

    m: float
    c: float
    eta: float | None
    eta_list: list
    surface: dict
    experiment: str
    lambda_grid: np.ndarray | None
    c_list: list
    spectral_point: complex | None
    kappa_max: int
    out_dir: Path
    tolerances: dict = field(default_factory=dict)
    source: Path | None = None


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _complex(text: str) -> complex:
    return complex(text.replace(" ", "").replace("i", "j"))


def parse_config(path, out_dir=None) -> tuple[RunConfig | None, list[str]]:
    """Parse a configuration; returns the config (or None) and a list of problems."""
    problems: list[str] = []
    path = Path(path)
    if not path.is_file():
        return None, [f"config file not found: {path}"]
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(path.read_text())
    except configparser.Error as exc:
        return None, [f"parse error: {exc}"]
    for sec in cp.sections():
        if sec not in SECTIONS:
            problems.append(f"unknown section [{sec}]")

    def get(sec, key, conv=str, default=None, required=False):
        if not cp.has_option(sec, key):
            if required:
                problems.append(f"missing key {sec}.{key}")
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, TypeError):
            problems.append(f"invalid value for {sec}.{key}: {raw!r}")
            return default

    m = get("physics", "m", float, 1.0)
    c = get("physics", "c", float, 1.0)
    eta = get("physics", "eta", float)
    eta_list = get("physics", "eta_list", _floats, [])
    if m is not None and not m > 0:
        problems.append("physics.m must be positive")
    if c is not None and not c > 0:
        problems.append("physics.c must be positive")
    etas = ([eta] if eta is not None else []) + list(eta_list or [])
    for e in etas:
        if c and math.isclose(abs(e), 2.0 * c, rel_tol=1e-12):
            problems.append(f"excluded coupling η=±2c (eta={e}, c={c}); need η ∈ ℝ \\ {{±2c}}")

    kind = get("surface", "type", str, "sphere")
    surface = {"type": kind, "method": get("surface", "method", str)}
    if kind == "sphere":
        surface["radius"] = get("surface", "radius", float, 1.0)
        surface["n_theta"] = get("surface", "n_theta", int, 12)
        if surface["radius"] is not None and not surface["radius"] > 0:
            problems.append("surface.radius must be positive")
        if surface["n_theta"] is not None and surface["n_theta"] < 4:
            problems.append("surface.n_theta must be >= 4")
    elif kind == "mesh":
        mesh = get("surface", "mesh", str, required=True)
        if mesh is not None:
            mp = Path(mesh)
            if not mp.is_absolute():
                mp = path.parent / mp
            if not mp.is_file():
                problems.append(f"mesh file not found: {mp}")
            surface["mesh"] = str(mp)
    else:
        problems.append(f"surface.type must be sphere or mesh, got {kind!r}")
    if surface["method"] not in (None, "galerkin", "nystrom"):
        problems.append(f"surface.method must be galerkin or nystrom, got {surface['method']!r}")

    experiment = get("experiment", "name", str, required=True)
    if experiment is not None and experiment not in EXPERIMENTS:
        problems.append(f"unknown experiment {experiment!r}; expected one of {', '.join(EXPERIMENTS)}")

    grid = None
    if cp.has_section("lambda_grid"):
        start = get("lambda_grid", "start", float)
        stop = get("lambda_grid", "stop", float)
        points = get("lambda_grid", "points", int, 21)
        if start is None or stop is None:
            problems.append("lambda_grid needs start and stop")
        elif points is None or points < 1:
            problems.append("lambda_grid.points must be >= 1 (empty grid)")
        else:
            grid = np.linspace(start, stop, points)
            if m and c and np.any(np.abs(grid) > m * c * c * (1 + 1e-13)):
                problems.append(f"lambda grid [{start}, {stop}] outside spectral gap [-mc², mc²] = ±{m * c * c}")

    c_list = get("nonrel", "c_list", _floats, [8.0, 16.0, 32.0, 64.0])
    if c_list is not None:
        if not c_list:
            problems.append("nonrel.c_list is empty")
        elif any(b <= a for a, b in zip(c_list, c_list[1:])):
            problems.append("nonrel.c_list must be increasing")
    lam_sec = "nonrel" if experiment == "nonrel-limit" else "trace"
    point = get(lam_sec, "lambda", _complex, 1j if experiment == "nonrel-limit" else 0.3 + 0.5j)
    if experiment in ("nonrel-limit", "trace-check") and point is not None and point.imag == 0.0:
        problems.append(f"{lam_sec}.lambda must be non-real")
    if experiment in ("bound-states", "trace-check", "oracle-compare") and eta is None:
        problems.append("physics.eta is required for this experiment")
    if experiment == "oracle-compare" and kind != "sphere":
        problems.append("oracle-compare needs a sphere")

    tol = {}
    if cp.has_section("tolerances"):
        for key in cp.options("tolerances"):
            v = get("tolerances", key, float)
            if v is not None:
                tol[key] = v
    out = Path(out_dir) if out_dir else Path(get("output", "dir", str, "out"))
    if not out.is_absolute() and not out_dir:
        out = path.parent / out
    cfg = RunConfig(
        m, c, eta, list(eta_list or []), surface, experiment, grid, list(c_list or []), point,
        get("oracle", "kappa_max", int, 3) or 3, out, tol, path,
    )
    return (None if problems else cfg), problems


def validate(config_path) -> list[str]:
    """Diagnostics for a configuration; ``["OK"]`` when it is usable."""
    _, problems = parse_config(config_path)
    return problems or ["OK"]


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise SolverError("non-finite value in output")
    return f"{x:.17g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else _fmt(v)) for v in r])
    return buf.getvalue()


def _check_finite(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v)
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise SolverError("non-finite value in output")


def _json(obj) -> str:
    _check_finite(obj)
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _surface(cfg: RunConfig):
    from .surface import load_mesh, make_sphere

    if cfg.surface["type"] == "sphere":
        return make_sphere(cfg.surface["radius"], cfg.surface["n_theta"])
    return load_mesh(cfg.surface["mesh"])


def _params_dict(cfg: RunConfig, p) -> dict:
    d = {"m": p.m, "c": p.c, "eta": p.eta, "surface": cfg.surface["type"]}
    if cfg.surface["type"] == "sphere":
        d.update(radius=cfg.surface["radius"], n_theta=cfg.surface["n_theta"])
    else:
        d["mesh"] = Path(cfg.surface["mesh"]).name
    return d


def _default_grid(p, points=41):
    return np.linspace(-p.rest_energy, p.rest_energy, points)


def _exp_curves(cfg, p, s, threads):
    from .spectral import scan_curves

    grid = cfg.lambda_grid if cfg.lambda_grid is not None else _default_grid(p, 21)
    curve = scan_curves(p, s, grid, method=cfg.surface["method"], threads=threads)
    rows = [(lam, b, curve.values[i, b]) for i, lam in enumerate(curve.lambda_grid) for b in range(curve.n_branches)]
    _write_atomic(cfg.out_dir / "curves.csv", _csv(["lambda", "branch", "mu"], rows))
    print(f"curves: {len(curve.lambda_grid)} grid points x {curve.n_branches} branches, "
          f"{len(curve.violations)} monotonicity violations")


def _exp_bound_states(cfg, p, s, threads):
    from .spectral import estimate_M0, find_bound_states, scan_curves

    method = cfg.surface["method"]
    grid = cfg.lambda_grid if cfg.lambda_grid is not None else _default_grid(p)
    curve = scan_curves(p, s, grid, method=method, threads=threads)
    found = find_bound_states(p, s, curve, xtol=cfg.tolerances.get("xtol", 1e-12))
    m0 = estimate_M0(p, s, method=method)
    data = {
        "params": _params_dict(cfg, p),
        "bound_states": [
            {"lambda": b.lambda_star, "branch": b.branch_index, "residual": b.residual,
             "multiplicity": b.multiplicity_estimate}
            for b in found
        ],
        "m0_estimate": m0.value,
    }
    _write_atomic(cfg.out_dir / "bound_states.json", _json(data))
    print(f"bound-states: {len(found)} distinct, M0 estimate {m0.value:.6g}")


def _exp_nonrel(cfg, p, s, threads):
    from .resolvent import nonrel_limit_experiment
    from .volume import VolumeGrid

    spin = np.array([1.0, 0.5j, 0.2, 0.0])
    center = np.array([0.0, 0.0, 0.3])

    def f(y):
        return np.exp(-np.sum((y - center) ** 2, axis=-1) / 0.25)[..., None] * spin

    a = s.descriptor.radius if s.is_sphere else 1.0
    targets = _nonrel_targets(a)
    vol = VolumeGrid(center=tuple(center), half_width=2.5, radial_order=6, angular_order=8, panels=4)
    eta = p.eta if cfg.eta is not None else 0.0
    table = nonrel_limit_experiment(p.m, eta, cfg.spectral_point, cfg.c_list, s, f, targets, vol,
                                    method=cfg.surface["method"])
    rows = [(r.c, r.deviation_M, r.deviation_resolvent) for r in table.rows]
    _write_atomic(cfg.out_dir / "nonrel.csv", _csv(["c", "deviation_M", "deviation_resolvent"], rows))
    print(f"nonrel-limit: slope_M {table.slope_M:.4f}, slope_resolvent {table.slope_resolvent:.4f}")


def _nonrel_targets(a: float) -> np.ndarray:
    """Eight fixed targets, four inside and four outside the shell."""
    dirs = np.array([[1, 1, 1], [-1, 1, -1], [1, -1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3.0)
    return np.concatenate([0.5 * a * dirs, 1.6 * a * dirs])


def _exp_trace(cfg, p, s, threads):
    from .spectral import trace_formula_check

    rep = trace_formula_check(p, s, cfg.spectral_point, method=cfg.surface["method"])
    data = {
        "params": _params_dict(cfg, p),
        "lambda": [cfg.spectral_point.real, cfg.spectral_point.imag],
        "rhs": [rep.rhs.real, rep.rhs.imag],
        "lhs_proxy": [rep.lhs_proxy.real, rep.lhs_proxy.imag],
        "relative_gap": rep.relative_gap,
        "inner_gap": rep.inner_gap,
        "condition": rep.condition,
    }
    _write_atomic(cfg.out_dir / "trace_check.json", _json(data))
    print(f"trace-check: relative gap {rep.relative_gap:.3e}")


def _exp_certify(cfg, p, s, threads):
    from .schur import certify_gamma0, certify_M0, certify_R0

    certs = [certify_M0(p, s), certify_gamma0(p, s), certify_R0(p)]
    _write_atomic(cfg.out_dir / "certificates.json", _json([c.as_dict() for c in certs]))
    ok = all(c.holds for c in certs)
    print(f"certify: {len(certs)} certificates, all hold: {ok}")
    if not ok:
        raise SolverError("a discrete norm exceeds its certificate")


def _exp_oracle(cfg, p, s, threads):
    from .radial import sphere_bound_states_radial
    from .spectral import find_bound_states, scan_curves

    grid = cfg.lambda_grid if cfg.lambda_grid is not None else _default_grid(p)
    curve = scan_curves(p, s, grid, method=cfg.surface["method"], threads=threads)
    found = find_bound_states(p, s, curve, xtol=cfg.tolerances.get("xtol", 1e-12))
    roots = sphere_bound_states_radial(s.descriptor.radius, p, cfg.kappa_max)
    tol = cfg.tolerances.get("oracle_tol", 5e-3)
    rows = []
    for b in found:
        near = min(roots, key=lambda r: abs(r.lambda_star - b.lambda_star)) if roots else None
        d = abs(near.lambda_star - b.lambda_star) if near else float("inf")
        rows.append({"lambda": b.lambda_star, "oracle_lambda": near.lambda_star if near else 0.0,
                     "kappa": near.kappa if near else 0, "abs_diff": d if near else 0.0,
                     "multiplicity": b.multiplicity_estimate, "within_tol": bool(near and d <= tol)})
    data = {"params": _params_dict(cfg, p), "tolerance": tol, "roots": rows,
            "oracle_roots": [{"kappa": r.kappa, "lambda": r.lambda_star, "degeneracy": r.degeneracy} for r in roots]}
    _write_atomic(cfg.out_dir / "oracle_compare.json", _json(data))
    worst = max((r["abs_diff"] for r in rows), default=0.0)
    print(f"oracle-compare: {len(rows)} roots, worst |dlambda| {worst:.3e}")


RUNNERS = {
    "curves": _exp_curves,
    "bound-states": _exp_bound_states,
    "nonrel-limit": _exp_nonrel,
    "trace-check": _exp_trace,
    "certify": _exp_certify,
    "oracle-compare": _exp_oracle,
}


def run(config_path, threads: int = 1, out_dir=None) -> int:
    """Execute the configured experiment; returns the process exit code."""
    from .kernels import PhysParams

    cfg, problems = parse_config(config_path, out_dir)
    if cfg is None:
        for msg in problems:
            print(f"config error: {msg}", file=sys.stderr)
        return 1
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(cfg.out_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        log.info("config %s experiment %s threads %d", cfg.source, cfg.experiment, threads)
        try:
            s = _surface(cfg)
            p = PhysParams(cfg.m, cfg.c, cfg.eta if cfg.eta is not None else 0.0)
        except (MeshError, DomainError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            log.error("config error: %s", exc)
            return 1
        t0 = time.perf_counter()
        try:
            RUNNERS[cfg.experiment](cfg, p, s, threads)
        except (SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            log.error("numerical failure: %s", exc)
            return 2
        log.info("finished in %.3f s", time.perf_counter() - t0)
        return 0
    finally:
        log.removeHandler(handler)
        handler.close()


def _threads(arg) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("SOLVER_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="solver", description="Delta-shell Dirac spectral solver")
    parser.add_argument("command", choices=("validate", "run"))
    parser.add_argument("--config", required=True)
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: $SOLVER_THREADS or 1)")
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args(argv)
    if args.command == "validate":
        diags = validate(args.config)
        for d in diags:
            print(d)
        return 0
    return run(args.config, threads=_threads(args.threads), out_dir=args.out_dir)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
