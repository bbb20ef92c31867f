"""Batch front end: declarative configs in, deterministic artifacts out.

A run reads one JSON config describing a system (or a constrained
finite-dimensional problem), dispatches to the library, and writes
three files into the output directory: <command>.csv with the sampled
series (first column always t), <command>.json with scalar results and
diagnostics, and provenance.json with the config hash, package version
and wall time. Everything except the wall-time field is byte-exact
across repeated runs of the same config, which is what the golden-file
tests pin. Failures leave no partial artifacts: files are staged next
to their target and renamed into place, and errors land in a separate
error.json with the exit code the process then returns (2 for config
problems, 3 for numerical ones).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys as _sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__, analysis, core, lderiv, maslov
from .curve import GrassmannCurve
from .curve import curvature as curve_curvature
from .errors import GeometryError
from .hamflow import (
    DenseFlow,
    HamiltonianSystem,
    curvature_operator_field,
    flow,
    jacobi_curve,
    metric_system,
    polynomial_system,
    quadratic_potential_system,
    reduced_jacobi_curve,
)

COMMANDS = ("flow", "jacobi", "curvature", "conjugate", "morse", "maslov",
            "reduce", "compare", "hyperbolic", "lderiv")

FLOAT_FMT = "%.17g"


class ValidationFailure(Exception):
    """Config rejected before dispatch; carries the diagnostic list."""

    def __init__(self, diagnostics: List[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class Series:
    columns: Tuple[str, ...]
    rows: np.ndarray  # (k, len(columns))


@dataclass(frozen=True)
class RunResult:
    command: str
    scalars: Dict[str, object]
    series: Series
    diagnostics: Tuple[str, ...]
    provenance: Dict[str, object]


# ---------------------------------------------------------------- validation


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) \
        and math.isfinite(float(x))


def _check_terms(terms, nvars: int, label: str, out: List[str]):
    if not isinstance(terms, list) or not terms:
        out.append(f"{label} must be a nonempty list of [coeff, exponents]")
        return
    for item in terms:
        if (not isinstance(item, list) or len(item) != 2
                or not _is_num(item[0]) or not isinstance(item[1], list)):
            out.append(f"{label} entries must be [coeff, exponent list]")
            return
        if len(item[1]) != nvars or any(
                not isinstance(e, int) or isinstance(e, bool) or e < 0
                for e in item[1]):
            out.append(f"{label} exponent lists need {nvars} nonnegative "
                       "integers")
            return


def _check_matrix(mat, n: int, label: str, out: List[str],
                  symmetric: bool = True):
    try:
        arr = np.asarray(mat, dtype=float)
    except (TypeError, ValueError):
        out.append(f"{label} is not a numeric table")
        return
    if arr.shape != (n, n):
        out.append(f"{label} must be {n}x{n}")
        return
    if not np.all(np.isfinite(arr)):
        out.append(f"{label} has non-finite entries")
        return
    if symmetric and np.abs(arr - arr.T).max(initial=0.0) > 1e-12:
        out.append(f"{label} must be symmetric")


def _validate_system(config: dict, out: List[str]):
    sys_cfg = config.get("system")
    if not isinstance(sys_cfg, dict):
        out.append("missing system table")
        return
    family = sys_cfg.get("family")
    if family not in ("natural", "metric", "custom"):
        out.append("system.family must be natural, metric or custom")
        return
    n = sys_cfg.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        out.append("system.n must be an integer >= 1")
        return
    if family == "natural":
        pot = sys_cfg.get("potential")
        if not isinstance(pot, dict) or ("k" in pot) == ("terms" in pot):
            out.append("natural system needs potential.k or potential.terms, "
                       "not both")
        elif "k" in pot:
            _check_matrix(pot["k"], n, "potential.k", out)
        else:
            _check_terms(pot["terms"], n, "potential.terms", out)
    elif family == "metric":
        met = sys_cfg.get("metric")
        if not isinstance(met, dict) or "g" not in met:
            out.append("metric system needs metric.g")
        else:
            _check_matrix(met["g"], n, "metric.g", out)
        pot = sys_cfg.get("potential")
        if pot is not None:
            if not isinstance(pot, dict) or "k" not in pot:
                out.append("metric potential supports only a quadratic "
                           "table potential.k")
            else:
                _check_matrix(pot["k"], n, "potential.k", out)
    else:
        ham = sys_cfg.get("hamiltonian")
        if not isinstance(ham, dict) or "terms" not in ham:
            out.append("custom system needs hamiltonian.terms")
        else:
            _check_terms(ham["terms"], 2 * n, "hamiltonian.terms", out)
    initial = config.get("initial")
    if (not isinstance(initial, list) or len(initial) != 2 * n
            or not all(_is_num(v) for v in initial)):
        out.append(f"initial must list 2n = {2 * n} finite numbers")
    for key in ("horizon", "step"):
        val = config.get(key)
        if not _is_num(val) or val <= 0:
            out.append(f"{key} must be positive")
    if _is_num(config.get("horizon")) and _is_num(config.get("step")) \
            and config["step"] > config["horizon"]:
        out.append("step must not exceed horizon")


def _validate_problem(config: dict, out: List[str]):
    prob = config.get("problem")
    if not isinstance(prob, dict):
        out.append("lderiv needs a problem table")
        return
    dim_w, m = prob.get("dim_w"), prob.get("m")
    for label, val in (("problem.dim_w", dim_w), ("problem.m", m)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 1:
            out.append(f"{label} must be an integer >= 1")
            return
    obj = prob.get("objective")
    if not isinstance(obj, dict) or "terms" not in obj:
        out.append("problem.objective.terms is required")
    else:
        _check_terms(obj["terms"], dim_w, "objective.terms", out)
    cons = prob.get("constraints")
    if not isinstance(cons, list) or len(cons) != m:
        out.append(f"problem.constraints must list m = {m} term tables")
    else:
        for k, con in enumerate(cons):
            if not isinstance(con, dict) or "terms" not in con:
                out.append(f"constraints[{k}].terms is required")
            else:
                _check_terms(con["terms"], dim_w,
                             f"constraints[{k}].terms", out)
    point = config.get("point")
    if not isinstance(point, dict):
        out.append("lderiv needs a point table with w and zeta")
        return
    w, zeta = point.get("w"), point.get("zeta")
    if not isinstance(w, list) or len(w) != dim_w \
            or not all(_is_num(v) for v in w):
        out.append(f"point.w must list {dim_w} finite numbers")
    if not isinstance(zeta, list) or len(zeta) != m \
            or not all(_is_num(v) for v in zeta):
        out.append(f"point.zeta must list {m} finite numbers")


def validate(config: dict, command: Optional[str] = None) -> List[str]:
    """Schema and semantic checks; an empty list means runnable."""
    out: List[str] = []
    if not isinstance(config, dict):
        return ["config root must be a table"]
    if command == "lderiv":
        _validate_problem(config, out)
    else:
        _validate_system(config, out)
    tol = config.get("tolerances", {})
    if not isinstance(tol, dict):
        out.append("tolerances must be a table")
    else:
        for key in ("rank_tol", "energy_tol", "symp_tol", "fd_step"):
            if key in tol and (not _is_num(tol[key]) or tol[key] <= 0):
                out.append(f"tolerances.{key} must be positive")
    seed = config.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        out.append("seed must be an integer")
    opts = config.get("options", {})
    if not isinstance(opts, dict):
        out.append("options must be a table")
    if command == "reduce" and isinstance(config.get("system"), dict):
        if config["system"].get("n") == 1:
            out.append("reduce is trivial for n=1: the quotient by the "
                       "flow direction is a point")
    try:
        if json.loads(json.dumps(config)) != config:
            out.append("config does not round-trip through serialization")
    except (TypeError, ValueError):
        out.append("config contains non-serializable values")
    return out


# -------------------------------------------------------------- construction


def build_system(config: dict) -> HamiltonianSystem:
    sys_cfg = config["system"]
    family, n = sys_cfg["family"], int(sys_cfg["n"])
    if family == "natural":
        pot = sys_cfg["potential"]
        if "k" in pot:
            return quadratic_potential_system(np.asarray(pot["k"],
                                                         dtype=float))
        terms = [(0.5, tuple(2 if j == i else 0 for j in range(2 * n)))
                 for i in range(n)]
        for coeff, exps in pot["terms"]:
            terms.append((float(coeff),
                          tuple([0] * n + [int(e) for e in exps])))
        return polynomial_system(n, terms, family="natural")
    if family == "metric":
        g_mat = np.asarray(sys_cfg["metric"]["g"], dtype=float)
        pot = sys_cfg.get("potential")
        kwargs = dict(g=lambda y: g_mat,
                      dg=lambda y: np.zeros((n, n, n)),
                      d2g=lambda y: np.zeros((n, n, n, n)))
        if pot is not None:
            k_mat = np.asarray(pot["k"], dtype=float)
            kwargs.update(u_value=lambda y: 0.5 * float(y @ k_mat @ y),
                          u_grad=lambda y: k_mat @ y,
                          u_hess=lambda y: k_mat)
        return metric_system(n, **kwargs)
    terms = [(float(c), tuple(int(e) for e in exps))
             for c, exps in sys_cfg["hamiltonian"]["terms"]]
    return polynomial_system(n, terms)


def _poly_val(terms, w: np.ndarray) -> float:
    total = 0.0
    for coeff, exps in terms:
        total += float(coeff) * float(np.prod(w ** np.asarray(exps)))
    return total


def build_problem(config: dict):
    prob = config["problem"]
    dim_w, m = int(prob["dim_w"]), int(prob["m"])
    obj_terms = [tuple(t) for t in prob["objective"]["terms"]]
    con_terms = [[tuple(t) for t in con["terms"]]
                 for con in prob["constraints"]]
    problem = lderiv.FiniteProblem(
        dim_w=dim_w, m=m,
        j_value=lambda w: _poly_val(obj_terms, np.asarray(w, dtype=float)),
        phi_value=lambda w: np.array(
            [_poly_val(ct, np.asarray(w, dtype=float)) for ct in con_terms]))
    point = lderiv.LagrangianPoint(
        w=np.asarray(config["point"]["w"], dtype=float),
        zeta=np.asarray(config["point"]["zeta"], dtype=float))
    return problem, point


# ------------------------------------------------------------------ runners


def _frame_row(frame: core.LagrangianFrame) -> np.ndarray:
    proj = frame.columns @ frame.columns.T
    return proj.ravel()


def _mat_headers(name: str, shape: Tuple[int, int]) -> List[str]:
    return [f"{name}[{i}][{j}]"
            for i in range(shape[0]) for j in range(shape[1])]


def _subsample(count: int, want: int) -> np.ndarray:
    return np.unique(np.linspace(0, count - 1,
                                 min(count, want)).astype(int))


def _run_flow(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    traj = flow(sysn, z0, config["horizon"], config["step"])
    idx = _subsample(len(traj.times), int(opts.get("samples", 201)))
    rows = np.column_stack([traj.times[idx], traj.states[idx],
                            traj.energies[idx]])
    cols = ["t"] + [f"z[{i}]" for i in range(2 * sysn.n)] + ["energy"]
    scalars = {"energy_drift": traj.energy_drift,
               "final_norm": float(np.linalg.norm(traj.states[-1]))}
    return scalars, Series(tuple(cols), rows), []


def _run_jacobi(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    horizon = float(config["horizon"])
    jc = jacobi_curve(sysn, z0, horizon, config["step"])
    ts = np.linspace(0.0, horizon, int(opts.get("samples", 101)))
    rows = np.array([np.concatenate([[t], _frame_row(jc.eval(t))])
                     for t in ts])
    n2 = 2 * sysn.n
    cols = ["t"] + _mat_headers("proj", (n2, n2))
    return {"n": sysn.n, "horizon": horizon}, Series(tuple(cols), rows), []


def _run_curvature(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    horizon = float(config["horizon"])
    dense = DenseFlow(sysn, z0, horizon, config["step"])
    ts = np.linspace(0.0, horizon, int(opts.get("samples", 101)))
    n = sysn.n
    rows = []
    for t in ts:
        z = dense.state(t)
        r = curvature_operator_field(sysn, (z[:n], z[n:]))
        rows.append(np.concatenate([[t], r.ravel()]))
    r0 = np.asarray(rows[0][1:]).reshape(n, n)
    eigs = np.sort(np.linalg.eigvals(r0).real)
    cols = ["t"] + _mat_headers("r", (n, n))
    scalars = {"eig_min_t0": float(eigs[0]), "eig_max_t0": float(eigs[-1])}
    return scalars, Series(tuple(cols), np.array(rows)), []


def _conjugate_series(pts) -> Series:
    rows = np.array([[p.t, float(p.multiplicity)] for p in pts]) \
        if pts else np.zeros((0, 2))
    return Series(("t", "multiplicity"), rows)


def _run_conjugate(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    jc = jacobi_curve(sysn, z0, config["horizon"], config["step"])
    pts = maslov.conjugate_points(jc, core.vertical_frame(jc.space),
                                  seed=seed)
    scalars = {"count": len(pts),
               "index": int(sum(p.multiplicity for p in pts))}
    return scalars, _conjugate_series(pts), []


def _run_morse(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    out = analysis.morse_pipeline(sysn, z0, config["horizon"],
                                  config["step"], trim=opts.get("trim"))
    scalars = {"index": out.index, "trimmed_maslov": out.trimmed_maslov,
               "trim": out.trim, "legendre_sign": out.legendre.sign}
    return scalars, _conjugate_series(out.conjugate_points), []


def _run_maslov(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    horizon = float(config["horizon"])
    jc = jacobi_curve(sysn, z0, horizon, config["step"])
    t0 = float(opts.get("t0", 0.01 * horizon))
    t1 = float(opts.get("t1", horizon))
    sub = GrassmannCurve(space=jc.space, eval=jc.eval, domain=(t0, t1))
    rep = maslov.maslov_index(sub, core.vertical_frame(jc.space), seed=seed)
    rows = np.asarray(rep.subdivision, dtype=float).reshape(-1, 1)
    scalars = {"value": rep.value, "charts_used": rep.charts_used,
               "pieces": len(rep.subdivision) - 1,
               "endpoint_transversal": rep.endpoint_transversal}
    return scalars, Series(("t",), rows), []


def _run_reduce(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    rep = analysis.reduction_comparison(sysn, z0, config["horizon"],
                                        config["step"],
                                        trim=opts.get("trim"))
    rows = np.asarray(rep.samples, dtype=float).reshape(-1, 1)
    scalars = {"mu_full": rep.mu_full, "mu_reduced": rep.mu_reduced,
               "dominance_defect": rep.dominance_defect,
               "rank_excess": rep.rank_excess,
               "graze_margin": rep.graze_margin}
    return scalars, Series(("t",), rows), []


def _run_compare(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    rep = analysis.comparison_check(sysn, z0, config["horizon"],
                                    config["step"])
    rows = np.column_stack([rep.conjugate_times,
                            np.asarray(rep.multiplicities, dtype=float)]) \
        if rep.conjugate_times else np.zeros((0, 2))
    scalars = {"eig_upper": rep.eig_upper, "trace_lower": rep.trace_lower,
               "min_gap": rep.min_gap, "bound_gap": rep.bound_gap,
               "bound_hit": rep.bound_hit,
               "gap_bound_ok": rep.gap_bound_ok,
               "window_bound_ok": rep.window_bound_ok}
    return scalars, Series(("t", "multiplicity"), rows), []


def _run_hyperbolic(sysn, config, opts, seed):
    z0 = np.asarray(config["initial"], dtype=float)
    horizon = float(config["horizon"])
    reduced = bool(opts.get("reduced", False))
    cert = analysis.certify_negative_curvature(sysn, z0, horizon,
                                               config["step"],
                                               reduced=reduced)
    n = sysn.n
    ts = np.linspace(0.0, horizon, int(opts.get("samples", 33)))
    if reduced:
        rc = reduced_jacobi_curve(sysn, z0, horizon, config["step"])
        tops = [float(np.linalg.eigvals(
            curve_curvature(rc, t).matrix).real.max()) for t in ts]
    else:
        dense = DenseFlow(sysn, z0, horizon, config["step"])
        tops = []
        for t in ts:
            z = dense.state(t)
            r = curvature_operator_field(sysn, (z[:n], z[n:]))
            tops.append(float(np.linalg.eigvals(r).real.max()))
    rows = np.column_stack([ts, tops])
    scalars = {"kind": cert.kind, "max_eig": cert.max_eig,
               "alpha_estimate": cert.alpha_estimate,
               "verdict": cert.verdict, "margin": cert.margin,
               "equilibrium_count": len(cert.equilibria)}
    return scalars, Series(("t", "eig_top"), rows), list(cert.diagnostics)


def _run_lderiv(config, opts, seed):
    problem, point = build_problem(config)
    residual = lderiv.stationarity_residual(problem, point)
    data = lderiv.lderiv_data(problem, point)
    form = lderiv.hessian_on_kernel(problem, point)
    ine = core.inertia(form.matrix)
    frame = lderiv.l_derivative(data)
    dual = lderiv.duality_check(data)
    m2 = 2 * data.m
    rows = np.concatenate([[0.0], _frame_row(frame)]).reshape(1, -1)
    cols = ["t"] + _mat_headers("proj", (m2, m2))
    scalars = {"residual": residual,
               "kernel_pos": ine.pos, "kernel_neg": ine.neg,
               "kernel_zero": ine.zero,
               "hessian_nondegenerate": dual.hessian_nondegenerate,
               "transversal_to_fiber": dual.transversal_to_fiber,
               "fd_fallback": problem.fd_fallback}
    return scalars, Series(tuple(cols), rows), []


_RUNNERS = {"flow": _run_flow, "jacobi": _run_jacobi,
            "curvature": _run_curvature, "conjugate": _run_conjugate,
            "morse": _run_morse, "maslov": _run_maslov,
            "reduce": _run_reduce, "compare": _run_compare,
            "hyperbolic": _run_hyperbolic}


# ------------------------------------------------------------ serialization


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    return value


def render_csv(series: Series) -> bytes:
    lines = [",".join(series.columns)]
    for row in series.rows:
        lines.append(",".join(FLOAT_FMT % v for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def render_json(payload: dict) -> bytes:
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    return (text + "\n").encode("utf-8")


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_outputs(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": result.command,
               "scalars": {k: _jsonable(v)
                           for k, v in result.scalars.items()},
               "diagnostics": list(result.diagnostics)}
    _atomic_write(out / f"{result.command}.csv", render_csv(result.series))
    _atomic_write(out / f"{result.command}.json", render_json(payload))
    _atomic_write(out / "provenance.json", render_json(result.provenance))
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()


def write_error(out_dir, command: str, exit_code: int, kind: str,
                detail) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "exit_code": exit_code,
              "error": {"type": kind, "detail": detail}}
    _atomic_write(out / "error.json", render_json(record))


# ---------------------------------------------------------------- dispatch


def run(config: dict, command: str, seed: Optional[int] = None,
        parallel: bool = False) -> RunResult:
    """Validate, dispatch and collect one command's results.

    The seed argument overrides config["seed"] before hashing, so the
    provenance hash always reflects what actually ran. parallel is
    accepted for config compatibility and recorded; v1 has no sweep
    commands, so orchestration stays single-threaded.
    """
    diagnostics = validate(config, command)
    if diagnostics:
        raise ValidationFailure(diagnostics)
    config = dict(config)
    if seed is not None:
        config["seed"] = seed
    eff_seed = int(config.get("seed", 0))
    start = time.perf_counter()
    if command == "lderiv":
        scalars, series, notes = _run_lderiv(config,
                                             config.get("options", {}),
                                             eff_seed)
    else:
        sysn = build_system(config)
        scalars, series, notes = _RUNNERS[command](
            sysn, config, config.get("options", {}), eff_seed)
    if parallel:
        notes = list(notes) + ["parallel requested; single-threaded run"]
    provenance = {"command": command, "config_sha256": config_hash(config),
                  "version": __version__,
                  "wall_time_s": time.perf_counter() - start}
    return RunResult(command=command, scalars=scalars, series=series,
                     diagnostics=tuple(notes), provenance=provenance)


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lagrass",
        description="Jacobi-curve geometry runs from declarative configs")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--parallel", action="store_true")
    args = parser.parse_args(argv)

    try:
        config = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        write_error(args.out, args.command, 2, "ConfigUnreadable", str(exc))
        print(f"error: cannot read config: {exc}", file=_sys.stderr)
        return 2

    try:
        result = run(config, args.command, seed=args.seed,
                     parallel=args.parallel)
    except ValidationFailure as exc:
        write_error(args.out, args.command, 2, "ValidationFailure",
                    exc.diagnostics)
        for line in exc.diagnostics:
            print(f"invalid config: {line}", file=_sys.stderr)
        return 2
    except (GeometryError, ArithmeticError, ValueError,
            np.linalg.LinAlgError) as exc:
        write_error(args.out, args.command, 3, type(exc).__name__, str(exc))
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=_sys.stderr)
        return 3

    write_outputs(result, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
