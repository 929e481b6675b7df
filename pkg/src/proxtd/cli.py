"""Command line driver: problem generation, runs, comparisons, verification.

Subcommands:
    gen      write a problem JSON file (spectrum | chain | piecewise | nonlinear)
    run      solve a problem with one method; writes a trace CSV + summary JSON
    compare  run several methods on one problem; writes a merged report CSV
    verify   run the built-in invariant suites, or spot-check a trace file

Exit codes: 0 ok, 2 not converged, 3 assumption violated, 4 singular matrix,
5 bad input. Outputs are byte-stable for a fixed (config, problem, seed): the
trace column ``wall_ns`` is written as 0 to keep files reproducible (wall
time goes to stderr instead).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import verify as verify_mod
from .errors import (
    AssumptionViolated,
    BadInput,
    InnerNotConverged,
    NoConvergence,
    ProxTDError,
    SingularMatrix,
)
from .galerkin import (
    assemble_lowdim,
    lspe_iterate,
    lstd_solve,
    prox_projected_iterate,
)
from .linalg import inf_norm
from .mcsim import (
    run_estimation,
    run_td_lambda,
    sample_trajectory,
    sim_lspe_step,
    sim_lstd,
    sim_prox_step,
)
from .nonlinear import SplitProblem, fbs_solve, prox_solve
from .problems import Problem, gen_problem, load_problem, save_problem
from .proxmulti import MultistepParam, apply_T, geometric_rate, solve_fixed_point
from .pwlinear import (
    brute_force_xstar,
    contraction_modulus,
    monotone_solve,
    pw_apply,
    randomized_solve,
)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_ASSUMPTION = 3
EXIT_SINGULAR = 4
EXIT_BAD_INPUT = 5

LINEAR_METHODS = ("plainT", "proximal", "multistep", "gamma", "vm")
CHAIN_METHODS = (
    "lstd",
    "lspe",
    "lspe-interp",
    "proxproj",
    "proxproj-extra",
    "sim-lstd",
    "sim-lspe",
    "sim-prox",
    "sim-prox-extra",
    "td",
)
PIECEWISE_METHODS = ("monotone", "randomized")
NONLINEAR_METHODS = ("prox", "extraprox", "fbs", "fbs-extra")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RunConfig:
    """Validated method selection plus every tunable knob."""

    method: str
    lam: float = 0.5
    gamma: float = 0.5
    chat: float = 1.0
    m_steps: int = 5
    prob: float = 0.2
    alpha: float = 1.0
    tol: float = 1e-10
    max_iter: int = 100_000
    seed: int = 0
    samples: int = 200_000
    out: str | None = None
    dump_iterates: bool = False

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise BadInput(f"lambda must lie in (0,1), got {self.lam}")
        if self.gamma < 0.0:
            raise BadInput(f"gamma must be >= 0, got {self.gamma}")
        if self.chat <= 0.0:
            raise BadInput(f"chat must be > 0, got {self.chat}")
        if not 0.0 < self.prob < 1.0:
            raise BadInput(f"p must lie in (0,1), got {self.prob}")
        if self.alpha <= 0.0:
            raise BadInput(f"alpha must be > 0, got {self.alpha}")
        if self.m_steps < 1:
            raise BadInput(f"m must be >= 1, got {self.m_steps}")
        if self.tol <= 0.0 or self.max_iter < 0 or self.samples < 1:
            raise BadInput("tol must be positive; max-iter and samples nonnegative")


@dataclass
class RunResult:
    """Everything a run produced, ready for the CSV/JSON writers."""

    method: str
    iter_column: list
    residuals: list
    iterates: list
    space: str  # "x" or "r"
    converged: bool
    errors: list | None = None
    system: dict | None = None  # C, d used for r-space residuals
    oracle_norm: float | None = None
    flags: tuple = ()

    @property
    def measured_rate(self) -> float:
        return geometric_rate(self.residuals)

    @property
    def final_error(self) -> float | None:
        return self.errors[-1] if self.errors else None

    @property
    def final_error_rel(self) -> float | None:
        if self.final_error is None or not self.oracle_norm:
            return None
        return self.final_error / self.oracle_norm


def _trace_result(method, trace, oracle=None, space="x", system=None, iter_column=None):
    errors = None
    oracle_norm = None
    if oracle is not None:
        errors = [float(inf_norm(x - oracle)) for x in trace.iterates]
        oracle_norm = float(inf_norm(oracle))
    return RunResult(
        method,
        list(iter_column) if iter_column is not None else list(range(len(trace.iterates))),
        [float(r) for r in trace.residuals],
        [np.asarray(x, dtype=float) for x in trace.iterates],
        space,
        trace.converged,
        errors,
        system,
        oracle_norm,
        trace.flags,
    )


def _checkpoints(total: int, count: int = 20) -> list:
    marks = sorted({max(1, (total * k) // count) for k in range(1, count + 1)})
    return marks


def _run_linear(problem: Problem, cfg: RunConfig) -> RunResult:
    m = problem.affine_map()
    p = MultistepParam(cfg.lam)
    trace = solve_fixed_point(
        m,
        cfg.method,
        p,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        gamma=cfg.gamma,
        m_steps=cfg.m_steps,
    )
    return _trace_result(cfg.method, trace, oracle=m.fixed_point)


def _run_chain(problem: Problem, cfg: RunConfig) -> RunResult:
    m = problem.affine_map()
    chain = problem.chain()
    spec = problem.projection()
    p = MultistepParam(cfg.lam)
    sys_exact = assemble_lowdim(m, spec, p)
    r_exact = lstd_solve(sys_exact)
    sysdict = {"C": sys_exact.C, "d": sys_exact.d}

    def exact_residual(r):
        return float(inf_norm(sys_exact.C @ r - sys_exact.d))

    oracle_norm = float(inf_norm(r_exact))

    if cfg.method == "lstd":
        return RunResult(
            cfg.method,
            [0],
            [exact_residual(r_exact)],
            [r_exact],
            "r",
            True,
            [0.0],
            sysdict,
            oracle_norm,
        )

    if cfg.method in ("lspe", "lspe-interp", "proxproj", "proxproj-extra"):
        r = np.zeros(spec.s)
        iterates = [r.copy()]
        residuals = [exact_residual(r)]
        while residuals[-1] > cfg.tol and len(iterates) - 1 < cfg.max_iter:
            if cfg.method == "lspe":
                r = lspe_iterate(sys_exact, r)
            elif cfg.method == "lspe-interp":
                r = lspe_iterate(sys_exact, r, interpolated=True)
            else:
                r = prox_projected_iterate(
                    sys_exact, cfg.chat, r, extrapolated=cfg.method.endswith("extra")
                )
            iterates.append(r.copy())
            residuals.append(exact_residual(r))
        errors = [float(inf_norm(x - r_exact)) for x in iterates]
        return RunResult(
            cfg.method,
            list(range(len(iterates))),
            residuals,
            iterates,
            "r",
            residuals[-1] <= cfg.tol,
            errors,
            sysdict,
            oracle_norm,
        )

    if cfg.method == "sim-lstd":
        idx = sample_trajectory(chain, cfg.samples, cfg.seed)
        state = None
        iterates, residuals, counts = [], [], []
        prev = 0
        for mark in _checkpoints(cfg.samples):
            state = run_estimation(
                m, spec, chain, mark - prev, lam=cfg.lam, state=state, trajectory=idx[prev : mark + 1]
            )
            prev = mark
            try:
                r = sim_lstd(state)
            except SingularMatrix:
                if mark == cfg.samples:
                    raise
                continue
            iterates.append(r)
            residuals.append(exact_residual(r))
            counts.append(mark)
        errors = [float(inf_norm(x - r_exact)) for x in iterates]
        return RunResult(
            cfg.method, counts, residuals, iterates, "r", True, errors, sysdict, oracle_norm
        )

    if cfg.method in ("sim-lspe", "sim-prox", "sim-prox-extra"):
        state = run_estimation(m, spec, chain, cfg.samples, lam=cfg.lam, seed=cfg.seed)

        def est_residual(r):
            return float(inf_norm(state.chat @ r - state.dhat))

        r = np.zeros(spec.s)
        iterates = [r.copy()]
        residuals = [est_residual(r)]
        while residuals[-1] > cfg.tol and len(iterates) - 1 < cfg.max_iter:
            if cfg.method == "sim-lspe":
                r = sim_lspe_step(state, r)
            else:
                r = sim_prox_step(state, r, cfg.chat, extrapolated=cfg.method.endswith("extra"))
            iterates.append(r.copy())
            residuals.append(est_residual(r))
        errors = [float(inf_norm(x - r_exact)) for x in iterates]
        est_sys = {"C": state.chat, "d": state.dhat}
        return RunResult(
            cfg.method,
            list(range(len(iterates))),
            residuals,
            iterates,
            "r",
            residuals[-1] <= cfg.tol,
            errors,
            est_sys,
            oracle_norm,
        )

    if cfg.method == "td":
        every = max(1, cfg.samples // 100)
        td, history = run_td_lambda(
            m, spec, chain, cfg.lam, cfg.samples, seed=cfg.seed, record_every=every
        )
        counts = [t for t, _ in history]
        iterates = [r for _, r in history]
        if not history or counts[-1] != cfg.samples:
            counts.append(cfg.samples)
            iterates.append(td.r.copy())
        residuals = [exact_residual(r) for r in iterates]
        errors = [float(inf_norm(x - r_exact)) for x in iterates]
        return RunResult(
            cfg.method, counts, residuals, iterates, "r", True, errors, sysdict, oracle_norm
        )

    raise BadInput(f"method {cfg.method!r} does not apply to chain problems")


def _default_upper_start(pm) -> np.ndarray:
    rho = contraction_modulus(pm)
    if rho >= 1.0:
        return np.full(pm.n, 1.0)
    height = max(inf_norm(c.b) for c in pm.components) / (1.0 - rho) + 1.0
    return np.full(pm.n, height)


def _run_piecewise(problem: Problem, cfg: RunConfig) -> RunResult:
    pm = problem.piecewise()
    p = MultistepParam(cfg.lam)
    x0 = _default_upper_start(pm)
    if cfg.method == "monotone":
        trace = monotone_solve(pm, p, x0, tol=cfg.tol, max_iter=cfg.max_iter)
    elif cfg.method == "randomized":
        trace = randomized_solve(pm, p, cfg.prob, cfg.seed, x0, tol=cfg.tol, max_iter=cfg.max_iter)
    else:
        raise BadInput(f"method {cfg.method!r} does not apply to piecewise problems")
    oracle = None
    if pm.combinator in ("min", "max") and pm.k**pm.n <= 4096:
        oracle = brute_force_xstar(pm)
    return _trace_result(cfg.method, trace, oracle=oracle)


def _run_nonlinear(problem: Problem, cfg: RunConfig) -> RunResult:
    T = problem.nonlinear_map()
    x0 = np.zeros(T.dimension)
    if cfg.method in ("prox", "extraprox"):
        trace = prox_solve(
            T,
            cfg.chat,
            x0,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            extrapolated=cfg.method == "extraprox",
        )
    elif cfg.method in ("fbs", "fbs-extra"):
        h_scale = float(problem.payload["nonlinear"].get("h_scale", 0.1))
        prob = SplitProblem(T, lambda x: h_scale * x, beta=h_scale, alpha=cfg.alpha)
        trace = fbs_solve(
            prob, x0, tol=cfg.tol, max_iter=cfg.max_iter, extrapolated=cfg.method == "fbs-extra"
        )
    else:
        raise BadInput(f"method {cfg.method!r} does not apply to nonlinear problems")
    return _trace_result(cfg.method, trace)


def run_method(problem: Problem, cfg: RunConfig) -> RunResult:
    if cfg.method in LINEAR_METHODS and problem.kind in ("spectrum", "chain"):
        return _run_linear(problem, cfg)
    if problem.kind == "chain":
        return _run_chain(problem, cfg)
    if problem.kind == "piecewise":
        return _run_piecewise(problem, cfg)
    if problem.kind == "nonlinear":
        return _run_nonlinear(problem, cfg)
    raise BadInput(f"method {cfg.method!r} is not compatible with kind {problem.kind!r}")


def write_trace_csv(path, result: RunResult) -> None:
    has_error = result.errors is not None
    header = "iter,residual_inf,error_inf,wall_ns" if has_error else "iter,residual_inf,wall_ns"
    lines = [header]
    for k, it in enumerate(result.iter_column):
        cells = [str(int(it)), _fmt(result.residuals[k])]
        if has_error:
            cells.append(_fmt(result.errors[k]))
        cells.append("0")
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(path, result: RunResult) -> None:
    rate = result.measured_rate
    final_error = result.final_error
    rel = result.final_error_rel
    summary = {
        "converged": bool(result.converged),
        "iters": int(result.iter_column[-1]) if result.iter_column else 0,
        "final_residual": float(result.residuals[-1]),
        "measured_rate": None if rate is None or not np.isfinite(rate) else float(rate),
        "final_error": None if final_error is None else float(final_error),
        "final_error_rel": None if rel is None else float(rel),
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_iterates_json(path, result: RunResult, cfg: RunConfig, problem: Problem) -> None:
    doc = {
        "kind": problem.kind,
        "method": result.method,
        "space": result.space,
        "lambda": cfg.lam,
        "iter_column": [int(v) for v in result.iter_column],
        "iterates": [[float(v) for v in x] for x in result.iterates],
    }
    if result.system is not None:
        doc["system"] = {
            "C": [[float(v) for v in row] for row in np.asarray(result.system["C"])],
            "d": [float(v) for v in np.asarray(result.system["d"])],
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def recheck_trace(problem: Problem, dump: dict, trace_path) -> float:
    """Recompute the residual column from dumped iterates; return max deviation."""
    with open(trace_path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    res_idx = header.index("residual_inf")
    stored = np.array([float(r[res_idx]) for r in rows])
    iterates = [np.array(x, dtype=float) for x in dump["iterates"]]
    if len(iterates) != len(stored):
        raise BadInput("trace and iterates dump have different lengths")
    if dump["space"] == "r":
        C = np.array(dump["system"]["C"], dtype=float)
        d = np.array(dump["system"]["d"], dtype=float)
        recomputed = np.array([inf_norm(C @ r - d) for r in iterates])
    elif problem.kind in ("spectrum", "chain"):
        m = problem.affine_map()
        recomputed = np.array([inf_norm(x - apply_T(m, x)) for x in iterates])
    elif problem.kind == "piecewise":
        pm = problem.piecewise()
        recomputed = np.array([inf_norm(x - pw_apply(pm, x)[0]) for x in iterates])
    elif problem.kind == "nonlinear":
        T = problem.nonlinear_map()
        recomputed = np.array([inf_norm(x - T(x)) for x in iterates])
    else:
        raise BadInput(f"cannot recheck traces for kind {problem.kind!r}")
    return float(np.max(np.abs(recomputed - stored)))


def _config_from_args(args, method: str) -> RunConfig:
    m_steps = args.m
    gamma = args.gamma
    if ":" in method:
        method, _, argtext = method.partition(":")
        if method == "gamma":
            gamma = float(argtext)
        elif method == "vm":
            m_steps = int(argtext)
        else:
            raise BadInput(f"method {method!r} takes no inline argument")
    return RunConfig(
        method=method,
        lam=args.lam,
        gamma=gamma,
        chat=args.chat,
        m_steps=m_steps,
        prob=args.p,
        alpha=args.alpha,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        samples=args.samples,
        out=args.out,
        dump_iterates=getattr(args, "dump_iterates", False),
    )


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, AssumptionViolated):
        return EXIT_ASSUMPTION
    if isinstance(exc, SingularMatrix):
        return EXIT_SINGULAR
    if isinstance(exc, (NoConvergence, InnerNotConverged)):
        return EXIT_NOT_CONVERGED
    if isinstance(exc, (BadInput, ProxTDError, ValueError, OSError, KeyError)):
        return EXIT_BAD_INPUT
    raise exc


def cmd_gen(args) -> int:
    params = {}
    if args.kind == "spectrum":
        if not args.eigenvalues:
            raise BadInput("gen spectrum requires --eigenvalues")
        params["eigenvalues"] = [complex(tok) for tok in args.eigenvalues.split(",")]
    elif args.kind == "chain":
        params.update(n=args.n, s=args.s, sigma=args.sigma)
    elif args.kind == "piecewise":
        params.update(
            n=args.n, num_components=args.components, sigma=args.sigma, combinator=args.combinator
        )
    elif args.kind == "nonlinear":
        params.update(n=args.n, scale=args.scale)
    problem = gen_problem(args.kind, args.seed, **params)
    out = args.out or f"{args.kind}.json"
    save_problem(problem, out)
    print(f"wrote {out}")
    return EXIT_OK


def _output_base(cfg: RunConfig, problem_path: str, method: str) -> str:
    if cfg.out:
        return cfg.out
    stem = str(problem_path).rsplit(".", 1)[0]
    return f"{stem}.{method.replace(':', '_')}"


def cmd_run(args) -> int:
    problem = load_problem(args.problem)
    cfg = _config_from_args(args, args.method)
    started = time.perf_counter_ns()
    result = run_method(problem, cfg)
    elapsed = time.perf_counter_ns() - started
    base = _output_base(cfg, args.problem, cfg.method)
    write_trace_csv(f"{base}.csv", result)
    write_summary_json(f"{base}.summary.json", result)
    if cfg.dump_iterates:
        write_iterates_json(f"{base}.iterates.json", result, cfg, problem)
    print(
        f"{cfg.method}: converged={result.converged} iters={result.iter_column[-1]} "
        f"final_residual={result.residuals[-1]:.3e}"
    )
    print(f"wall time: {elapsed} ns", file=sys.stderr)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_compare(args) -> int:
    if len(args.method) < 2:
        raise BadInput("compare needs at least two --method entries")
    problem = load_problem(args.problem)
    rows = []
    worst = EXIT_OK
    for idx, token in enumerate(args.method):
        cfg = _config_from_args(args, token)
        derived = int(np.random.SeedSequence([cfg.seed, idx]).generate_state(1)[0])
        cfg = replace(cfg, seed=derived)
        result = run_method(problem, cfg)
        if not result.converged:
            worst = max(worst, EXIT_NOT_CONVERGED)
        rate = result.measured_rate
        rows.append(
            {
                "method": token,
                "iters_to_tol": int(result.iter_column[-1]),
                "measured_rate": rate,
                "final_error": result.final_error,
            }
        )
    out = args.out or "compare.csv"
    lines = ["method,iters_to_tol,measured_rate,final_error"]
    for row in rows:
        rate = "" if row["measured_rate"] is None or not np.isfinite(row["measured_rate"]) else _fmt(row["measured_rate"])
        err = "" if row["final_error"] is None else _fmt(row["final_error"])
        lines.append(f"{row['method']},{row['iters_to_tol']},{rate},{err}")
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return worst


def cmd_verify(args) -> int:
    if args.trace or args.iterates:
        if not (args.trace and args.iterates and args.problem):
            raise BadInput("trace spot-check needs --trace, --iterates and --problem")
        problem = load_problem(args.problem)
        with open(args.iterates) as fh:
            dump = json.load(fh)
        dev = recheck_trace(problem, dump, args.trace)
        ok = dev <= 1e-9
        print(f"{'PASS' if ok else 'FAIL'} trace residuals recomputable (max deviation {dev:.3e})")
        return EXIT_OK if ok else EXIT_NOT_CONVERGED
    failures = verify_mod.run_all(quick=not args.full)
    return EXIT_OK if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxtd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a problem file")
    g.add_argument("kind", choices=("spectrum", "chain", "piecewise", "nonlinear"))
    g.add_argument("--eigenvalues", help="comma separated, e.g. 0.9,0.5 or 0.7j,-0.7j")
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--s", type=int, default=2)
    g.add_argument("--components", type=int, default=2)
    g.add_argument("--sigma", type=float, default=0.8)
    g.add_argument("--scale", type=float, default=0.8)
    g.add_argument("--combinator", choices=("min", "max"), default="min")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    def add_run_flags(p):
        p.add_argument("--lambda", dest="lam", type=float, default=0.5)
        p.add_argument("--gamma", type=float, default=0.5)
        p.add_argument("--chat", type=float, default=1.0)
        p.add_argument("--m", type=int, default=5)
        p.add_argument("--p", type=float, default=0.2)
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--max-iter", dest="max_iter", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--samples", type=int, default=200_000)
        p.add_argument("--out")

    r = sub.add_parser("run", help="run one method on a problem")
    r.add_argument("problem")
    r.add_argument("--method", required=True)
    add_run_flags(r)
    r.add_argument("--dump-iterates", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several methods and merge a report")
    c.add_argument("problem")
    c.add_argument("--method", action="append", required=True)
    add_run_flags(c)
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="run invariant suites or spot-check a trace")
    v.add_argument("--full", action="store_true", help="larger sample sizes")
    v.add_argument("--trace", help="trace CSV to spot-check")
    v.add_argument("--iterates", help="iterates JSON written by run --dump-iterates")
    v.add_argument("--problem", help="problem file for the spot-check")
    v.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # mapped to the documented exit codes
        code = _exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
