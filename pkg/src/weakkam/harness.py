"""Experiment configuration, the end-to-end pipeline, and the CLI.

A single JSON document describes the problem, the discretization, and the
lambda schedule; ``run_pipeline`` executes bounds -> kernel -> critical value
-> barrier -> Aubry/classes -> Mather LP -> u0 -> discounted solves ->
verification, writing every artifact to the output directory as it is
produced so failures keep their partial results. Timings go to their own
file so report.json stays byte-identical across reruns and worker counts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import io
from .action_barrier import (
    aubry_report,
    build_kernel,
    peierls_barrier,
    verify_subsolution,
)
from .discounted import backward_trajectory, critical_value_estimate, solve_discounted
from .errors import ConfigError, WeakKamError
from .mather import (
    CheckResult,
    compute_u0,
    min_mean_cycle,
    solve_mather_lp,
    u0_mechanical,
    verify_limit,
)
from .models import (
    GridFunction,
    build_grid,
    cosine_potential,
    default_time_step,
    eval_hamiltonian,
    make_stencil,
    mechanical,
    read_potential_table,
    stability_bounds,
    table_potential,
    transport,
    zero_potential,
)

__all__ = [
    "ProblemConfig",
    "DiscretizationConfig",
    "ScheduleConfig",
    "ExperimentConfig",
    "RunReport",
    "load_config",
    "run_pipeline",
    "cli_dispatch",
    "main",
]

REPORT_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFICATION = 2
EXIT_USAGE = 64


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ProblemConfig:
    family: str = "mechanical"
    dim: int = 1
    sizes: tuple[int, ...] = (32,)
    potential: dict = field(default_factory=lambda: {"name": "zero"})
    drift: tuple[float, ...] | None = None
    table_path: str | None = None


@dataclass(frozen=True)
class DiscretizationConfig:
    tau_rule: str = "sqrt_h"       # or "explicit"
    tau: float | None = None
    stencil_k: int | None = None
    alpha: float | None = None     # override the sampled velocity bound
    v_search: float | None = None
    bounds_c: float | None = None  # level for kappa_c; default max |H(x,0)|


@dataclass(frozen=True)
class ScheduleConfig:
    lambdas: tuple[float, ...] = (0.5, 0.25, 0.125, 0.0625)
    critical_lambdas: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    burn_in: int | None = None
    horizon: int | None = None
    tol_solve: float = 1e-8
    tol_stabilize: float = 1e-6
    eps_c: float | None = None     # default 10*|c_est - c_cross| + 1e-6
    eps_aubry: float = 1e-7
    u0_targets: int | tuple[int, ...] | None = 16
    max_iter: int = 5_000_000
    tol_constraint: float = 1e-6
    tol_prim: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    output_dir: str = "out"
    threads: int = 1
    critical_shift: str = "min_mean_cycle"  # or "ergodic"

    def validate(self) -> "ExperimentConfig":
        p, d, s = self.problem, self.discretization, self.schedule
        if p.family not in ("mechanical", "transport", "tabulated"):
            raise ConfigError(f"unknown family {p.family!r}")
        if p.dim not in (1, 2) or len(p.sizes) != p.dim:
            raise ConfigError("dim must be 1 or 2 with matching sizes")
        if p.family == "transport" and (p.drift is None or len(p.drift) != p.dim):
            raise ConfigError("transport family needs a drift vector of length dim")
        if p.family == "tabulated" and not p.table_path:
            raise ConfigError("tabulated family needs table_path")
        if d.tau_rule not in ("sqrt_h", "explicit"):
            raise ConfigError(f"unknown tau rule {d.tau_rule!r}")
        if d.tau_rule == "explicit" and not (d.tau and d.tau > 0):
            raise ConfigError("explicit tau rule needs a positive tau")
        lam = s.lambdas
        if len(lam) < 1 or any(b >= a for a, b in zip(lam, lam[1:])):
            raise ConfigError("schedule.lambdas must be strictly decreasing")
        if any(l <= 0 for l in lam):
            raise ConfigError("lambdas must be positive")
        for name in ("tol_solve", "tol_stabilize", "eps_aubry", "tol_constraint", "tol_prim"):
            if getattr(s, name) <= 0:
                raise ConfigError(f"schedule.{name} must be positive")
        if s.eps_c is not None and s.eps_c <= 0:
            raise ConfigError("eps_c must be positive when given")
        if self.critical_shift not in ("min_mean_cycle", "ergodic"):
            raise ConfigError(f"unknown critical_shift {self.critical_shift!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        def pick(cls, block):
            if block is None:
                return cls()
            fields = cls.__dataclass_fields__
            unknown = set(block) - set(fields)
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)} in {cls.__name__}")
            coerced = {}
            for key, value in block.items():
                if isinstance(value, list):
                    value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
                coerced[key] = value
            return cls(**coerced)

        cfg = ExperimentConfig(
            problem=pick(ProblemConfig, raw.get("problem")),
            discretization=pick(DiscretizationConfig, raw.get("discretization")),
            schedule=pick(ScheduleConfig, raw.get("schedule")),
            output_dir=raw.get("output_dir", "out"),
            threads=int(raw.get("threads", 1)),
            critical_shift=raw.get("critical_shift", "min_mean_cycle"),
        )
        return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return ExperimentConfig.from_dict(raw)


def _build_spec(cfg: ProblemConfig, grid):
    if cfg.family == "transport":
        return transport(cfg.drift, dim=cfg.dim)
    if cfg.family == "tabulated":
        values = read_potential_table(cfg.table_path, grid)
        return mechanical(table_potential(grid, values), dim=cfg.dim)
    name = cfg.potential.get("name", "zero")
    if name == "zero":
        return mechanical(zero_potential(), dim=cfg.dim)
    if name == "cosine":
        amps = cfg.potential.get("amplitudes", [cfg.potential.get("amplitude", 1.0)])
        freqs = cfg.potential.get("frequencies", [cfg.potential.get("frequency", 1.0)])
        return mechanical(cosine_potential(amps, freqs), dim=cfg.dim)
    if name == "table":
        values = read_potential_table(cfg.potential["path"], grid)
        return mechanical(table_potential(grid, values), dim=cfg.dim)
    raise ConfigError(f"unknown potential {name!r}")


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class RunReport:
    version: int
    config: dict
    bounds: dict
    c_est: float
    c_cross: float           # -min mean cycle
    cross_delta: float
    c_used: float
    critical_table: list
    spread_warning: bool
    barrier_residual: float
    barrier_stable: bool
    aubry_nodes: list
    mather_classes: list
    lp_value: float
    lp_vs_cycle: float
    u0_method: str
    u0_cross_delta: float | None
    convergence: list        # rows (lambda, sup_error, min_neg, max_neg, lipschitz)
    plateau: float
    flags: list              # dicts from CheckResult
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


class _StageClock:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, name, fn):
        start = time.perf_counter()
        try:
            return fn()
        except WeakKamError as exc:
            raise WeakKamError(f"[stage {name}] {exc}") from exc
        finally:
            self.timings[name] = time.perf_counter() - start


def _u0_target_list(option, grid):
    if option is None:
        return np.arange(grid.num_nodes, dtype=np.int64)
    if isinstance(option, int):
        count = min(option, grid.num_nodes)
        return np.unique(
            np.linspace(0, grid.num_nodes, count, endpoint=False).astype(np.int64)
        )
    return np.asarray(sorted(int(t) for t in option), dtype=np.int64)


def run_pipeline(config: ExperimentConfig, out_dir=None) -> RunReport:
    """Execute the full experiment and write all artifacts.

    Stage order: stability bounds, stencil, kernel at c = 0, ergodic critical
    value, min-mean-cycle cross-check, kernel rebuilt at the critical shift,
    Peierls barrier, Aubry set and Mather classes, Mather LP, u0 (both
    characterizations when the family allows the rest-point shortcut),
    discounted solves down the lambda schedule, verification battery.
    """
    config = config.validate()
    out = os.fspath(out_dir or config.output_dir)
    os.makedirs(out, exist_ok=True)
    clock = _StageClock()
    threads = config.threads

    grid = clock.run("grid", lambda: build_grid(config.problem.dim, config.problem.sizes))
    spec = clock.run("spec", lambda: _build_spec(config.problem, grid))

    def stage_bounds():
        d = config.discretization
        if d.bounds_c is not None:
            level = d.bounds_c
        else:
            coords = grid.coordinates
            level = float(
                np.abs(eval_hamiltonian(spec, coords, np.zeros_like(coords))).max()
            )
        return stability_bounds(spec, level, grid=grid)

    bounds = clock.run("bounds", stage_bounds)
    alpha = config.discretization.alpha or bounds.alpha
    v_search = config.discretization.v_search or 2.0 * alpha
    spec = spec.with_v_search(v_search)

    def stage_stencil():
        d = config.discretization
        tau = d.tau if d.tau_rule == "explicit" else default_time_step(grid, alpha)
        return make_stencil(grid, tau, alpha, k=d.stencil_k)

    stencil = clock.run("stencil", stage_stencil)
    sched = config.schedule

    c_est, table = clock.run(
        "critical",
        lambda: critical_value_estimate(
            grid, spec, stencil, sched.critical_lambdas,
            tol=sched.tol_solve, max_iter=sched.max_iter,
        ),
    )

    kernel0 = clock.run("kernel0", lambda: build_kernel(grid, spec, stencil, c=0.0))
    mean, cycle = clock.run("min_mean_cycle", lambda: min_mean_cycle(kernel0))
    c_cross = -mean
    cross_delta = abs(c_est - c_cross)
    c_used = c_cross if config.critical_shift == "min_mean_cycle" else c_est

    io.write_csv(
        os.path.join(out, "critical.csv"),
        ["lambda", "min_neg_lambda_u", "max_neg_lambda_u", "mid", "spread"],
        [tuple(map(float, row)) for row in table.rows()],
    )

    kernel = clock.run("kernel", lambda: build_kernel(grid, spec, stencil, c=c_used))
    barrier = clock.run(
        "peierls",
        lambda: peierls_barrier(
            kernel, burn_in=sched.burn_in, horizon=sched.horizon,
            tol=sched.tol_stabilize, threads=threads,
        ),
    )
    io.write_barrier(barrier, os.path.join(out, "barrier"))

    report_aubry = clock.run("aubry", lambda: aubry_report(barrier, sched.eps_aubry))
    class_of = {}
    for cid, cls in enumerate(report_aubry.classes):
        for node in cls:
            class_of[node] = cid
    io.write_csv(
        os.path.join(out, "aubry.csv"),
        ["node", "diagonal", "class_id"],
        [
            (int(nd), float(dv), class_of[int(nd)])
            for nd, dv in zip(report_aubry.nodes, report_aubry.diagonal)
        ],
    )

    lp = clock.run("mather_lp", lambda: solve_mather_lp(kernel))
    io.measure_to_csv(lp.measure, os.path.join(out, "mather_measure.csv"))
    lp_vs_cycle = abs(lp.value - mean)

    eps_c = sched.eps_c if sched.eps_c is not None else 10.0 * abs(c_used - c_cross) + 1e-6
    targets = _u0_target_list(sched.u0_targets, grid)
    u0_lp = clock.run(
        "u0_lp",
        lambda: compute_u0(barrier, kernel, c_used, eps_c, targets, threads=threads),
    )

    u0_cross_delta = None
    try:
        u0_main = clock.run(
            "u0_mechanical",
            lambda: u0_mechanical(barrier, spec, grid, c_used, max(sched.eps_aubry, 1e-9)),
        )
        u0_cross_delta = float(
            np.abs(u0_main.values[u0_lp.targets] - u0_lp.values).max()
        )
    except WeakKamError:
        u0_main = u0_lp  # drifting families: the LP route is authoritative

    io.write_csv(
        os.path.join(out, "u0.csv"),
        ["node", "value", "method"],
        [
            (int(t), float(v), u0_main.method)
            for t, v in zip(u0_main.targets, u0_main.values)
        ],
    )

    solutions = []
    for lam in sched.lambdas:
        sol = clock.run(
            f"discounted_{lam:g}",
            lambda lam=lam: solve_discounted(
                grid, spec, lam, stencil, c_used,
                tol=sched.tol_solve, max_iter=sched.max_iter, kernel=kernel,
            ),
        )
        solutions.append(sol)

    verification = clock.run(
        "verify",
        lambda: verify_limit(
            u0_main, solutions, [lp], kernel,
            barrier=barrier, aubry_nodes=report_aubry.nodes,
            tol_constraint=sched.tol_constraint,
            tol_subsolution=max(10.0 * (barrier.residual or 0.0), 1e-9),
            tol_prim=sched.tol_prim,
        ),
    )

    convergence = []
    err_by_lam = dict(verification.sup_errors)
    for sol in solutions:
        neg = -sol.lam * sol.values.values
        convergence.append(
            (
                float(sol.lam),
                float(err_by_lam[sol.lam]),
                float(neg.min()),
                float(neg.max()),
                float(sol.values.lipschitz_quotient()),
            )
        )
    io.write_csv(
        os.path.join(out, "convergence.csv"),
        ["lambda", "sup_error", "min_neg_lambda_u", "max_neg_lambda_u", "lipschitz_quotient"],
        convergence,
    )

    flags = [asdict(c) for c in verification.checks]
    flags.append(
        asdict(
            CheckResult(
                "barrier_stable",
                "pass" if barrier.stable else "warn",
                float(barrier.residual or 0.0),
                sched.tol_stabilize,
            )
        )
    )
    flags.append(
        asdict(
            CheckResult(
                "critical_spread",
                "warn" if table.spread_warning else "pass",
                float(table.spreads[-1]),
                float(table.spreads[0]),
                detail="-lambda*u spread must shrink along the schedule",
            )
        )
    )
    flags.append(
        asdict(
            CheckResult(
                "lp_vs_min_mean_cycle",
                "pass" if lp_vs_cycle <= 1e-8 else "fail",
                float(lp_vs_cycle),
                1e-8,
            )
        )
    )
    if u0_cross_delta is not None:
        flags.append(
            asdict(
                CheckResult(
                    "u0_methods_agree",
                    "pass" if u0_cross_delta <= 1e-5 else "fail",
                    float(u0_cross_delta),
                    1e-5,
                )
            )
        )

    passed = all(f["status"] != "fail" for f in flags)
    # runtime-only knobs (worker count, target directory) stay out of the
    # report so identical experiments produce byte-identical report.json
    config_dict = config.to_dict()
    config_dict.pop("threads")
    config_dict.pop("output_dir")
    report = RunReport(
        version=REPORT_VERSION,
        config=config_dict,
        bounds={
            "kappa": bounds.kappa,
            "A_kappa": bounds.A_kappa,
            "C0": bounds.C0,
            "alpha": bounds.alpha,
            "v_search": bounds.v_search,
            "c": bounds.c,
            "tau": stencil.tau,
            "stencil_offsets": stencil.num_offsets,
        },
        c_est=float(c_est),
        c_cross=float(c_cross),
        cross_delta=float(cross_delta),
        c_used=float(c_used),
        critical_table=[list(map(float, r)) for r in table.rows()],
        spread_warning=bool(table.spread_warning),
        barrier_residual=float(barrier.residual or 0.0),
        barrier_stable=bool(barrier.stable),
        aubry_nodes=[int(x) for x in report_aubry.nodes],
        mather_classes=[list(map(int, cls)) for cls in report_aubry.classes],
        lp_value=float(lp.value),
        lp_vs_cycle=float(lp_vs_cycle),
        u0_method=u0_main.method,
        u0_cross_delta=u0_cross_delta,
        convergence=[list(map(float, r)) for r in convergence],
        plateau=float(verification.plateau),
        flags=flags,
        passed=passed,
    )
    io.write_json(os.path.join(out, "report.json"), report.to_dict())
    io.write_json(os.path.join(out, "timings.json"), {"stages": clock.timings})
    return report


# ---------------------------------------------------------------------------
# command-line interface


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "grid", None):
        sizes = tuple([int(args.grid)] * config.problem.dim)
        config = replace(config, problem=replace(config.problem, sizes=sizes))
    if getattr(args, "out", None):
        config = replace(config, output_dir=args.out)
    if getattr(args, "threads", None):
        config = replace(config, threads=int(args.threads))
    env_threads = os.environ.get("WEAKKAM_THREADS")
    if env_threads and not getattr(args, "threads", None):
        config = replace(config, threads=int(env_threads))
    if getattr(args, "lam", None):
        lams = (float(args.lam),)
        config = replace(config, schedule=replace(config.schedule, lambdas=lams))
    return config.validate()


def _prepare(args):
    config = load_config(args.config)
    return _apply_overrides(config, args)


def _cmd_bounds(args) -> int:
    config = _prepare(args)
    grid = build_grid(config.problem.dim, config.problem.sizes)
    spec = _build_spec(config.problem, grid)
    d = config.discretization
    if d.bounds_c is not None:
        level = d.bounds_c
    else:
        coords = grid.coordinates
        level = float(np.abs(eval_hamiltonian(spec, coords, np.zeros_like(coords))).max())
    bounds = stability_bounds(spec, level, grid=grid)
    print(
        f"kappa={io.fmt(bounds.kappa)} A_kappa={io.fmt(bounds.A_kappa)} "
        f"C0={io.fmt(bounds.C0)} alpha={io.fmt(bounds.alpha)} "
        f"v_search={io.fmt(bounds.v_search)} c={io.fmt(bounds.c)}"
    )
    return EXIT_OK


def _setup(config):
    grid = build_grid(config.problem.dim, config.problem.sizes)
    spec = _build_spec(config.problem, grid)
    d = config.discretization
    if d.bounds_c is not None:
        level = d.bounds_c
    else:
        coords = grid.coordinates
        level = float(np.abs(eval_hamiltonian(spec, coords, np.zeros_like(coords))).max())
    bounds = stability_bounds(spec, level, grid=grid)
    alpha = d.alpha or bounds.alpha
    spec = spec.with_v_search(d.v_search or 2.0 * alpha)
    tau = d.tau if d.tau_rule == "explicit" else default_time_step(grid, alpha)
    stencil = make_stencil(grid, tau, alpha, k=d.stencil_k)
    return grid, spec, stencil


def _critical_shift(config, grid, spec, stencil):
    kernel0 = build_kernel(grid, spec, stencil, c=0.0)
    mean, _ = min_mean_cycle(kernel0)
    return -mean


def _cmd_critical(args) -> int:
    config = _prepare(args)
    grid, spec, stencil = _setup(config)
    c_est, table = critical_value_estimate(
        grid, spec, stencil, config.schedule.critical_lambdas,
        tol=config.schedule.tol_solve, max_iter=config.schedule.max_iter,
    )
    os.makedirs(config.output_dir, exist_ok=True)
    io.write_csv(
        os.path.join(config.output_dir, "critical.csv"),
        ["lambda", "min_neg_lambda_u", "max_neg_lambda_u", "mid", "spread"],
        [tuple(map(float, row)) for row in table.rows()],
    )
    print(f"c_est={io.fmt(c_est)} spread_warning={table.spread_warning}")
    return EXIT_OK


def _cmd_peierls(args) -> int:
    config = _prepare(args)
    grid, spec, stencil = _setup(config)
    c_used = _critical_shift(config, grid, spec, stencil)
    kernel = build_kernel(grid, spec, stencil, c=c_used)
    barrier = peierls_barrier(
        kernel, burn_in=config.schedule.burn_in, horizon=config.schedule.horizon,
        tol=config.schedule.tol_stabilize, threads=config.threads,
    )
    os.makedirs(config.output_dir, exist_ok=True)
    io.write_barrier(barrier, os.path.join(config.output_dir, "barrier"))
    print(
        f"c={io.fmt(c_used)} residual={io.fmt(barrier.residual)} stable={barrier.stable}"
    )
    return EXIT_OK if barrier.stable else EXIT_VERIFICATION


def _cmd_discounted(args) -> int:
    config = _prepare(args)
    grid, spec, stencil = _setup(config)
    c_used = _critical_shift(config, grid, spec, stencil)
    os.makedirs(config.output_dir, exist_ok=True)
    for lam in config.schedule.lambdas:
        sol = solve_discounted(
            grid, spec, lam, stencil, c_used,
            tol=config.schedule.tol_solve, max_iter=config.schedule.max_iter,
        )
        io.write_solution(sol, os.path.join(config.output_dir, f"discounted_{lam:g}"))
        start = int(np.argmax(sol.values.values))
        traj = backward_trajectory(sol, start, min(400, 4 * grid.num_nodes))
        io.trajectory_to_csv(
            traj, stencil, os.path.join(config.output_dir, f"trajectory_{lam:g}.csv")
        )
        print(
            f"lambda={io.fmt(lam)} iterations={sol.iterations} "
            f"residual={io.fmt(sol.residual)}"
        )
    return EXIT_OK


def _cmd_mather(args) -> int:
    config = _prepare(args)
    grid, spec, stencil = _setup(config)
    kernel0 = build_kernel(grid, spec, stencil, c=0.0)
    mean, cycle = min_mean_cycle(kernel0)
    kernel = build_kernel(grid, spec, stencil, c=-mean)
    lp = solve_mather_lp(kernel)
    os.makedirs(config.output_dir, exist_ok=True)
    io.measure_to_csv(lp.measure, os.path.join(config.output_dir, "mather_measure.csv"))
    io.write_json(
        os.path.join(config.output_dir, "mather.json"),
        {
            "lp_value": lp.value,
            "min_mean": mean,
            "cycle": [int(x) for x in cycle],
            "support_size": int(lp.support_edges.shape[0]),
            "projected_support": [int(x) for x in np.nonzero(lp.projected > 1e-12)[0]],
        },
    )
    print(f"lp_value={io.fmt(lp.value)} min_mean={io.fmt(mean)}")
    return EXIT_OK


def _cmd_u0(args) -> int:
    config = _prepare(args)
    report = run_pipeline(config)
    print(f"u0 method={report.u0_method} plateau={io.fmt(report.plateau)}")
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def _cmd_converge(args) -> int:
    config = _prepare(args)
    report = run_pipeline(config)
    print(
        f"c_est={io.fmt(report.c_est)} c_cross={io.fmt(report.c_cross)} "
        f"plateau={io.fmt(report.plateau)} passed={report.passed}"
    )
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def _cmd_verify(args) -> int:
    config = _prepare(args)
    grid, spec, stencil = _setup(config)
    c_used = _critical_shift(config, grid, spec, stencil)
    kernel = build_kernel(grid, spec, stencil, c=c_used)
    values = io.read_values_binary(args.u0, grid.num_nodes)
    violation = verify_subsolution(GridFunction(grid, values), kernel)
    lp = solve_mather_lp(kernel)
    integral = float(lp.projected @ values)
    ok = (
        violation <= config.schedule.tol_constraint
        and integral <= config.schedule.tol_constraint
    )
    print(f"subsolution_violation={io.fmt(violation)} measure_integral={io.fmt(integral)}")
    return EXIT_OK if ok else EXIT_VERIFICATION


_COMMANDS = {
    "bounds": _cmd_bounds,
    "critical": _cmd_critical,
    "peierls": _cmd_peierls,
    "discounted": _cmd_discounted,
    "mather": _cmd_mather,
    "u0": _cmd_u0,
    "converge": _cmd_converge,
    "verify": _cmd_verify,
}


def cli_dispatch(argv) -> int:
    parser = _Parser(prog="weakkam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--grid", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=None)
        if name == "verify":
            p.add_argument("--u0", required=True)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except WeakKamError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
