"""Closed measures on the action graph, Mather measures, and the limit u0.

A probability measure on stencil edges is *closed* when inflow equals
outflow at every node; that is the discrete form of asking the average of
d phi(v) to vanish for all node functions phi. Minimizing the mean edge
Lagrangian over closed measures recovers -c(H); the minimizers are the
discrete Mather measures, and u0 is the cheapest mu-average of barrier rows
over near-minimizing mu.

Two independent routes compute the optimal value: a Karp-style minimum mean
cycle and the in-module simplex. They must agree to 1e-8 on every builtin
problem, which is one of the package's acceptance gates.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .action_barrier import ActionKernel, BarrierMatrix, verify_subsolution
from .discounted import DiscountedSolution, discounted_occupation_measure
from .errors import EmptyAubryError, InfeasibleError, WeakKamError
from .models import GridFunction, LagrangianSpec, TorusGrid, eval_lagrangian
from .simplex import solve_standard_form

__all__ = [
    "OccupationMeasure",
    "MatherSolveResult",
    "LimitFunctionResult",
    "CheckResult",
    "VerificationReport",
    "min_mean_cycle",
    "solve_mather_lp",
    "closedness_residual",
    "compute_u0",
    "u0_mechanical",
    "verify_limit",
]


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class OccupationMeasure:
    """Nonnegative weights on stencil edges keyed by (tail node, offset id)."""

    grid: TorusGrid
    stencil: object
    tails: np.ndarray
    offset_ids: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def heads(self) -> np.ndarray:
        head = np.empty_like(self.tails)
        for k in np.unique(self.offset_ids):
            mask = self.offset_ids == k
            head[mask] = self.grid.shift_indices(self.tails[mask], self.stencil.offsets[int(k)])
        return head

    def node_marginal(self) -> np.ndarray:
        out = np.zeros(self.grid.num_nodes)
        np.add.at(out, self.tails, self.weights)
        return out

    def pairing(self, edge_values: np.ndarray) -> float:
        """Integrate a per-edge quantity given as an (offsets, nodes) array."""
        return float(np.sum(edge_values[self.offset_ids, self.tails] * self.weights))


def closedness_residual(measure, grid: TorusGrid | None = None) -> float:
    """Max over nodes of |inflow - outflow|; zero characterizes closed measures."""
    grid = grid or measure.grid
    outflow = np.zeros(grid.num_nodes)
    inflow = np.zeros(grid.num_nodes)
    np.add.at(outflow, measure.tails, measure.weights)
    np.add.at(inflow, measure.heads(), measure.weights)
    return float(np.abs(inflow - outflow).max())


# ---------------------------------------------------------------------------
# minimum mean cycle (Karp)


def min_mean_cycle(kernel: ActionKernel) -> tuple[float, list[int]]:
    """Minimum mean per-unit-time Lagrangian over directed stencil cycles.

    Runs Karp's recurrence D_k(x) = min over edges into x of D_{k-1}(tail) +
    Lbar(edge) with D_0 = 0 at every node, then extracts an achieving cycle
    from the tight subgraph of reduced costs (Bellman-Ford potentials).
    The negated mean is an estimate of c(H) independent of the LP route.
    """
    n = kernel.num_nodes
    pred = kernel.pred_index
    lag_in = np.take_along_axis(kernel.edge_lagrangian, pred, axis=1)

    d = np.zeros((n + 1, n))
    for k in range(1, n + 1):
        d[k] = (d[k - 1][pred] + lag_in).min(axis=0)
    ks = np.arange(n)
    ratios = (d[n][None, :] - d[:n]) / (n - ks)[:, None]
    mean = float(ratios.max(axis=0).min())

    # cycle extraction: potentials for reduced costs, then any tight cycle
    reduced = lag_in - mean
    pi = np.zeros(n)
    for _ in range(n):
        pi = np.minimum(pi, (pi[pred] + reduced).min(axis=0))
    slack = pi[pred] + reduced - pi[None, :]
    tight = slack <= 1e-9

    adj: list[list[int]] = [[] for _ in range(n)]
    for k in range(kernel.num_offsets):
        for x in np.nonzero(tight[k])[0]:
            adj[int(pred[k, x])].append(int(x))

    color = np.zeros(n, dtype=np.int8)  # 0 white, 1 on stack, 2 done
    for root in range(n):
        if color[root]:
            continue
        stack = [(root, iter(adj[root]))]
        color[root] = 1
        path = [root]
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 1:
                    cycle = path[path.index(nxt):]
                    return mean, cycle
                if color[nxt] == 0:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                path.pop()
                stack.pop()
    raise WeakKamError("no tight cycle found; potentials failed to stabilize")


# ---------------------------------------------------------------------------
# Mather LP


@dataclass(frozen=True)
class MatherSolveResult:
    """Optimal closed measure, its value (= -c(H) estimate), and its support."""

    measure: OccupationMeasure
    value: float
    support_edges: np.ndarray   # (E, 2) rows of (tail, offset id)
    projected: np.ndarray       # position marginal over nodes
    basis: np.ndarray           # optimal simplex basis, reusable as warm start
    iterations: int


def _edge_columns(kernel: ActionKernel):
    """Conservation/mass constraint matrix over flattened edges (k*n + tail).

    One conservation row per node except the last (rows sum to zero, so the
    last is redundant), then the unit-mass row.
    """
    n = kernel.num_nodes
    m_off = kernel.num_offsets
    n_edges = m_off * n
    a = np.zeros((n, n_edges))
    cols = np.arange(n_edges)
    tails = cols % n
    heads = kernel.head_index.reshape(-1)  # [k*n + tail] -> head
    keep_t = tails < n - 1
    keep_h = heads < n - 1
    np.add.at(a, (tails[keep_t], cols[keep_t]), 1.0)
    np.add.at(a, (heads[keep_h], cols[keep_h]), -1.0)
    a[n - 1, :] = 1.0
    b = np.zeros(n)
    b[n - 1] = 1.0
    return a, b


def _measure_from_solution(kernel: ActionKernel, x: np.ndarray, weight_tol=1e-12):
    n = kernel.num_nodes
    nz = np.nonzero(x > weight_tol)[0]
    return OccupationMeasure(
        grid=kernel.grid,
        stencil=kernel.stencil,
        tails=(nz % n).astype(np.int64),
        offset_ids=(nz // n).astype(np.int64),
        weights=x[nz].copy(),
    )


def solve_mather_lp(kernel: ActionKernel, feas_tol: float = 1e-9) -> MatherSolveResult:
    """Minimize the mean edge Lagrangian over unit-mass closed edge measures."""
    a, b = _edge_columns(kernel)
    c = kernel.edge_lagrangian.reshape(-1)
    try:
        res = solve_standard_form(a, b, c, feas_tol=feas_tol)
    except InfeasibleError as exc:
        raise InfeasibleError(
            "closed-measure program infeasible; the uniform measure on any cycle "
            "is feasible, so the constraint assembly is broken"
        ) from exc
    measure = _measure_from_solution(kernel, res.x)
    return MatherSolveResult(
        measure=measure,
        value=res.objective,
        support_edges=np.stack([measure.tails, measure.offset_ids], axis=1),
        projected=measure.node_marginal(),
        basis=res.basis,
        iterations=res.iterations,
    )


# ---------------------------------------------------------------------------
# the limit function u0


@dataclass(frozen=True)
class LimitFunctionResult:
    """u0 on target nodes plus the certificate that produced each value."""

    targets: np.ndarray
    values: np.ndarray
    method: str                       # "lp" or "mechanical-shortcut"
    certificates: tuple               # per target: OccupationMeasure or node id
    c_est: float
    eps: float

    def as_grid_values(self, grid: TorusGrid) -> np.ndarray:
        out = np.full(grid.num_nodes, np.nan)
        out[self.targets] = self.values
        return out


def compute_u0(
    h: BarrierMatrix,
    kernel: ActionKernel,
    c_est: float,
    eps_c: float,
    targets,
    threads: int = 1,
) -> LimitFunctionResult:
    """u0(x) as the cheapest mu-average of h(., x) over near-Mather measures.

    For each target x this solves: minimize sum_y mu(y) h(y, x) over closed
    unit-mass edge measures whose mean Lagrangian is within eps_c of -c_est,
    where mu is the tail marginal. One LP per target; every target is
    warm-started from a single reference basis so the reported values do not
    depend on how targets are distributed over worker threads.
    """
    if not h.is_square():
        raise WeakKamError("compute_u0 needs the full square barrier")
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n = kernel.num_nodes
    m_off = kernel.num_offsets

    a_core, b_core = _edge_columns(kernel)
    lbar = kernel.edge_lagrangian.reshape(-1)
    budget = -float(c_est) + float(eps_c)
    # budget row: sum m Lbar + slack = budget, slack >= 0
    a = np.zeros((n + 1, m_off * n + 1))
    a[:n, :-1] = a_core
    a[n, :-1] = lbar
    a[n, -1] = 1.0
    b = np.concatenate([b_core, [budget]])

    def objective_for(t: int) -> np.ndarray:
        col = h.values[:, t]
        return np.concatenate([np.tile(col, m_off), [0.0]])

    try:
        base = solve_standard_form(a, b, objective_for(int(targets[0])))
    except InfeasibleError as exc:
        raise InfeasibleError(
            f"no closed measure meets the near-optimality budget {budget:.6g}; "
            "increase eps_c (the discretization rarely reaches -c_est exactly)"
        ) from exc
    base_basis = base.basis

    def solve_target(t: int):
        res = solve_standard_form(a, b, objective_for(t), basis=base_basis)
        measure = _measure_from_solution(kernel, res.x[:-1])
        return float(res.objective), measure

    workers = max(1, int(threads))
    if workers == 1 or targets.size < 2:
        solved = [solve_target(int(t)) for t in targets]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(solve_target, [int(t) for t in targets]))

    values = np.array([s[0] for s in solved])
    certificates = tuple(s[1] for s in solved)
    return LimitFunctionResult(
        targets=targets,
        values=values,
        method="lp",
        certificates=certificates,
        c_est=float(c_est),
        eps=float(eps_c),
    )


def _zero_minimizes_velocity(spec: LagrangianSpec, grid: TorusGrid) -> bool:
    if spec.family == "mechanical":
        return True
    if spec.family == "transport":
        return all(abs(w) < 1e-15 for w in spec.drift)
    # tabulated: spot-check midpoint convexity's minimum at v = 0 on the nodes
    coords = grid.coordinates
    l0 = eval_lagrangian(spec, coords, np.zeros_like(coords))
    for v in (0.25, 0.5, 1.0):
        for sign in (-1.0, 1.0):
            vv = np.full_like(coords, sign * v)
            if (eval_lagrangian(spec, coords, vv) < l0 - 1e-9).any():
                return False
    return True


def u0_mechanical(
    h: BarrierMatrix,
    spec: LagrangianSpec,
    grid: TorusGrid,
    c_est: float,
    eps: float,
) -> LimitFunctionResult:
    """Shortcut for families minimized at v = 0: u0 = min over rest points of h rows.

    When the constants are critical subsolutions the projected Mather and
    Aubry sets are both {y : L(y,0) + c = 0}, and u0(x) = min over that set
    of h(y, x). Guarded: families whose fiber minimum sits away from v = 0
    (drifting transport) must go through the LP route instead.
    """
    if not _zero_minimizes_velocity(spec, grid):
        raise WeakKamError(
            "u0_mechanical requires argmin_v L(x,.) = 0 for every x; "
            "use compute_u0 for this family"
        )
    if not h.is_square():
        raise WeakKamError("u0_mechanical needs the full square barrier")
    coords = grid.coordinates
    l0 = eval_lagrangian(spec, coords, np.zeros_like(coords))
    rest = np.nonzero(np.abs(l0 + c_est) <= eps)[0]
    if rest.size == 0:
        raise EmptyAubryError(
            f"no node has |L(y,0) + {c_est:.6g}| <= {eps:.3g}; "
            "eps is too small or the shift is off"
        )
    rows = h.values[rest]
    arg = np.argmin(rows, axis=0)
    values = rows[arg, np.arange(grid.num_nodes)]
    return LimitFunctionResult(
        targets=np.arange(grid.num_nodes, dtype=np.int64),
        values=values,
        method="mechanical-shortcut",
        certificates=tuple(int(rest[a]) for a in arg),
        c_est=float(c_est),
        eps=float(eps),
    )


# ---------------------------------------------------------------------------
# verification battery


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str        # "pass" | "fail" | "warn"
    measured: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[CheckResult, ...]
    sup_errors: tuple[tuple[float, float], ...]  # (lambda, ||u_lambda - u0||_inf)
    plateau: float

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)


def verify_limit(
    u0: LimitFunctionResult,
    solutions: list[DiscountedSolution],
    mather: list[MatherSolveResult],
    kernel: ActionKernel,
    barrier: BarrierMatrix | None = None,
    aubry_nodes: np.ndarray | None = None,
    tol_constraint: float = 1e-6,
    tol_subsolution: float = 1e-6,
    tol_prim: float = 1e-3,
    probe_delta: float = 0.01,
    prim_samples: int = 8,
) -> VerificationReport:
    """Run the convergence-theorem battery and report per-check pass/fail.

    Checks: (a) u0 is a discrete critical subsolution; (b) the integral of u0
    and of each u_lambda against every Mather measure stays below tolerance;
    (c) adding probe_delta to u0 breaks (b), so u0 is maximal among shifted
    candidates; (d) ||u_lambda - u0||_inf is nonincreasing down the schedule;
    (e) the subsolution lower bound through discounted occupation measures
    holds at sampled nodes.
    """
    checks: list[CheckResult] = []
    grid = kernel.grid
    full = u0.targets.size == grid.num_nodes and np.array_equal(
        u0.targets, np.arange(grid.num_nodes)
    )

    # (a) subsolution violation
    if full:
        violation = verify_subsolution(u0.values, kernel)
        checks.append(
            CheckResult(
                "u0_subsolution",
                "pass" if violation <= tol_subsolution else "fail",
                violation,
                tol_subsolution,
            )
        )

    # (b) measure constraints
    worst_u0 = -np.inf
    for res in mather:
        mu = res.projected
        if full:
            worst_u0 = max(worst_u0, float(mu @ u0.values))
    if full and mather:
        checks.append(
            CheckResult(
                "u0_measure_constraint",
                "pass" if worst_u0 <= tol_constraint else "fail",
                worst_u0,
                tol_constraint,
            )
        )
    worst_ul = -np.inf
    for sol in solutions:
        for res in mather:
            worst_ul = max(worst_ul, float(res.projected @ sol.values.values))
    if solutions and mather:
        checks.append(
            CheckResult(
                "u_lambda_measure_constraint",
                "pass" if worst_ul <= tol_constraint else "fail",
                worst_ul,
                tol_constraint,
            )
        )

    # (c) maximality probe: the shifted candidate must violate (b)
    if full and mather:
        probe = worst_u0 + probe_delta
        checks.append(
            CheckResult(
                "maximality_probe",
                "pass" if probe > tol_constraint else "fail",
                probe,
                tol_constraint,
                detail=f"u0 + {probe_delta} must break the measure constraint",
            )
        )

    # (d) sup-error table down the lambda schedule
    sup_errors = []
    for sol in sorted(solutions, key=lambda s: -s.lam):
        err = float(np.abs(sol.values.values[u0.targets] - u0.values).max())
        sup_errors.append((sol.lam, err))
    plateau = sup_errors[-1][1] if sup_errors else float("nan")
    slack = 2.0 * (solutions[0].tol if solutions else 0.0) + 1e-12
    monotone = all(b <= a + slack for (_, a), (_, b) in zip(sup_errors, sup_errors[1:]))
    if sup_errors:
        checks.append(
            CheckResult(
                "sup_error_monotone",
                "pass" if monotone else "fail",
                plateau,
                slack,
                detail="sup errors must be nonincreasing as lambda decreases",
            )
        )

    # (e) subsolution lower bound via discounted occupation measures
    if solutions:
        sol = min(solutions, key=lambda s: s.lam)
        candidates: list[tuple[str, np.ndarray]] = []
        if full:
            candidates.append(("u0", u0.values))
        if barrier is not None and aubry_nodes is not None and len(aubry_nodes):
            for y in list(np.asarray(aubry_nodes)[:2]):
                candidates.append((f"h_row_{int(y)}", barrier.row(int(y))))
        xs = np.linspace(0, grid.num_nodes, prim_samples, endpoint=False).astype(int)
        worst_margin = np.inf
        for x in xs:
            occ = discounted_occupation_measure(sol, int(x))
            marginal = occ.node_marginal()
            for name, w in candidates:
                margin = (
                    sol.values.values[x] - w[x] + float(marginal @ w) + tol_prim
                )
                worst_margin = min(worst_margin, float(margin))
        if candidates:
            checks.append(
                CheckResult(
                    "ineq_prim",
                    "pass" if worst_margin >= 0.0 else "fail",
                    worst_margin,
                    0.0,
                    detail=f"u_lambda(x) >= w(x) - <w, occupation> - {tol_prim}",
                )
            )

    return VerificationReport(
        checks=tuple(checks),
        sup_errors=tuple(sup_errors),
        plateau=plateau,
    )
