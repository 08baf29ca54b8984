"""Semi-Lagrangian value iteration for the discounted equation.

The solver shares the action kernel's edge costs: one backward step of
duration tau from x lands at a stencil predecessor y = x - tau*v_k and pays

    u(x) = min_k  (1 - beta)/(lambda*tau) * cost(y -> x) + beta * u(y),

with beta = exp(-lambda*tau). The weight (1-beta)/lambda is the exact value
of the integral of exp(lambda*s) over one backward step, so along any fixed
path the discounted cost is monotone in lambda whenever the shifted running
cost is nonnegative; that monotonicity is exact, not approximate, and the
tests rely on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .action_barrier import ActionKernel, build_kernel
from .errors import ConvergenceError, WeakKamError
from .models import GridFunction, LagrangianSpec, TorusGrid, VelocityStencil

__all__ = [
    "DiscountedSolution",
    "TrajectorySample",
    "DiscountedOccupationMeasure",
    "CriticalValueTable",
    "discounted_sweeps",
    "solve_discounted",
    "critical_value_estimate",
    "backward_trajectory",
    "calibration_residual",
    "discounted_occupation_measure",
]


@dataclass(frozen=True)
class DiscountedSolution:
    """Converged fixed point of the discounted one-step operator."""

    lam: float
    tau: float
    c: float
    values: GridFunction
    policy: np.ndarray           # per-node argmin stencil offset index
    iterations: int
    residual: float              # final sup-norm update
    tol: float
    kernel: ActionKernel

    @property
    def beta(self) -> float:
        return math.exp(-self.lam * self.tau)

    @property
    def grid(self) -> TorusGrid:
        return self.kernel.grid

    @property
    def stencil(self) -> VelocityStencil:
        return self.kernel.stencil


def discounted_sweeps(kernel: ActionKernel, lam: float, n_sweeps: int, init=None) -> np.ndarray:
    """Apply exactly n_sweeps Jacobi updates and return the iterate.

    Starting from zero this is the optimal cost over truncated n-step
    horizons, which exhaustive path enumeration must reproduce exactly.
    """
    tau = kernel.stencil.tau
    beta = math.exp(-lam * tau)
    cost_in = (1.0 - beta) / (lam * tau) * kernel.costs_by_head()
    pred = kernel.pred_index
    u = np.zeros(kernel.num_nodes) if init is None else np.asarray(init, dtype=float).copy()
    for _ in range(n_sweeps):
        u = (cost_in + beta * u[pred]).min(axis=0)
    return u


def solve_discounted(
    grid: TorusGrid,
    spec: LagrangianSpec,
    lam: float,
    stencil: VelocityStencil,
    c: float,
    tol: float = 1e-8,
    max_iter: int = 5_000_000,
    init: np.ndarray | None = None,
    kernel: ActionKernel | None = None,
) -> DiscountedSolution:
    """Jacobi value iteration until the sup-residual drops below tol*(1-beta).

    The contraction factor of the sweep is beta, so the stopping rule bounds
    the distance to the true fixed point by tol. Argmin ties go to the lowest
    stencil index, which makes policies and trajectories reproducible.
    """
    if lam <= 0:
        raise WeakKamError("discount lambda must be positive")
    if kernel is None:
        kernel = build_kernel(grid, spec, stencil, c)
    tau = stencil.tau
    beta = math.exp(-lam * tau)
    weight = (1.0 - beta) / (lam * tau)
    cost_in = weight * kernel.costs_by_head()
    pred = kernel.pred_index

    u = np.zeros(grid.num_nodes) if init is None else np.asarray(init, dtype=float).copy()
    threshold = tol * (1.0 - beta)
    residual = np.inf
    iterations = 0
    while iterations < max_iter:
        candidates = cost_in + beta * u[pred]
        u_new = candidates.min(axis=0)
        residual = float(np.abs(u_new - u).max())
        u = u_new
        iterations += 1
        if residual <= threshold:
            break
    else:
        raise ConvergenceError(
            f"value iteration hit max_iter={max_iter} at residual {residual:.3e} "
            f"(target {threshold:.3e}); lambda*tau may be too small for the budget",
            residual=residual,
            iterations=iterations,
        )

    policy = np.argmin(cost_in + beta * u[pred], axis=0).astype(np.int64)
    return DiscountedSolution(
        lam=float(lam),
        tau=float(tau),
        c=float(c),
        values=GridFunction(grid, u),
        policy=policy,
        iterations=iterations,
        residual=residual,
        tol=float(tol),
        kernel=kernel,
    )


# ---------------------------------------------------------------------------
# critical value by ergodic approximation


@dataclass(frozen=True)
class CriticalValueTable:
    """Per-lambda ranges of -lambda*u_lambda plus the extrapolated estimate."""

    lambdas: tuple[float, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    mids: tuple[float, ...]
    spreads: tuple[float, ...]
    c_est: float
    spread_warning: bool

    def rows(self):
        return list(zip(self.lambdas, self.mins, self.maxs, self.mids, self.spreads))


def _neville_at_zero(xs: list[float], ys: list[float]) -> float:
    """Polynomial extrapolation of (xs, ys) to x = 0."""
    vals = list(ys)
    for level in range(1, len(xs)):
        for i in range(len(xs) - level):
            x0, x1 = xs[i], xs[i + level]
            vals[i] = (x1 * vals[i] - x0 * vals[i + 1]) / (x1 - x0)
    return vals[0]


def critical_value_estimate(
    grid: TorusGrid,
    spec: LagrangianSpec,
    stencil: VelocityStencil,
    lambda_schedule,
    tol: float = 1e-8,
    max_iter: int = 5_000_000,
) -> tuple[float, CriticalValueTable]:
    """Estimate c(H) from -lambda*u_lambda along a decreasing lambda schedule.

    Solves with shift c = 0 for each lambda, records the node range of
    -lambda*u_lambda, and Richardson-extrapolates the midpoint sequence to
    lambda = 0 (Neville on the last three points). The per-lambda spread
    max - min must shrink along the schedule; if it does not, the table
    carries a warning flag signaling a too-coarse discretization.
    """
    lambdas = [float(l) for l in lambda_schedule]
    if len(lambdas) < 3:
        raise WeakKamError("the lambda schedule needs at least 3 entries")
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise WeakKamError("the lambda schedule must be strictly decreasing")

    kernel = build_kernel(grid, spec, stencil, c=0.0)
    mins, maxs, mids, spreads = [], [], [], []
    for lam in lambdas:
        sol = solve_discounted(
            grid, spec, lam, stencil, c=0.0, tol=tol, max_iter=max_iter, kernel=kernel
        )
        neg = -lam * sol.values.values
        mins.append(float(neg.min()))
        maxs.append(float(neg.max()))
        mids.append(0.5 * (mins[-1] + maxs[-1]))
        spreads.append(maxs[-1] - mins[-1])

    tail = min(3, len(lambdas))
    c_est = _neville_at_zero(lambdas[-tail:], mids[-tail:])
    warn = any(s2 > s1 * 1.1 + 1e-12 for s1, s2 in zip(spreads, spreads[1:]))
    table = CriticalValueTable(
        lambdas=tuple(lambdas),
        mins=tuple(mins),
        maxs=tuple(maxs),
        mids=tuple(mids),
        spreads=tuple(spreads),
        c_est=float(c_est),
        spread_warning=warn,
    )
    return float(c_est), table


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TrajectorySample:
    """Backward orbit of the converged policy from a start node."""

    start: int
    nodes: np.ndarray            # length N+1, nodes[0] = start, going backward in time
    offsets: np.ndarray          # length N, stencil offset index used at each step
    speeds: np.ndarray           # length N


def backward_trajectory(sol: DiscountedSolution, x0: int, n_steps: int) -> TrajectorySample:
    """Follow sol.policy backward n_steps steps from x0."""
    pred = sol.kernel.pred_index
    speeds_all = sol.stencil.speeds()
    nodes = np.empty(n_steps + 1, dtype=np.int64)
    offsets = np.empty(n_steps, dtype=np.int64)
    nodes[0] = int(x0) % sol.grid.num_nodes
    for i in range(n_steps):
        k = sol.policy[nodes[i]]
        offsets[i] = k
        nodes[i + 1] = pred[k, nodes[i]]
    return TrajectorySample(
        start=int(x0),
        nodes=nodes,
        offsets=offsets,
        speeds=speeds_all[offsets],
    )


def calibration_residual(sol: DiscountedSolution, traj: TrajectorySample) -> float:
    """Signed defect of the discounted calibration identity along a trajectory.

    Evaluates beta^N u(gamma(-N tau)) + sum of discounted step costs - u(x0)
    with the same Horner recursion the solver uses. Policy trajectories give
    |residual| <= N*tol; arbitrary trajectories give residual >= -N*tol, the
    discrete domination inequality.
    """
    beta = sol.beta
    weight = (1.0 - beta) / (sol.lam * sol.tau)
    u = sol.values.values
    costs = sol.kernel.costs
    pred = sol.kernel.pred_index
    n = traj.offsets.size
    acc = u[traj.nodes[n]]
    for i in range(n - 1, -1, -1):
        k = traj.offsets[i]
        x = traj.nodes[i]
        tail = traj.nodes[i + 1]
        if pred[k, x] != tail:
            raise WeakKamError("trajectory step does not match its recorded offset")
        acc = weight * costs[k, tail] + beta * acc
    return float(acc - u[traj.nodes[0]])


# ---------------------------------------------------------------------------
# discounted occupation measures


@dataclass(frozen=True)
class DiscountedOccupationMeasure:
    """Geometric edge weights along a backward policy trajectory.

    Edge i runs from tails[i] (the earlier point) with stencil offset
    offset_ids[i]; its raw weight is (1-beta)*beta^i, renormalized to total
    mass one after truncation at N steps. The tail of the discarded series,
    beta^N, is reported so callers can judge the truncation.
    """

    grid: TorusGrid
    stencil: VelocityStencil
    lam: float
    x0: int
    tails: np.ndarray
    offset_ids: np.ndarray
    weights: np.ndarray
    steps: int
    tail_bound: float
    tail_warning: bool
    final_node: int

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def node_marginal(self) -> np.ndarray:
        out = np.zeros(self.grid.num_nodes)
        np.add.at(out, self.tails, self.weights)
        return out

    def heads(self) -> np.ndarray:
        head = np.empty_like(self.tails)
        for k in np.unique(self.offset_ids):
            mask = self.offset_ids == k
            head[mask] = self.grid.shift_indices(self.tails[mask], self.stencil.offsets[k])
        return head


def discounted_occupation_measure(
    sol: DiscountedSolution,
    x0: int,
    n_steps: int | None = None,
    tail_threshold: float = 1e-8,
    max_steps: int = 20_000_000,
) -> DiscountedOccupationMeasure:
    """Build the discounted occupation measure of the policy orbit from x0.

    By default the horizon is chosen so the geometric tail beta^N falls below
    tail_threshold; if the cap truncates earlier the measure is flagged. The
    exact discrete identity sum_i w_i (Lbar_i + c) = lambda * (u(x0) -
    beta^N u(x_N)) / (1 - beta^N) holds for the renormalized weights.
    """
    beta = sol.beta
    if n_steps is None:
        needed = int(math.ceil(math.log(1.0 / tail_threshold) / (sol.lam * sol.tau)))
        n_steps = min(needed, max_steps)
    tail = beta**n_steps
    traj = backward_trajectory(sol, x0, n_steps)

    raw = (1.0 - beta) * np.power(beta, np.arange(n_steps))
    raw /= 1.0 - tail

    # aggregate repeated (tail node, offset) pairs; order by first appearance
    key = traj.nodes[1:] * sol.stencil.num_offsets + traj.offsets
    uniq, inverse = np.unique(key, return_inverse=True)
    weights = np.zeros(uniq.size)
    np.add.at(weights, inverse, raw)
    tails = (uniq // sol.stencil.num_offsets).astype(np.int64)
    offset_ids = (uniq % sol.stencil.num_offsets).astype(np.int64)

    return DiscountedOccupationMeasure(
        grid=sol.grid,
        stencil=sol.stencil,
        lam=sol.lam,
        x0=int(x0),
        tails=tails,
        offset_ids=offset_ids,
        weights=weights,
        steps=n_steps,
        tail_bound=float(tail),
        tail_warning=bool(tail > tail_threshold),
        final_node=int(traj.nodes[-1]),
    )
