"""Monte Carlo estimation of weak moments and fitted convergence orders.

Trajectories are processed in fixed-size chunks; every draw is addressed by
trajectory index, and the reduction uses exactly rounded sums over the
functional values in trajectory order, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AllPointsNoiseDominated, ParameterOutOfRange, StepCountMismatch
from .integrator import DEFAULT_NEWTON, NewtonConfig, simulate, stage_plan
from .problems import Functional, SdeProblem
from .randvars import THREE_POINT
from .tableau import ExtendedButcherTableau

CHUNK = 1 << 15
CSV_COLUMNS = ("h", "estimate", "exact", "abs_error", "std_error", "trajectories",
               "drift_evals", "diff_evals", "rand_draws")


@dataclass
class EstimateResult:
    mean: float
    std_error: float
    trajectories: int
    clamp_events: int
    wall_clock: float
    h: float = float("nan")
    exact: float | None = None

    @property
    def abs_error(self) -> float | None:
        return None if self.exact is None else abs(self.mean - self.exact)


@dataclass
class EffortReport:
    """Callback and random-number counts per step.

    ``diffusion_evals`` totals over all ``m`` columns.  Newton iterations
    are not included; each implicit stage adds one Jacobian evaluation and
    at least one more drift call.
    """

    drift_evals: int
    diffusion_evals: int
    random_draws: int
    implicit_stages: int


def effort_report(t: ExtendedButcherTableau, prob: SdeProblem | int, h: float | None = None) -> EffortReport:
    m = prob if isinstance(prob, int) else prob.m
    plan = stage_plan(t, m)
    return EffortReport(
        drift_evals=plan.drift_points(t),
        diffusion_evals=m * plan.diffusion_points(t),
        random_draws=2 * m - 1,
        implicit_stages=sum(1 for i, imp in enumerate(plan.implicit)
                            if imp and plan.need_drift[i]),
    )


def step_count(prob: SdeProblem, h: float) -> int:
    if not h > 0:
        raise ParameterOutOfRange(f"step size must be positive, got {h}")
    span = prob.T - prob.t0
    n = round(span / h)
    if n < 1 or abs(n * h - span) > 1e-9:
        raise StepCountMismatch(f"(T - t0)/h = {span / h!r} is not an integer")
    return n


def _mean_and_error(values: np.ndarray) -> tuple[float, float]:
    M = values.size
    mean = math.fsum(values.tolist()) / M
    if M < 2:
        return mean, float("nan")
    dev = values - mean
    var = math.fsum((dev * dev).tolist()) / (M - 1)
    return mean, math.sqrt(var / M)


def sample_functional(t: ExtendedButcherTableau, prob: SdeProblem, functional: Functional,
                      n_steps: int, trajectories: int, seed: int, mode: str = THREE_POINT,
                      cfg: NewtonConfig = DEFAULT_NEWTON, threads: int = 1) -> tuple[np.ndarray, int]:
    """``f(Y_T)`` for every trajectory, in trajectory order, and the clamp total."""
    starts = range(0, trajectories, CHUNK)

    def run(first):
        n = min(CHUNK, trajectories - first)
        res = simulate(t, prob, n_steps, seed, first, n, mode, cfg)
        return np.asarray(functional(res.terminal), dtype=float), int(res.clamps.sum())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def estimate_functional(t: ExtendedButcherTableau, prob: SdeProblem, functional: str | Functional,
                        h: float, trajectories: int, seed: int, mode: str = THREE_POINT,
                        cfg: NewtonConfig = DEFAULT_NEWTON, threads: int = 1) -> EstimateResult:
    """Estimate ``E f(Y_T)`` from ``trajectories`` independent paths."""
    if trajectories < 2:
        raise ParameterOutOfRange(f"need at least two trajectories, got {trajectories}")
    f = prob.functional(functional)
    n_steps = step_count(prob, h)
    tic = time.perf_counter()
    values, clamps = sample_functional(t, prob, f, n_steps, trajectories, seed, mode, cfg, threads)
    mean, se = _mean_and_error(values)
    exact = prob.exact_moment(f.id, prob.T) if prob.exact_moment is not None else None
    return EstimateResult(mean, se, trajectories, clamps, time.perf_counter() - tic, h, exact)


@dataclass
class ConvergenceStudy:
    step_sizes: list[float]
    estimates: list[EstimateResult]
    errors: list[float]
    std_errors: list[float]
    fitted_order: float
    fit_residual: float
    used: list[bool] = field(default_factory=list)

    @property
    def excluded(self) -> list[float]:
        return [h for h, u in zip(self.step_sizes, self.used) if not u]


def fit_order(step_sizes, errors) -> tuple[float, float]:
    """Least-squares slope of ``log2 error`` against ``log2 h`` and the RMS residual."""
    x = np.log2(np.asarray(step_sizes, dtype=float))
    y = np.log2(np.asarray(errors, dtype=float))
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    return float(slope), float(math.sqrt(np.mean(resid**2)))


def weak_order_study(t: ExtendedButcherTableau, prob: SdeProblem, functional: str | Functional,
                     step_sizes, trajectories: int, seed: int, mode: str = THREE_POINT,
                     cfg: NewtonConfig = DEFAULT_NEWTON, threads: int = 1,
                     noise_factor: float = 3.0) -> ConvergenceStudy:
    """Estimate at each step size and fit the weak order.

    Points whose error does not exceed ``noise_factor`` standard errors are
    excluded from the fit; at least two resolved points are required.
    """
    hs = [float(h) for h in step_sizes]
    if any(h <= 0 for h in hs) or any(a <= b for a, b in zip(hs, hs[1:])):
        raise ParameterOutOfRange(f"step sizes must be positive and strictly decreasing: {hs}")
    if prob.exact_moment is None:
        raise ParameterOutOfRange(f"problem {prob.label!r} has no exact reference moment")
    ests = [estimate_functional(t, prob, functional, h, trajectories, seed + i, mode, cfg, threads)
            for i, h in enumerate(hs)]
    errs = [e.abs_error for e in ests]
    ses = [e.std_error for e in ests]
    used = [err > noise_factor * se for err, se in zip(errs, ses)]
    if sum(used) < 2:
        raise AllPointsNoiseDominated(
            f"only {sum(used)} of {len(hs)} step sizes have error above {noise_factor} standard errors; "
            f"increase the trajectory count")
    order, resid = fit_order([h for h, u in zip(hs, used) if u], [e for e, u in zip(errs, used) if u])
    return ConvergenceStudy(hs, ests, errs, ses, order, resid, used)


def estimates_to_csv(rows: list[EstimateResult], effort: EffortReport,
                     trailer: list[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        exact = "" if r.exact is None else f"{r.exact:.17g}"
        err = "" if r.exact is None else f"{r.abs_error:.17g}"
        w.writerow([f"{r.h:.17g}", f"{r.mean:.17g}", exact, err, f"{r.std_error:.17g}",
                    r.trajectories, effort.drift_evals, effort.diffusion_evals, effort.random_draws])
    for line in trailer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


@dataclass
class StabilitySeries:
    """``log10|Y_n|`` for one path, or ``log10 E|Y_n|^2`` over an ensemble."""

    times: np.ndarray
    values: np.ndarray
    ensemble: bool


def simulate_stability(t: ExtendedButcherTableau, lam: float, mu: float, h: float, T: float,
                       paths: int = 1, seed: int = 0, mode: str = THREE_POINT,
                       cfg: NewtonConfig = DEFAULT_NEWTON) -> StabilitySeries:
    """Integrate the linear test equation from ``X_0 = 1`` on ``[0, T]``.

    The state is renormalised to unit modulus after every step and the
    logarithm of the scale carried separately (valid because the step map is
    linear), so growth and decay far beyond the floating-point range are
    represented exactly.  A path that hits zero stays at ``-inf``.
    """
    from .integrator import srk_step
    from .problems import linear_test_problem
    from .randvars import increments_batch

    if paths < 1:
        raise ParameterOutOfRange(f"need at least one path, got {paths}")
    prob = linear_test_problem(lam, mu, 1.0, T=T)
    n_steps = step_count(prob, h)
    Y = np.tile(prob.x0, (paths, 1))
    logabs = np.zeros(paths)
    out = np.empty(n_steps + 1)
    ln10 = math.log(10.0)

    def record(n):
        if paths == 1:
            out[n] = logabs[0] / ln10
            return
        top = np.max(2 * logabs)
        if top == -np.inf:
            out[n] = -np.inf
        else:
            out[n] = (top + math.log(np.mean(np.exp(2 * logabs - top)))) / ln10

    record(0)
    for n in range(n_steps):
        inc = increments_batch(h, 1, mode, seed, n, 0, paths)
        Y = srk_step(t, prob, n * h, Y, h, inc, cfg)
        a = np.linalg.norm(Y, axis=1)
        with np.errstate(divide="ignore"):
            logabs = logabs + np.log(a)
        Y = np.where(a[:, None] > 0, Y / np.where(a > 0, a, 1.0)[:, None], 0.0)
        record(n + 1)
    return StabilitySeries(h * np.arange(n_steps + 1), out, paths > 1)


def tail_slope(times, values) -> float:
    """Least-squares slope over the final half of the horizon (``-inf`` once a path dies)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    tail = times >= times[0] + 0.5 * (times[-1] - times[0])
    if np.any(np.isneginf(values[tail])):
        return -math.inf
    if np.count_nonzero(tail) < 2:
        raise ParameterOutOfRange("need at least two points in the final half of the horizon")
    slope, _ = np.polyfit(times[tail], values[tail], 1)
    return float(slope)
