"""One-step map of the SRK class and uniform-grid path integration.

All routines work on a batch of trajectories at once: states are
``(n, d)`` arrays and increments carry a matching leading axis.  The
drift stages may be diagonally implicit and are solved by simplified
Newton iteration; the diffusion stages must be explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (NewtonDivergence, NonFiniteState, ParameterOutOfRange,
                     SingularStageSystem)
from .problems import SdeProblem
from .randvars import THREE_POINT, WienerIncrements, increments_batch
from .tableau import ExtendedButcherTableau

COND_LIMIT = 1e14
REFRESH_RATE = 0.25
_FD_STEP = math.sqrt(np.finfo(float).eps)


@dataclass(frozen=True)
class NewtonConfig:
    """Simplified Newton settings for implicit drift stages.

    ``jacobian`` is ``"auto"`` (analytic when the problem has one),
    ``"user"`` or ``"fd"`` (forward differences).
    """

    tolerance: float = 1e-10
    max_iterations: int = 25
    jacobian: str = "auto"

    def __post_init__(self):
        if not self.tolerance > 0 or self.max_iterations < 1:
            raise ParameterOutOfRange(f"invalid Newton settings {self}")
        if self.jacobian not in ("auto", "user", "fd"):
            raise ParameterOutOfRange(f"unknown jacobian mode {self.jacobian!r}")


DEFAULT_NEWTON = NewtonConfig()


@dataclass
class EvalCounter:
    """Callback tallies; ``newton_drift`` counts drift calls beyond the one per stage."""

    drift: int = 0
    diffusion: int = 0
    jacobian: int = 0
    newton_drift: int = 0
    implicit_solves: int = 0


@dataclass(frozen=True)
class StagePlan:
    """Which stage values one step actually needs (tableau and m only)."""

    need_drift: tuple[bool, ...]
    need_diff: tuple[bool, ...]
    need_hat: tuple[bool, ...]
    trivial_drift: tuple[bool, ...]
    trivial_diff: tuple[bool, ...]
    trivial_hat: tuple[bool, ...]
    implicit: tuple[bool, ...]

    def diffusion_points(self, t: ExtendedButcherTableau) -> int:
        """Distinct diffusion evaluations per noise column per step."""
        shared = set()
        count = 0
        for i in range(len(self.need_diff)):
            if self.need_diff[i]:
                if self.trivial_diff[i]:
                    shared.add(float(t.c1[i]))
                else:
                    count += 1
            if self.need_hat[i]:
                if self.trivial_hat[i]:
                    shared.add(float(t.c2[i]))
                else:
                    count += 1
        return count + len(shared)

    def drift_points(self, t: ExtendedButcherTableau) -> int:
        shared = {float(t.c0[i]) for i in range(len(self.need_drift))
                  if self.need_drift[i] and self.trivial_drift[i]}
        return len(shared) + sum(1 for i in range(len(self.need_drift))
                                 if self.need_drift[i] and not self.trivial_drift[i])


def _nz(x) -> bool:
    return x != 0.0


@lru_cache(maxsize=64)
def _plan_cached(key) -> StagePlan:
    t, m = key
    return _build_plan(t, m)


def stage_plan(t: ExtendedButcherTableau, m: int) -> StagePlan:
    return _plan_cached((_TabKey(t), m))


class _TabKey:
    # identity-hashed wrapper so plans are cached per tableau object
    __slots__ = ("t",)

    def __init__(self, t):
        self.t = t

    def __hash__(self):
        return id(self.t)

    def __eq__(self, other):
        return self.t is other.t


def _build_plan(key: _TabKey, m: int) -> StagePlan:
    t = key.t
    s = t.s
    for name in ("A1", "A2", "B0", "B1", "B2"):
        if np.any(np.triu(getattr(t, name)) != 0.0):
            raise ParameterOutOfRange(
                f"{t.label}: {name} must be strictly lower triangular")
    if np.any(np.triu(t.A0, 1) != 0.0):
        raise ParameterOutOfRange(f"{t.label}: A0 must be lower triangular")

    need_a = {i for i in range(s) if _nz(t.alpha[i])}
    need_b = {i for i in range(s) if _nz(t.beta1[i]) or _nz(t.beta2[i])}
    need_hat = {i for i in range(s) if _nz(t.beta3[i]) or _nz(t.beta4[i])}
    mixed = m > 1
    changed = True
    while changed:
        before = (len(need_a), len(need_b))
        for i in list(need_a):
            need_a.update(j for j in range(i) if _nz(t.A0[i, j]))
            need_b.update(j for j in range(i) if _nz(t.B0[i, j]))
        for i in list(need_b):
            need_a.update(j for j in range(i) if _nz(t.A1[i, j]))
            need_b.update(j for j in range(i) if _nz(t.B1[i, j]))
        for i in need_hat:
            need_a.update(j for j in range(i) if _nz(t.A2[i, j]))
            if mixed:
                need_b.update(j for j in range(i) if _nz(t.B2[i, j]))
        changed = (len(need_a), len(need_b)) != before

    def zero_row(M, i):
        return not np.any(M[i] != 0.0)

    return StagePlan(
        need_drift=tuple(i in need_a for i in range(s)),
        need_diff=tuple(i in need_b for i in range(s)),
        need_hat=tuple(i in need_hat for i in range(s)),
        trivial_drift=tuple(zero_row(t.A0, i) and zero_row(t.B0, i) for i in range(s)),
        trivial_diff=tuple(zero_row(t.A1, i) and zero_row(t.B1, i) for i in range(s)),
        trivial_hat=tuple(zero_row(t.A2, i) and (not mixed or zero_row(t.B2, i))
                          for i in range(s)),
        implicit=tuple(_nz(t.A0[i, i]) for i in range(s)),
    )


def _jacobian(prob: SdeProblem, t: float, x: np.ndarray, cfg: NewtonConfig,
              counter: EvalCounter | None) -> np.ndarray:
    if cfg.jacobian != "fd" and prob.drift_jacobian is not None:
        if counter is not None:
            counter.jacobian += 1
        return np.asarray(prob.drift_jacobian(t, x), dtype=float).reshape(x.shape[0], prob.d, prob.d)
    if cfg.jacobian == "user":
        raise ParameterOutOfRange(f"problem {prob.label!r} has no drift Jacobian")
    f0 = prob.drift(t, x)
    J = np.empty((x.shape[0], prob.d, prob.d))
    for j in range(prob.d):
        dx = _FD_STEP * (1.0 + np.abs(x[:, j]))
        xp = x.copy()
        xp[:, j] += dx
        J[:, :, j] = (prob.drift(t, xp) - f0) / dx[:, None]
    if counter is not None:
        counter.newton_drift += prob.d + 1
    return J


def _condition(G: np.ndarray, Jh: np.ndarray) -> np.ndarray:
    if G.shape[-1] == 1:
        g = np.abs(G[:, 0, 0])
        safe = np.where(g > 0.0, g, 1.0)
        return np.where(g > 0.0, (1.0 + np.abs(Jh[:, 0, 0])) / safe, np.inf)
    return np.linalg.cond(G)


def _invert(G: np.ndarray) -> np.ndarray:
    return 1.0 / G if G.shape[-1] == 1 else np.linalg.inv(G)


def solve_drift_stage(prob: SdeProblem, t: float, y: np.ndarray, rhs: np.ndarray,
                      gamma_h: float, cfg: NewtonConfig = DEFAULT_NEWTON,
                      counter: EvalCounter | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``H = rhs + gamma_h * a(t, H)`` for each row.

    Simplified Newton with the iteration matrix ``I - gamma_h J(t, y)``
    inverted once and reused.  A row whose residual contracts by less than
    ``REFRESH_RATE`` per iteration gets its matrix rebuilt at the current
    iterate.  Rows stop individually once the residual drops below
    ``tolerance * (1 + |y|)``.  Returns ``(H, a(t, H))``.
    """
    n, d = y.shape
    eye = np.eye(d)
    Jh = gamma_h * _jacobian(prob, t, y, cfg, counter)
    G = eye - Jh
    cond = _condition(G, Jh)
    bad = ~(cond <= COND_LIMIT)
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise SingularStageSystem(
            f"stage matrix I - a_ii h J is singular (condition estimate {cond[row]:.3g})", index=row)
    Ginv = _invert(G)
    if counter is not None:
        counter.implicit_solves += 1

    H = y.copy()
    aH = np.empty_like(y)
    bound = cfg.tolerance * (1.0 + np.linalg.norm(y, axis=1))
    prev = np.full(n, np.inf)
    active = np.arange(n)
    calls = 0
    while True:
        Ha = H[active]
        fa = prob.drift(t, Ha)
        calls += 1
        aH[active] = fa
        r = Ha - rhs[active] - gamma_h * fa
        norm = np.linalg.norm(r, axis=1)
        done = norm <= bound[active]
        if np.all(done):
            break
        if calls > cfg.max_iterations:
            row = int(active[np.flatnonzero(~done)[0]])
            raise NewtonDivergence(
                f"residual above tolerance after {cfg.max_iterations} iterations", index=row)
        keep = ~done
        slow = keep & (norm > REFRESH_RATE * prev[active])
        if np.any(slow):
            rows = active[slow]
            Jh_new = gamma_h * _jacobian(prob, t, H[rows], cfg, counter)
            G_new = eye - Jh_new
            ok = _condition(G_new, Jh_new) <= COND_LIMIT
            Ginv[rows[ok]] = _invert(G_new[ok])
        prev[active] = norm
        active = active[keep]
        H[active] -= np.einsum("nij,nj->ni", Ginv[active], r[keep])
    if counter is not None:
        counter.drift += 1
        counter.newton_drift += calls - 1
    return H, aH


def srk_step(t: ExtendedButcherTableau, prob: SdeProblem, tn: float, Yn, h: float,
             inc: WienerIncrements, cfg: NewtonConfig = DEFAULT_NEWTON,
             counter: EvalCounter | None = None,
             clamps: np.ndarray | None = None) -> np.ndarray:
    """Advance ``Yn`` by one step of size ``h``.

    ``Yn`` is ``(d,)`` or ``(n, d)``; the result has the same shape.
    ``clamps`` (shape ``(n,)``) is incremented for every diffusion
    evaluation at a state flagged by ``prob.clamp_mask``.
    """
    Y = np.asarray(Yn, dtype=float)
    single = Y.ndim == 1
    Y = Y.reshape(-1, prob.d)
    n = Y.shape[0]
    m = prob.m
    if inc.ihat.shape[-1] != m:
        raise ParameterOutOfRange(f"increments carry {inc.ihat.shape[-1]} noises, problem has {m}")
    ihat = np.broadcast_to(inc.ihat, (n, m))
    ihatkl = np.broadcast_to(inc.ihatkl, (n, m, m))
    sqh = math.sqrt(h)
    plan = stage_plan(t, m)
    s = t.s

    def diff(k, tt, x):
        if counter is not None:
            counter.diffusion += 1
        if clamps is not None and prob.clamp_mask is not None:
            np.add(clamps, prob.clamp_mask(x), out=clamps)
        return prob.diffusion_column(k, tt, x)

    def drift(tt, x):
        if counter is not None:
            counter.drift += 1
        return prob.drift(tt, x)

    fa: list[np.ndarray | None] = [None] * s
    gb: list[list[np.ndarray] | None] = [None] * s
    shared_a: dict[float, np.ndarray] = {}
    shared_b: dict[float, list[np.ndarray]] = {}

    def at_y(cache, c, k=None):
        # evaluations at the unperturbed state are shared between stages
        if k is None:
            if c not in cache:
                cache[c] = drift(tn + c * h, Y)
            return cache[c]
        lst = cache.setdefault(c, [None] * m)
        if lst[k] is None:
            lst[k] = diff(k, tn + c * h, Y)
        return lst[k]

    for i in range(s):
        if plan.need_drift[i]:
            ti = tn + t.c0[i] * h
            if plan.trivial_drift[i]:
                fa[i] = at_y(shared_a, float(t.c0[i]))
            else:
                rhs = Y.copy()
                for j in range(i):
                    if t.A0[i, j] != 0.0:
                        rhs += (t.A0[i, j] * h) * fa[j]
                    if t.B0[i, j] != 0.0:
                        for l in range(m):
                            rhs += t.B0[i, j] * gb[j][l] * ihat[:, l:l + 1]
                if plan.implicit[i]:
                    _, fa[i] = solve_drift_stage(prob, ti, Y, rhs, t.A0[i, i] * h, cfg, counter)
                else:
                    fa[i] = drift(ti, rhs)
        if plan.need_diff[i]:
            if plan.trivial_diff[i]:
                gb[i] = [at_y(shared_b, float(t.c1[i]), k) for k in range(m)]
            else:
                base = Y.copy()
                for j in range(i):
                    if t.A1[i, j] != 0.0:
                        base += (t.A1[i, j] * h) * fa[j]
                ti = tn + t.c1[i] * h
                row = []
                for k in range(m):
                    H = base.copy()
                    for j in range(i):
                        if t.B1[i, j] != 0.0:
                            H += (t.B1[i, j] * sqh) * gb[j][k]
                    row.append(diff(k, ti, H))
                gb[i] = row

    out = Y.copy()
    for i in range(s):
        if t.alpha[i] != 0.0:
            out += (t.alpha[i] * h) * fa[i]
        if t.beta1[i] != 0.0 or t.beta2[i] != 0.0:
            for k in range(m):
                w = t.beta1[i] * ihat[:, k] + t.beta2[i] * ihatkl[:, k, k] / sqh
                out += w[:, None] * gb[i][k]

    for i in range(s):
        if not plan.need_hat[i]:
            continue
        ti = tn + t.c2[i] * h
        for k in range(m):
            if plan.trivial_hat[i]:
                g = at_y(shared_b, float(t.c2[i]), k)
            else:
                H = Y.copy()
                for j in range(i):
                    if t.A2[i, j] != 0.0:
                        H += (t.A2[i, j] * h) * fa[j]
                    if t.B2[i, j] != 0.0:
                        for l in range(m):
                            if l != k:
                                H += (t.B2[i, j] / sqh) * ihatkl[:, k, l:l + 1] * gb[j][l]
                g = diff(k, ti, H)
            w = t.beta3[i] * ihat[:, k] + t.beta4[i] * sqh
            out += w[:, None] * g

    if not np.all(np.isfinite(out)):
        row = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
        raise NonFiniteState(f"non-finite state after step at t={tn}", index=row)
    return out[0] if single else out


@dataclass
class PathResult:
    terminal: np.ndarray
    path: np.ndarray | None = None
    clamps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    times: np.ndarray | None = None


def simulate(t: ExtendedButcherTableau, prob: SdeProblem, n_steps: int, seed: int,
             first: int = 0, n_traj: int = 1, mode: str = THREE_POINT,
             cfg: NewtonConfig = DEFAULT_NEWTON, record: bool = False,
             increments=None, counter: EvalCounter | None = None) -> PathResult:
    """Integrate trajectories ``first .. first+n_traj-1`` over ``[t0, T]``.

    Step ``n`` uses the increments addressed by ``(seed, trajectory, n)``
    unless an explicit sequence ``increments`` is supplied.
    """
    if n_steps < 1:
        raise ParameterOutOfRange(f"need at least one step, got {n_steps}")
    h = (prob.T - prob.t0) / n_steps
    Y = np.broadcast_to(prob.x0, (n_traj, prob.d)).copy()
    clamps = np.zeros(n_traj, dtype=np.int64)
    path = np.empty((n_steps + 1, n_traj, prob.d)) if record else None
    if record:
        path[0] = Y
    for step in range(n_steps):
        tn = prob.t0 + step * h
        inc = (increments[step] if increments is not None
               else increments_batch(h, prob.m, mode, seed, step, first, n_traj))
        try:
            Y = srk_step(t, prob, tn, Y, h, inc, cfg, counter, clamps)
        except (NewtonDivergence, SingularStageSystem, NonFiniteState) as exc:
            if exc.index is not None:
                exc.index += first
            raise
        if record:
            path[step + 1] = Y
    times = prob.t0 + h * np.arange(n_steps + 1) if record else None
    return PathResult(Y, path, clamps, times)


def integrate_path(t: ExtendedButcherTableau, prob: SdeProblem, n_steps: int, seed: int = 0,
                   trajectory: int = 0, mode: str = THREE_POINT,
                   cfg: NewtonConfig = DEFAULT_NEWTON, record: bool = False,
                   increments=None) -> PathResult:
    """Single trajectory; ``terminal`` is ``(d,)`` and ``path`` ``(N+1, d)``."""
    res = simulate(t, prob, n_steps, seed, trajectory, 1, mode, cfg, record, increments)
    return PathResult(res.terminal[0], None if res.path is None else res.path[:, 0],
                      res.clamps, res.times)
