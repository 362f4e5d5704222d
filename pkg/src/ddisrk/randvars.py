"""Discrete Wiener increments with counter-addressed random streams.

Every uniform variate is a pure function of ``(seed, trajectory, step,
variable)``: the trajectory axis is cut into fixed blocks of
``TRAJ_BLOCK`` paths, and each ``(block, step)`` pair owns one Philox
counter range in which the draws are laid out trajectory-major.  Any
contiguous slice of trajectories can therefore be generated in one
vectorised call, and the result does not depend on how trajectories are
distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Philox

from .errors import NonpositiveStepSize, ParameterOutOfRange, ZeroDimension

THREE_POINT = "three-point"
TWO_POINT = "two-point"
MODES = (THREE_POINT, TWO_POINT)

TRAJ_BLOCK = 1 << 20
_MASK64 = (1 << 64) - 1
_TO_UNIT = 2.0 ** -53


def parse_mode(mode: str) -> str:
    key = mode.strip().lower()
    if key in ("3pt", "3p", "three-point", "three_point", "3"):
        return THREE_POINT
    if key in ("2pt", "2p", "two-point", "two_point", "2"):
        return TWO_POINT
    raise ParameterOutOfRange(f"unknown random-variable mode {mode!r}")


@dataclass(frozen=True)
class RngStream:
    """Address of one trajectory's draws at one step."""

    seed: int
    trajectory: int = 0
    step: int = 0


def _raw_block(seed: int, step: int, block: int, start: int, count: int) -> np.ndarray:
    """``count`` raw 64-bit words from position ``start`` of a (block, step) stream."""
    first = start // 4
    skip = start - 4 * first
    bitgen = Philox(key=np.array([seed & _MASK64, 0], dtype=np.uint64),
                    counter=np.array([first, step, block, 0], dtype=np.uint64))
    return bitgen.random_raw(skip + count)[skip:]


def uniforms(seed: int, step: int, first: int, n_traj: int, n_vars: int) -> np.ndarray:
    """Uniform ``[0, 1)`` variates of shape ``(n_traj, n_vars)``.

    Row ``r`` holds the draws of trajectory ``first + r`` at ``step``.
    """
    out = np.empty((n_traj, n_vars))
    row = 0
    traj = first
    while row < n_traj:
        block, local = divmod(traj, TRAJ_BLOCK)
        take = min(n_traj - row, TRAJ_BLOCK - local)
        raw = _raw_block(seed, step, block, local * n_vars, take * n_vars)
        out[row:row + take] = ((raw >> np.uint64(11)) * _TO_UNIT).reshape(take, n_vars)
        row += take
        traj += take
    return out


def ihat_from_uniform(u, h: float, mode: str = THREE_POINT) -> np.ndarray:
    """Map uniforms to the three-point (or two-point) increment law.

    Three-point: ``-sqrt(3h)`` on ``[0, 1/6)``, ``0`` on ``[1/6, 5/6)`` and
    ``+sqrt(3h)`` on ``[5/6, 1)``.
    """
    u = np.asarray(u)
    if mode == TWO_POINT:
        return np.where(u < 0.5, -math.sqrt(h), math.sqrt(h))
    r = math.sqrt(3.0 * h)
    return np.where(u < 1.0 / 6.0, -r, np.where(u < 5.0 / 6.0, 0.0, r))


def itilde_from_uniform(u, h: float) -> np.ndarray:
    return np.where(np.asarray(u) < 0.5, -math.sqrt(h), math.sqrt(h))


def _check(h: float, m: int = 1) -> None:
    if not h > 0.0:
        raise NonpositiveStepSize(f"step size must be positive, got {h}")
    if m < 1:
        raise ZeroDimension(f"Wiener dimension must be at least 1, got {m}")


def sample_ihat(h: float, mode: str, stream: RngStream) -> float:
    _check(h)
    u = uniforms(stream.seed, stream.step, stream.trajectory, 1, 1)[0, 0]
    return float(ihat_from_uniform(u, h, mode))


@dataclass(frozen=True, eq=False)
class WienerIncrements:
    """One step's random variables.

    Arrays carry an optional leading batch axis: ``ihat`` is ``(..., m)``,
    ``itilde`` is ``(..., m-1)`` and ``ihatkl`` is ``(..., m, m)``.
    """

    h: float
    ihat: np.ndarray
    itilde: np.ndarray
    ihatkl: np.ndarray

    @property
    def m(self) -> int:
        return self.ihat.shape[-1]


def mixed_area(h: float, ihat, itilde) -> np.ndarray:
    """Assemble the ``(k, l)`` matrix from the independent draws.

    Diagonal ``(I_k^2 - h)/2``; above the diagonal ``(I_k I_l - sqrt(h) J_k)/2``;
    below it ``(I_k I_l + sqrt(h) J_l)/2``.
    """
    ihat = np.asarray(ihat, dtype=float)
    itilde = np.asarray(itilde, dtype=float)
    m = ihat.shape[-1]
    sqh = math.sqrt(h)
    kl = 0.5 * ihat[..., :, None] * ihat[..., None, :]
    for k in range(m):
        kl[..., k, k] = 0.5 * (ihat[..., k] ** 2 - h)
        for l in range(k + 1, m):
            kl[..., k, l] -= 0.5 * sqh * itilde[..., k]
            kl[..., l, k] += 0.5 * sqh * itilde[..., k]
    return kl


def increments_from_values(h: float, ihat, itilde=None) -> WienerIncrements:
    """Increments from given outcomes; ``itilde`` defaults to zeros."""
    _check(h)
    ihat = np.asarray(ihat, dtype=float)
    shape = (*ihat.shape[:-1], ihat.shape[-1] - 1)
    itilde = np.zeros(shape) if itilde is None else np.asarray(itilde, dtype=float).reshape(shape)
    return WienerIncrements(h, ihat, itilde, mixed_area(h, ihat, itilde))


def increments_batch(h: float, m: int, mode: str, seed: int, step: int,
                     first: int, n_traj: int) -> WienerIncrements:
    """Increments for trajectories ``first .. first+n_traj-1`` at ``step``.

    Uses exactly ``2m-1`` variates per trajectory: ``m`` for ``ihat`` followed
    by ``m-1`` for ``itilde``.
    """
    _check(h, m)
    u = uniforms(seed, step, first, n_traj, 2 * m - 1)
    ihat = ihat_from_uniform(u[:, :m], h, mode)
    itilde = itilde_from_uniform(u[:, m:], h)
    return WienerIncrements(h, ihat, itilde, mixed_area(h, ihat, itilde))


def build_increments(h: float, m: int, mode: str, stream: RngStream) -> WienerIncrements:
    """Single-trajectory increments (no batch axis)."""
    b = increments_batch(h, m, mode, stream.seed, stream.step, stream.trajectory, 1)
    return WienerIncrements(h, b.ihat[0], b.itilde[0], b.ihatkl[0])
