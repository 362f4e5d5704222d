"""Stability of the SRK families on ``dX = lam X dt + mu X dW``.

With ``hhat = lam h`` and ``k = mu sqrt(h)`` one step of either family is
``Y_{n+1} = R_n Y_n`` where, writing ``xi = I/sqrt(h)`` for the scaled
increment,

    R_n = Gamma - Lambda + Sigma xi + Lambda xi^2

(``Lambda = 0`` for the order one family).  All functions accept scalars or
numpy arrays for ``hhat`` and ``k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidRange, ParameterOutOfRange, PoleAtPoint, TwoPointModeUnsupported
from .randvars import THREE_POINT, TWO_POINT
from .tableau import ExtendedButcherTableau, Order1FamilyParams

POLE_TOL = 1e-9
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class StabilityCoefficients:
    gamma: complex | np.ndarray
    sigma: complex | np.ndarray
    lam: complex | np.ndarray = 0.0
    second_order: bool = False

    def outcomes(self, mode: str = THREE_POINT) -> tuple[list, list[float]]:
        """Values of ``R_n`` on the discrete increment support with their probabilities."""
        g, s, l = self.gamma, self.sigma, self.lam
        if mode == TWO_POINT:
            return [g + s, g - s], [0.5, 0.5]
        return ([g + 2 * l + SQRT3 * s, g - l, g + 2 * l - SQRT3 * s],
                [1 / 6, 2 / 3, 1 / 6])


class Verdict(NamedTuple):
    stable: bool | np.ndarray
    value: float | np.ndarray


def pole_mask(t: ExtendedButcherTableau, hhat) -> np.ndarray:
    """True where ``hhat`` is within ``POLE_TOL`` of a pole of Gamma or Sigma."""
    cs = (t.params[0], t.params[2]) if t.family == "order1" else (t.params[0], t.params[1])
    mask = np.zeros(np.shape(hhat), dtype=bool)
    for c in cs:
        if c != 0.0:
            mask |= np.abs(np.asarray(hhat) - 1.0 / c) < POLE_TOL
    return mask


def _check_poles(cs, hhat) -> None:
    for c in cs:
        if c != 0.0 and np.any(np.abs(np.asarray(hhat) - 1.0 / c) < POLE_TOL):
            raise PoleAtPoint(f"hhat = {hhat} hits the pole 1/{c:g} of the stability function")


def coefficients_order1(p: Order1FamilyParams | tuple, hhat, k) -> StabilityCoefficients:
    c1, c2, c3, c4, c5 = p.astuple() if isinstance(p, Order1FamilyParams) else p
    _check_poles((c1, c3), hhat)
    hh = np.asarray(hhat, dtype=complex)
    kk = np.asarray(k, dtype=complex)
    d3 = 1.0 - c3 * hh
    gamma = 1.0 + (hh - c3 * hh**2 + c5 * (c2 + c3 - c1) * hh**2) / ((1.0 - c1 * hh) * d3)
    sigma = c4 * c5 * hh / d3 * kk + kk
    return StabilityCoefficients(_unwrap(gamma), _unwrap(sigma), 0.0)


def coefficients_order2(c1: float, c2: float, hhat, k) -> StabilityCoefficients:
    """Independent of the diffusion coefficients ``c3``, ``c4``."""
    _check_poles((c1, c2), hhat)
    hh = np.asarray(hhat, dtype=complex)
    kk = np.asarray(k, dtype=complex)
    den = (1.0 - c1 * hh) * (1.0 - c2 * hh)
    gamma = 1.0 + (hh + (0.5 - c1 - c2) * hh**2) / den
    sigma = (hh - 0.5 * (c1 + c2) * hh**2) / den * kk + kk
    return StabilityCoefficients(_unwrap(gamma), _unwrap(sigma), _unwrap(0.5 * kk**2), True)


def _unwrap(a: np.ndarray):
    return complex(a) if a.ndim == 0 else a


def coefficients(t: ExtendedButcherTableau, hhat, k) -> StabilityCoefficients:
    if t.family == "order1":
        return coefficients_order1(t.params, hhat, k)
    if t.family == "order2":
        return coefficients_order2(t.params[0], t.params[1], hhat, k)
    raise ParameterOutOfRange(f"{t.label}: no closed-form stability function for this tableau")


def _check_mode(coef: StabilityCoefficients, mode: str) -> None:
    if mode == TWO_POINT and coef.second_order:
        raise TwoPointModeUnsupported("two-point increments are only defined for the order one family")


def as_indicator(coef: StabilityCoefficients, mode: str = THREE_POINT):
    """Left-hand side of the product condition for almost-sure decay."""
    _check_mode(coef, mode)
    g, s, l = coef.gamma, coef.sigma, coef.lam
    if mode == TWO_POINT:
        return np.abs(g * g - s * s)
    return np.abs((g + 2 * l) ** 2 - 3 * s * s) * np.abs(g - l) ** 4


def as_stable(coef: StabilityCoefficients, mode: str = THREE_POINT) -> Verdict:
    """Asymptotic (almost sure) stability; strict inequality ``indicator < 1``."""
    ind = as_indicator(coef, mode)
    return Verdict(ind < 1.0, ind)


def expected_log_abs_r(coef: StabilityCoefficients, mode: str = THREE_POINT):
    """``E log|R_n|`` summed directly over the support (``-inf`` if some ``R_n = 0``)."""
    _check_mode(coef, mode)
    values, probs = coef.outcomes(mode)
    with np.errstate(divide="ignore"):
        return sum(p * np.log(np.abs(v)) for v, p in zip(values, probs))


def ms_function(coef: StabilityCoefficients):
    return np.abs(coef.gamma) ** 2 + np.abs(coef.sigma) ** 2 + 2 * np.abs(coef.lam) ** 2


def ms_stable(coef: StabilityCoefficients, mode: str = THREE_POINT) -> Verdict:
    """Mean-square stability; the same function serves both increment laws."""
    _check_mode(coef, mode)
    r = ms_function(coef)
    return Verdict(r < 1.0, r)


class ExactRegions(NamedTuple):
    asymptotic: bool | np.ndarray
    pth_mean: bool | np.ndarray
    mean_square: bool | np.ndarray


def exact_regions(lam, mu, p: float = 2.0) -> ExactRegions:
    """Stability of the test equation itself (works equally for ``(hhat, k)``)."""
    if not p > 0:
        raise ParameterOutOfRange(f"p must be positive, got {p}")
    lam = np.asarray(lam, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    asym = (lam - 0.5 * mu * mu).real < 0
    pth = 2 * lam.real - (mu * mu).real + p * mu.real**2 < 0
    ms = 2 * lam.real + np.abs(mu) ** 2 < 0
    if asym.ndim == 0:
        return ExactRegions(bool(asym), bool(pth), bool(ms))
    return ExactRegions(asym, pth, ms)


@dataclass
class StabilityReport:
    scheme: str
    hhat: float
    k: float
    coefficients: StabilityCoefficients
    as_three_point: Verdict
    as_two_point: Verdict | None
    ms: Verdict
    exact: ExactRegions


def stability_check(t: ExtendedButcherTableau, lam: float, mu: float, h: float) -> StabilityReport:
    if not h > 0:
        raise ParameterOutOfRange(f"step size must be positive, got {h}")
    hhat = lam * h
    k = mu * math.sqrt(h)
    coef = coefficients(t, hhat, k)
    as3 = as_stable(coef, THREE_POINT)
    as2 = None if coef.second_order else as_stable(coef, TWO_POINT)
    ms = ms_stable(coef)
    return StabilityReport(
        t.label, hhat, k, coef,
        Verdict(bool(as3.stable), float(as3.value)),
        None if as2 is None else Verdict(bool(as2.stable), float(as2.value)),
        Verdict(bool(ms.stable), float(ms.value)),
        exact_regions(lam, mu))


# grey levels, darkest first: numerical MS, numerical AS, exact MS, exact AS, none
SHADES = (48, 96, 160, 208, 255)


@dataclass
class RegionRaster:
    """Classified grid over the real ``(hhat, k^2)`` plane.

    Flag arrays have shape ``(ny, nx)``; row ``j`` is ``k2[j]`` (ascending),
    column ``i`` is ``hhat[i]``.  Pole cells are unclassified (all numerical
    flags false).
    """

    scheme: str
    mode: str
    hhat: np.ndarray
    k2: np.ndarray
    num_as: np.ndarray
    num_ms: np.ndarray
    exact_as: np.ndarray
    exact_ms: np.ndarray
    pole: np.ndarray

    @property
    def ms_outside_as(self) -> int:
        """Cells that are numerically MS- but not AS-stable."""
        return int(np.count_nonzero(self.num_ms & ~self.num_as))

    def shade(self) -> np.ndarray:
        """Grey level per cell, top row = largest ``k^2``."""
        g = np.full(self.pole.shape, SHADES[4], dtype=np.uint8)
        g[self.exact_as] = SHADES[3]
        g[self.exact_ms] = SHADES[2]
        g[self.num_as] = SHADES[1]
        g[self.num_ms] = SHADES[0]
        g[self.pole] = SHADES[4]
        return g[::-1]

    def to_csv(self) -> str:
        lines = ["hhat,k2,numAS,numMS,exactAS,exactMS,pole"]
        H, K = np.meshgrid(self.hhat, self.k2)
        cols = [self.num_as, self.num_ms, self.exact_as, self.exact_ms, self.pole]
        for j in range(K.shape[0]):
            for i in range(K.shape[1]):
                flags = ",".join("1" if c[j, i] else "0" for c in cols)
                lines.append(f"{H[j, i]:.17g},{K[j, i]:.17g},{flags}")
        return "\n".join(lines) + "\n"

    def to_pgm(self, binary: bool = True) -> bytes:
        g = self.shade()
        ny, nx = g.shape
        comment = f"# {self.scheme} {self.mode} hhat[{self.hhat[0]:.6g},{self.hhat[-1]:.6g}] " \
                  f"k2[{self.k2[0]:.6g},{self.k2[-1]:.6g}] shades {' '.join(map(str, SHADES))}"
        if binary:
            return f"P5\n{comment}\n{nx} {ny}\n255\n".encode("ascii") + g.tobytes()
        body = "\n".join(" ".join(str(v) for v in row) for row in g)
        return f"P2\n{comment}\n{nx} {ny}\n255\n{body}\n".encode("ascii")


def _classify_rows(t: ExtendedButcherTableau, mode: str, hhat: np.ndarray, k2: np.ndarray):
    H, K2 = np.meshgrid(hhat, k2)
    K = np.sqrt(K2)
    pole = pole_mask(t, H)
    Hs = np.where(pole, 0.0, H)
    coef = coefficients(t, Hs, K)
    num_as = as_stable(coef, mode).stable & ~pole
    num_ms = ms_stable(coef, mode).stable & ~pole
    ex = exact_regions(H, K)
    return num_as, num_ms, ex.asymptotic, ex.mean_square, pole


def rasterize(t: ExtendedButcherTableau, mode: str = THREE_POINT,
              hhat_range: tuple[float, float] = (-8.0, 2.0),
              k2_range: tuple[float, float] = (0.0, 8.0),
              resolution: tuple[int, int] = (800, 800), threads: int = 1) -> RegionRaster:
    """Classify cell centres of an ``nx`` by ``ny`` grid."""
    nx, ny = resolution
    (h0, h1), (k0, k1) = hhat_range, k2_range
    if nx < 2 or ny < 2:
        raise InvalidRange(f"resolution must be at least 2x2, got {nx}x{ny}")
    if not (math.isfinite(h0) and math.isfinite(h1) and h0 < h1):
        raise InvalidRange(f"invalid hhat range [{h0}, {h1}]")
    if not (math.isfinite(k0) and math.isfinite(k1) and 0.0 <= k0 < k1):
        raise InvalidRange(f"invalid k^2 range [{k0}, {k1}]")
    if mode == TWO_POINT and t.family != "order1":
        raise TwoPointModeUnsupported("two-point increments are only defined for the order one family")
    hhat = h0 + (np.arange(nx) + 0.5) * (h1 - h0) / nx
    k2 = k0 + (np.arange(ny) + 0.5) * (k1 - k0) / ny

    bounds = np.linspace(0, ny, max(1, min(threads, ny)) + 1).astype(int)
    chunks = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda ab: _classify_rows(t, mode, hhat, k2[ab[0]:ab[1]]), chunks))
    flags = [np.vstack([p[i] for p in parts]) for i in range(5)]
    return RegionRaster(t.label, mode, hhat, k2, *flags)
