"""SDE problem model and the built-in test problems.

Callbacks are vectorised over a leading batch axis: states have shape
``(n, d)``, ``drift(t, x)`` and ``diffusion_column(j, t, x)`` return
``(n, d)`` and ``drift_jacobian(t, x)`` returns ``(n, d, d)``.  Columns are
indexed from zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterOutOfRange, UnknownProblem, ZeroInitialValue


@dataclass(frozen=True)
class Functional:
    id: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(x)


@dataclass(frozen=True, eq=False)
class SdeProblem:
    """Ito SDE ``dX = a(t, X) dt + sum_j b^j(t, X) dW^j`` on ``[t0, T]``.

    ``exact_moment(functional_id, t)`` gives a reference value of
    ``E f(X_t)`` when one is known.  ``clamp_mask(x)``, if set, flags the
    states at which a diffusion evaluation had to clamp a radicand.
    """

    d: int
    m: int
    drift: Callable
    diffusion_column: Callable
    x0: np.ndarray
    t0: float = 0.0
    T: float = 1.0
    drift_jacobian: Callable | None = None
    exact_moment: Callable[[str, float], float] | None = None
    functionals: dict = field(default_factory=dict)
    clamp_mask: Callable | None = None
    label: str = "custom"

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ParameterOutOfRange(f"need d, m >= 1, got d={self.d}, m={self.m}")
        if not self.t0 < self.T:
            raise ParameterOutOfRange(f"need t0 < T, got [{self.t0}, {self.T}]")
        x0 = np.array(self.x0, dtype=float).reshape(self.d)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)

    def functional(self, key: str | Functional) -> Functional:
        if isinstance(key, Functional):
            return key
        try:
            return self.functionals[key]
        except KeyError:
            raise ParameterOutOfRange(
                f"problem {self.label!r} has no functional {key!r}; "
                f"available: {', '.join(self.functionals)}") from None


def _identity(x):
    return x[..., 0]


def _square(x):
    return np.sum(x * x, axis=-1)


def linear_test_problem(lam, mu, x0=1.0, t0: float = 0.0, T: float = 1.0) -> SdeProblem:
    """``dX = lam X dt + mu X dW``.

    Real parameters give a scalar problem; complex ones are encoded as a real
    two-dimensional system ``(Re X, Im X)``.
    """
    if x0 == 0:
        raise ZeroInitialValue("the linear test equation needs x0 != 0")
    lam_c, mu_c, x0_c = complex(lam), complex(mu), complex(x0)
    is_complex = any(v.imag != 0.0 for v in (lam_c, mu_c, x0_c))

    def exact(fid, t):
        dt = t - t0
        if fid == "identity":
            return (x0_c * np.exp(lam_c * dt)).real
        if fid == "square":
            return abs(x0_c) ** 2 * math.exp((2 * lam_c.real + abs(mu_c) ** 2) * dt)
        raise ParameterOutOfRange(f"no exact moment for {fid!r}")

    functionals = {"identity": Functional("identity", _identity),
                   "square": Functional("square", _square)}

    if not is_complex:
        lr, mr = lam_c.real, mu_c.real
        return SdeProblem(
            d=1, m=1,
            drift=lambda t, x: lr * x,
            diffusion_column=lambda j, t, x: mr * x,
            drift_jacobian=lambda t, x: np.full((x.shape[0], 1, 1), lr),
            x0=[x0_c.real], t0=t0, T=T, exact_moment=exact,
            functionals=functionals, label="linear")

    L = np.array([[lam_c.real, -lam_c.imag], [lam_c.imag, lam_c.real]])
    U = np.array([[mu_c.real, -mu_c.imag], [mu_c.imag, mu_c.real]])
    return SdeProblem(
        d=2, m=1,
        drift=lambda t, x: x @ L.T,
        diffusion_column=lambda j, t, x: x @ U.T,
        drift_jacobian=lambda t, x: np.broadcast_to(L, (x.shape[0], 2, 2)),
        x0=[x0_c.real, x0_c.imag], t0=t0, T=T, exact_moment=exact,
        functionals=functionals, label="linear")


def _poly_arsinh(x):
    z = np.arcsinh(x[..., 0])
    return z**3 - 6 * z**2 + 8 * z


def sinh_problem() -> SdeProblem:
    """Scalar problem with solution ``sinh(t + W_t)`` on ``[0, 2]``.

    The functional ``p(arsinh x)`` with ``p(z) = z^3 - 6z^2 + 8z`` has
    ``E f(X_t) = t^3 - 3t^2 + 2t``.
    """
    def drift(t, x):
        return 0.5 * x + np.sqrt(x * x + 1.0)

    def diffusion(j, t, x):
        return np.sqrt(x * x + 1.0)

    def jac(t, x):
        return (0.5 + x / np.sqrt(x * x + 1.0))[..., None]

    def exact(fid, t):
        if fid != "p_arsinh":
            raise ParameterOutOfRange(f"no exact moment for {fid!r}")
        return t**3 - 3 * t**2 + 2 * t

    return SdeProblem(
        d=1, m=1, drift=drift, diffusion_column=diffusion, drift_jacobian=jac,
        x0=[0.0], t0=0.0, T=2.0, exact_moment=exact,
        functionals={"p_arsinh": Functional("p_arsinh", _poly_arsinh)},
        label="sinh")


WIENER10_COEFFS = (1 / 10, 1 / 15, 1 / 20, 1 / 25, 1 / 40, 1 / 25, 1 / 20, 1 / 15, 1 / 20, 1 / 25)
WIENER10_SHIFTS = (1 / 2, 1 / 4, 1 / 5, 1 / 10, 1 / 20, 1 / 2, 1 / 4, 1 / 5, 1 / 10, 1 / 20)


def wiener10_moment_closed_form(t: float) -> float:
    q = 68013 / 14629060
    return -q + (q + 1.0) * math.exp(731453 / 360000 * t)


def wiener10_moment_ode(t: float) -> float:
    """Second moment from the moment equations of the drift/diffusion as coded.

    ``m2' = 2 m2 + S e^t + K`` with ``S = sum c_j^2`` and
    ``K = sum c_j^2 s_j``; differs from the closed form by about 1.2% at t=1.
    """
    S = sum(c * c for c in WIENER10_COEFFS)
    K = sum(c * c * s for c, s in zip(WIENER10_COEFFS, WIENER10_SHIFTS))
    return math.exp(2 * t) * (1.0 + S + K / 2) - S * math.exp(t) - K / 2


def wiener10_problem() -> SdeProblem:
    """``dX = X dt + sum_j c_j sqrt(X + s_j) dW^j``, X_0 = 1 on ``[0, 1]``.

    Negative radicands are clamped to zero; ``clamp_mask`` reports where.
    """
    coeffs = np.array(WIENER10_COEFFS)
    shifts = np.array(WIENER10_SHIFTS)
    floor = -shifts.min()

    def diffusion(j, t, x):
        return coeffs[j] * np.sqrt(np.maximum(x + shifts[j], 0.0))

    def exact(fid, t):
        if fid != "square":
            raise ParameterOutOfRange(f"no exact moment for {fid!r}")
        return wiener10_moment_closed_form(t)

    return SdeProblem(
        d=1, m=10,
        drift=lambda t, x: x,
        diffusion_column=diffusion,
        drift_jacobian=lambda t, x: np.ones((x.shape[0], 1, 1)),
        x0=[1.0], t0=0.0, T=1.0, exact_moment=exact,
        functionals={"square": Functional("square", _square)},
        clamp_mask=lambda x: x[..., 0] < floor,
        label="wiener10")


PROBLEMS = ("linear", "sinh", "wiener10")


def get_problem(name: str, lam: float = -1.0, mu: float = 1.0, x0: float = 1.0,
                T: float | None = None) -> SdeProblem:
    key = name.strip().lower()
    if key == "linear":
        return linear_test_problem(lam, mu, x0, T=1.0 if T is None else T)
    if key == "sinh":
        return sinh_problem()
    if key == "wiener10":
        return wiener10_problem()
    raise UnknownProblem(f"unknown problem {name!r}; known: {', '.join(PROBLEMS)}")
