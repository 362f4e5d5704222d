"""Extended Butcher arrays for the drift-implicit SRK class.

A scheme is described by three coefficient blocks (drift stages, diffusion
stages, and the mixed-area stages) plus the weight vectors ``alpha`` and
``beta1..beta4``.  Two parametric families are provided: a weak order one
family with five free coefficients and a weak order two family with four.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFamilyParameter, ParameterOutOfRange, UnknownScheme

VALIDATION_TOL = 1e-12

#: Diagonal entry of the two-stage A-stable SDIRK method of order three.
SDIRK3_GAMMA = (3.0 + math.sqrt(3.0)) / 6.0

EXPLICIT = "explicit"
DIAGONALLY_IMPLICIT = "diagonally drift-implicit"
OTHER = "other"


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ExtendedButcherTableau:
    """Coefficients of an ``s``-stage scheme.

    ``A0/B0`` couple into the drift stages, ``A1/B1`` into the diffusion
    stages and ``A2/B2`` into the mixed-area stages; ``c0..c2`` are the
    matching abscissae.  ``family`` and ``params`` record how the tableau was
    built, which the stability module uses to pick the closed form.
    """

    label: str
    alpha: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    beta4: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    order_det: int = 1
    order_stoch: int = 1
    family: str | None = None
    params: tuple = field(default=())

    def __post_init__(self):
        for name in ("alpha", "beta1", "beta2", "beta3", "beta4", "A0", "A1",
                     "A2", "B0", "B1", "B2", "c0", "c1", "c2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def s(self) -> int:
        return len(self.alpha)

    @property
    def orders(self) -> tuple[int, int]:
        return (self.order_det, self.order_stoch)

    def to_text(self) -> str:
        """Render the array in the block layout ``c | A | B`` / weights."""
        def fmt(x):
            return f"{x: .6g}"

        rows = []
        for c, A, B in ((self.c0, self.A0, self.B0), (self.c1, self.A1, self.B1),
                        (self.c2, self.A2, self.B2)):
            for i in range(self.s):
                rows.append(" ".join([fmt(c[i]), "|", *map(fmt, A[i]), "|", *map(fmt, B[i])]))
            rows.append("-" * 12)
        pad = " " * len(fmt(0.0))
        rows[-1] = "=" * 12
        rows.append(" ".join([pad, "|", *map(fmt, self.alpha), "|", *map(fmt, self.beta1),
                              "|", *map(fmt, self.beta2)]))
        rows.append(" ".join([pad, "|", *[pad] * self.s, "|", *map(fmt, self.beta3),
                              "|", *map(fmt, self.beta4)]))
        head = f"{self.label} (p_D, p_S) = ({self.order_det},{self.order_stoch})"
        return "\n".join([head, *rows])


@dataclass(frozen=True)
class Order1FamilyParams:
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    c5: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.astuple()):
            raise ParameterOutOfRange(f"non-finite family coefficient in {self}")

    def astuple(self) -> tuple[float, ...]:
        return (self.c1, self.c2, self.c3, self.c4, self.c5)


@dataclass(frozen=True)
class Order2FamilyParams:
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 1.0
    c4: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.astuple()):
            raise ParameterOutOfRange(f"non-finite family coefficient in {self}")
        if self.c3 == 0.0 or self.c4 == 0.0:
            raise DegenerateFamilyParameter(
                f"c3 and c4 must be nonzero, got c3={self.c3}, c4={self.c4}")

    def astuple(self) -> tuple[float, ...]:
        return (self.c1, self.c2, self.c3, self.c4)


def _close(a, b) -> bool:
    return abs(a - b) <= VALIDATION_TOL


def _order1_catalogue(p: Order1FamilyParams) -> tuple[str, int, int]:
    c1, c2, c3, c4, c5 = p.astuple()
    if all(_close(v, 0.0) for v in (c1, c2, c3, c4, c5)):
        return "EulerMaruyama", 1, 1
    if _close(c1, 0.5) and all(_close(v, 0.0) for v in (c2, c3, c4, c5)):
        return "DDIRDI1", 2, 1
    if _close(c1, 0.0) and _close(c4, 1.0) and _close(c3, c5) and _close(c2 + c3, 1.0) \
            and -VALIDATION_TOL <= c3 <= 1.0 + VALIDATION_TOL:
        # theta method: second order for ODEs only at theta = 1/2
        return f"DDIRDI2({c3:g})", (2 if _close(c3, 0.5) else 1), 1
    if _close(c1, SDIRK3_GAMMA) and _close(c3, SDIRK3_GAMMA) \
            and _close(c2, -1.0 / math.sqrt(3.0)) and _close(c5, 0.5):
        return ("DDIRDI3" if _close(c4, 1.5) else "DDISRK(3,1)"), 3, 1
    return "order1-family", 1, 1


def build_order1_tableau(p: Order1FamilyParams, label: str | None = None) -> ExtendedButcherTableau:
    """Two-stage member of the weak order one family.

    Only the drift stages use two stages; the diffusion enters through the
    first (explicit) stage alone.
    """
    c1, c2, c3, c4, c5 = p.astuple()
    name, pd, ps = _order1_catalogue(p)
    z = np.zeros((2, 2))
    return ExtendedButcherTableau(
        label=label or name,
        alpha=[1.0 - c5, c5],
        beta1=[1.0, 0.0], beta2=[0.0, 0.0], beta3=[0.0, 0.0], beta4=[0.0, 0.0],
        A0=[[c1, 0.0], [c2, c3]], A1=z, A2=z,
        B0=[[0.0, 0.0], [c4, 0.0]], B1=z, B2=z,
        c0=[c1, c2 + c3], c1=[0.0, 0.0], c2=[0.0, 0.0],
        order_det=pd, order_stoch=ps,
        family="order1", params=p.astuple(),
    )


def _order2_catalogue(p: Order2FamilyParams) -> tuple[str, int, int]:
    c1, c2, c3, c4 = p.astuple()
    unit = _close(c3, 1.0) and _close(c4, 1.0)
    if _close(c1, 0.0) and _close(c2, 0.0) and unit:
        return "RI6", 2, 2
    if _close(c1, 0.0) and _close(c2, 0.5) and unit:
        return "DDIRDI4", 2, 2
    if _close(c1, c2) and unit:
        pd = 3 if _close(c1, SDIRK3_GAMMA) else 2
        return ("DDIRDI5" if pd == 3 else f"DDIRDI5({c1:g})"), pd, 2
    if _close(c1, SDIRK3_GAMMA) and _close(c2, SDIRK3_GAMMA):
        return "DDISRK(3,2)", 3, 2
    return "order2-family", 2, 2


def build_order2_tableau(p: Order2FamilyParams, label: str | None = None) -> ExtendedButcherTableau:
    """Three-stage member of the weak order two family."""
    c1, c2, c3, c4 = p.astuple()
    name, pd, ps = _order2_catalogue(p)
    z = np.zeros((3, 3))
    return ExtendedButcherTableau(
        label=label or name,
        alpha=[0.5, 0.5, 0.0],
        beta1=[1.0 - 1.0 / (2 * c3**2), 1.0 / (4 * c3**2), 1.0 / (4 * c3**2)],
        beta2=[0.0, 1.0 / (2 * c3), -1.0 / (2 * c3)],
        beta3=[-1.0 / (2 * c4**2), 1.0 / (4 * c4**2), 1.0 / (4 * c4**2)],
        beta4=[0.0, 1.0 / (2 * c4), -1.0 / (2 * c4)],
        A0=[[c1, 0, 0], [1.0 - c1 - c2, c2, 0], [0, 0, 0]],
        A1=[[0, 0, 0], [c3**2, 0, 0], [c3**2, 0, 0]],
        A2=z,
        B0=[[0, 0, 0], [1.0, 0, 0], [0, 0, 0]],
        B1=[[0, 0, 0], [c3, 0, 0], [-c3, 0, 0]],
        B2=[[0, 0, 0], [c4, 0, 0], [-c4, 0, 0]],
        c0=[c1, 1.0 - c1, 0.0], c1=[0.0, c3**2, c3**2], c2=[0.0, 0.0, 0.0],
        order_det=pd, order_stoch=ps,
        family="order2", params=p.astuple(),
    )


SCHEME_NAMES = ("EulerMaruyama", "DDIRDI1", "DDIRDI2", "DDIRDI3", "RI6", "DDIRDI4", "DDIRDI5")
_ALIASES = {n.lower(): n for n in SCHEME_NAMES}
_ALIASES.update({"em": "EulerMaruyama", "euler-maruyama": "EulerMaruyama", "euler": "EulerMaruyama"})


def named_scheme(name: str, param: float | None = None) -> ExtendedButcherTableau:
    """Look up a catalogued scheme.

    ``param`` is theta for DDIRDI2 (default 1/2) and the common diagonal entry
    ``c1 = c2`` for DDIRDI5 (default ``(3+sqrt 3)/6``); other schemes take no
    parameter.
    """
    key = _ALIASES.get(name.strip().lower())
    if key is None:
        raise UnknownScheme(f"unknown scheme {name!r}; known: {', '.join(SCHEME_NAMES)}")
    if param is not None and key not in ("DDIRDI2", "DDIRDI5"):
        raise ParameterOutOfRange(f"scheme {key} takes no parameter")

    if key == "EulerMaruyama":
        return build_order1_tableau(Order1FamilyParams())
    if key == "DDIRDI1":
        return build_order1_tableau(Order1FamilyParams(c1=0.5))
    if key == "DDIRDI2":
        theta = 0.5 if param is None else float(param)
        if not 0.0 <= theta <= 1.0:
            raise ParameterOutOfRange(f"theta must lie in [0, 1], got {theta}")
        return build_order1_tableau(
            Order1FamilyParams(c1=0.0, c2=1.0 - theta, c3=theta, c4=1.0, c5=theta),
            label=f"DDIRDI2({theta:g})")
    if key == "DDIRDI3":
        return build_order1_tableau(Order1FamilyParams(
            c1=SDIRK3_GAMMA, c2=-1.0 / math.sqrt(3.0), c3=SDIRK3_GAMMA, c4=1.5, c5=0.5))
    if key == "RI6":
        return build_order2_tableau(Order2FamilyParams(0.0, 0.0, 1.0, 1.0))
    if key == "DDIRDI4":
        return build_order2_tableau(Order2FamilyParams(0.0, 0.5, 1.0, 1.0))
    c = SDIRK3_GAMMA if param is None else float(param)
    if not math.isfinite(c):
        raise ParameterOutOfRange(f"c1 must be finite, got {c}")
    return build_order2_tableau(Order2FamilyParams(c, c, 1.0, 1.0))


def catalogue() -> list[ExtendedButcherTableau]:
    return [named_scheme(n) for n in SCHEME_NAMES]


@dataclass
class ValidationReport:
    classification: str
    violations: list[str]
    alpha_A0_e: float | None = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _strictly_lower(M: np.ndarray) -> bool:
    return bool(np.all(np.abs(np.triu(M)) <= VALIDATION_TOL))


def _lower(M: np.ndarray) -> bool:
    return bool(np.all(np.abs(np.triu(M, 1)) <= VALIDATION_TOL))


def validate_tableau(t: ExtendedButcherTableau) -> ValidationReport:
    violations: list[str] = []
    s = len(t.alpha)
    for name in ("beta1", "beta2", "beta3", "beta4", "c0", "c1", "c2"):
        if getattr(t, name).shape != (s,):
            violations.append(f"{name} has shape {getattr(t, name).shape}, expected ({s},)")
    for name in ("A0", "A1", "A2", "B0", "B1", "B2"):
        if getattr(t, name).shape != (s, s):
            violations.append(f"{name} has shape {getattr(t, name).shape}, expected ({s}, {s})")
    if violations:
        return ValidationReport(OTHER, violations)

    for name in ("alpha", "beta1", "beta2", "beta3", "beta4", "A0", "A1", "A2",
                 "B0", "B1", "B2", "c0", "c1", "c2"):
        if not np.all(np.isfinite(getattr(t, name))):
            violations.append(f"{name} has non-finite entries")

    for j, (c, A) in enumerate(((t.c0, t.A0), (t.c1, t.A1), (t.c2, t.A2))):
        bad = np.flatnonzero(np.abs(c - A.sum(axis=1)) > VALIDATION_TOL)
        for i in bad:
            violations.append(f"c{j}[{i}] = {c[i]!r} differs from row sum of A{j} ({A[i].sum()!r})")

    others_explicit = all(_strictly_lower(getattr(t, n)) for n in ("A1", "A2", "B0", "B1", "B2"))
    if others_explicit and _strictly_lower(t.A0):
        cls = EXPLICIT
    elif others_explicit and _lower(t.A0):
        cls = DIAGONALLY_IMPLICIT
    else:
        cls = OTHER

    a0e = None
    if t.family == "order2":
        a0e = float(t.alpha @ t.A0 @ np.ones(s))
        if abs(a0e - 0.5) > VALIDATION_TOL:
            violations.append(f"alpha^T A0 e = {a0e!r}, expected 1/2")
        if s != 3 or np.max(np.abs(t.alpha - [0.5, 0.5, 0.0])) > VALIDATION_TOL:
            violations.append(f"alpha = {t.alpha.tolist()}, expected (1/2, 1/2, 0)")
    return ValidationReport(cls, violations, a0e)
