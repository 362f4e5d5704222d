"""Command-line front end.

Every command writes plain text (CSV or PGM) to ``--out`` or stdout; errors
print one line ``error <Code>: message`` to stderr and exit with the status
carried by the exception (2 usage, 3 numerical, 4 pole or degenerate).
"""

from __future__ import annotations

import argparse
import io
import math
import os
import sys

from .errors import SrkError, UsageError
from .integrator import DEFAULT_NEWTON, NewtonConfig
from .montecarlo import (effort_report, estimate_functional, estimates_to_csv,
                         simulate_stability, tail_slope, weak_order_study)
from .problems import PROBLEMS, get_problem
from .randvars import THREE_POINT, TWO_POINT, parse_mode
from .stability import rasterize, stability_check
from .tableau import SCHEME_NAMES, named_scheme, validate_tableau

SEED_ENV = "DDISRK_SEED"
TWO_POINT_SUFFIX = "-2p"


def _g(x: float) -> str:
    return f"{x:.17g}"


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _finite(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite, got {text!r}")
    return v


def _positive(text: str) -> float:
    v = _finite(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return v


def _float_list(text: str) -> list[float]:
    return [_positive(s) for s in text.split(",") if s.strip()]


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 1000
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _scheme(args):
    """Resolve ``--scheme``; a ``-2P`` suffix selects two-point increments."""
    name = args.scheme
    mode = parse_mode(args.rv) if getattr(args, "rv", None) else THREE_POINT
    if name.lower().endswith(TWO_POINT_SUFFIX):
        name = name[: -len(TWO_POINT_SUFFIX)]
        mode = TWO_POINT
    return named_scheme(name, getattr(args, "param", None)), mode


def _newton(args) -> NewtonConfig:
    return NewtonConfig(tolerance=args.newton_tol, max_iterations=args.newton_max,
                        jacobian=args.jacobian)


def _emit(args, payload: str | bytes) -> None:
    if args.out in (None, "-"):
        if isinstance(payload, bytes):
            sys.stdout.buffer.write(payload)
            sys.stdout.buffer.flush()
        else:
            sys.stdout.write(payload)
        return
    mode = "wb" if isinstance(payload, bytes) else "w"
    with open(args.out, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
        fh.write(payload)


def cmd_schemes(args) -> int:
    buf = io.StringIO()
    buf.write(f"{'scheme':<14} {'(pD,pS)':<8} {'family':<7} {'class':<26} params\n")
    for name in SCHEME_NAMES:
        t = named_scheme(name)
        rep = validate_tableau(t)
        params = ",".join(f"{p:.6g}" for p in t.params)
        orders = f"({t.order_det},{t.order_stoch})"
        buf.write(f"{t.label:<14} {orders:<8} {t.family:<7} "
                  f"{rep.classification:<26} {params}\n")
        if args.tableaux:
            buf.write(t.to_text() + "\n\n")
    _emit(args, buf.getvalue())
    return 0


def _problem(args):
    return get_problem(args.problem, lam=args.lam, mu=args.mu, x0=args.x0, T=args.T)


def cmd_integrate(args) -> int:
    t, mode = _scheme(args)
    prob = _problem(args)
    functional = args.functional or next(iter(prob.functionals))
    res = estimate_functional(t, prob, functional, args.h, args.trajectories, args.seed,
                              mode, _newton(args), args.threads)
    trailer = [f"scheme={t.label}", f"problem={prob.label}", f"functional={functional}",
               f"rv={mode}", f"seed={args.seed}", f"clamp_events={res.clamp_events}"]
    _emit(args, estimates_to_csv([res], effort_report(t, prob), trailer))
    print(f"wall_clock={res.wall_clock:.3f}s", file=sys.stderr)
    return 0


def cmd_converge(args) -> int:
    t, mode = _scheme(args)
    prob = _problem(args)
    functional = args.functional or next(iter(prob.functionals))
    study = weak_order_study(t, prob, functional, args.h_list, args.trajectories, args.seed,
                             mode, _newton(args), args.threads, args.noise_factor)
    trailer = [f"scheme={t.label}", f"problem={prob.label}", f"functional={functional}",
               f"rv={mode}", f"seed={args.seed}",
               "excluded=" + ",".join(_g(h) for h in study.excluded),
               f"fit_residual={_g(study.fit_residual)}",
               f"fitted_order={_g(study.fitted_order)}"]
    _emit(args, estimates_to_csv(study.estimates, effort_report(t, prob), trailer))
    return 0


def cmd_region(args) -> int:
    t, mode = _scheme(args)
    raster = rasterize(t, mode, (args.hhat_min, args.hhat_max), (args.k2_min, args.k2_max),
                       (args.nx, args.ny), args.threads)
    if args.format == "csv":
        _emit(args, raster.to_csv())
    else:
        _emit(args, raster.to_pgm(binary=args.format == "pgm"))
    print(f"ms_outside_as={raster.ms_outside_as}", file=sys.stderr)
    return 0


def _verdict(v) -> str:
    return "n/a,n/a" if v is None else f"{str(v.stable).lower()},{_g(v.value)}"


def cmd_stability_check(args) -> int:
    t, _ = _scheme(args)
    lines = ["h,hhat,k,gamma,sigma,lambda,as3,as3_value,as2,as2_value,ms,ms_value,exact_as,exact_ms"]
    for h in args.h:
        r = stability_check(t, args.lam, args.mu, h)
        c = r.coefficients
        lines.append(",".join([
            _g(h), _g(r.hhat), _g(r.k), _g(complex(c.gamma).real), _g(complex(c.sigma).real), _g(complex(c.lam).real),
            _verdict(r.as_three_point), _verdict(r.as_two_point), _verdict(r.ms),
            str(r.exact.asymptotic).lower(), str(r.exact.mean_square).lower()]))
    lines.append(f"# scheme={t.label} lambda={_g(args.lam)} mu={_g(args.mu)}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_simulate_stability(args) -> int:
    t, mode = _scheme(args)
    series = simulate_stability(t, args.lam, args.mu, args.h, args.T, args.paths, args.seed,
                                mode, _newton(args))
    head = "t,log10_ms" if series.ensemble else "t,log10_abs_y"
    lines = [head] + [f"{_g(a)},{_g(b)}" for a, b in zip(series.times, series.values)]
    lines.append(f"# scheme={t.label} rv={mode} paths={args.paths} seed={args.seed}")
    lines.append(f"# tail_slope={_g(tail_slope(series.times, series.values))}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddisrk", description="Drift-implicit stochastic Runge-Kutta toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, rv=True, newton=True):
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
        if rv:
            sp.add_argument("--rv", choices=("2pt", "3pt"), default="3pt")
        if newton:
            sp.add_argument("--newton-tol", type=_positive, default=DEFAULT_NEWTON.tolerance)
            sp.add_argument("--newton-max", type=_positive_int, default=DEFAULT_NEWTON.max_iterations)
            sp.add_argument("--jacobian", choices=("auto", "user", "fd"), default="auto")

    def scheme(sp):
        sp.add_argument("--scheme", required=True,
                        help=f"one of {', '.join(SCHEME_NAMES)} (suffix -2P for two-point)")
        sp.add_argument("--param", type=_finite, default=None,
                        help="theta for DDIRDI2, c1 for DDIRDI5")

    def problem(sp):
        sp.add_argument("--problem", required=True, choices=PROBLEMS)
        sp.add_argument("--lambda", dest="lam", type=_finite, default=-1.0)
        sp.add_argument("--mu", type=_finite, default=1.0)
        sp.add_argument("--x0", type=_finite, default=1.0)
        sp.add_argument("--T", type=_positive, default=None, help="horizon of the linear problem")
        sp.add_argument("--functional", default=None)
        sp.add_argument("--trajectories", type=_positive_int, default=10**5)
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("schemes", help="list catalogued schemes")
    sp.add_argument("--tableaux", action="store_true", help="also print the Butcher arrays")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_schemes)

    sp = sub.add_parser("integrate", help="Monte Carlo estimate of E f(Y_T)")
    scheme(sp)
    problem(sp)
    common(sp)
    sp.add_argument("--h", type=_positive, required=True)
    sp.set_defaults(func=cmd_integrate)

    sp = sub.add_parser("converge", help="weak order study over several step sizes")
    scheme(sp)
    problem(sp)
    common(sp)
    sp.add_argument("--h-list", type=_float_list, required=True, help="comma separated, decreasing")
    sp.add_argument("--noise-factor", type=_positive, default=3.0)
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("region", help="stability region raster")
    scheme(sp)
    common(sp, newton=False)
    sp.add_argument("--hhat-min", type=_finite, default=-8.0)
    sp.add_argument("--hhat-max", type=_finite, default=2.0)
    sp.add_argument("--k2-min", type=_finite, default=0.0)
    sp.add_argument("--k2-max", type=_finite, default=8.0)
    sp.add_argument("--nx", type=_positive_int, default=800)
    sp.add_argument("--ny", type=_positive_int, default=800)
    sp.add_argument("--format", choices=("csv", "pgm", "pgm-ascii"), default="csv")
    sp.set_defaults(func=cmd_region)

    sp = sub.add_parser("stability-check", help="closed-form AS/MS verdicts for the test equation")
    scheme(sp)
    sp.add_argument("--lambda", dest="lam", type=_finite, required=True)
    sp.add_argument("--mu", type=_finite, required=True)
    sp.add_argument("--h", type=_positive, nargs="+", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_stability_check)

    sp = sub.add_parser("simulate-stability", help="log-scale path or mean-square series")
    scheme(sp)
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=_finite, required=True)
    sp.add_argument("--mu", type=_finite, required=True)
    sp.add_argument("--h", type=_positive, required=True)
    sp.add_argument("--T", type=_positive, default=10.0)
    sp.add_argument("--paths", type=_positive_int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_simulate_stability)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return args.func(args)
    except SrkError as exc:
        msg = " ".join(str(exc).split())
        print(f"error {exc.code}: {msg}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error IOError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
