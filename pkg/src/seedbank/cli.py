"""Command-line entry point.

Subcommands either reproduce the data behind the package's figures as CSV
(psi-curve, drift-surface, fixation-heatmap, fixation-vs-b0, g-plot,
h-contour) or emit single JSON results (mc-compare, reduce).  Every CSV starts
with a comment header recording the tool version, the fully resolved
parameters, and the seed, so re-running the header's parameters reproduces the
file byte-for-byte.

Exit codes: 0 success, 2 validation error (bad inputs), 3 numerical failure.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .branching_phase import psi
from .core_model import (
    FastEnvSpec,
    distribution_from_cli,
    validate_distribution,
)
from .diffusion_limits import (
    drift_factor_fn,
    g_function,
    kolmogorov_fixation,
    psi_cap,
    scale_fixation,
    sde_constant,
    sde_fast_env,
)
from .errors import NumericalError, SeedbankError, ValidationError
from .manifold_reduction import reduce_point
from .seedbank_flows import (
    FlowKind,
    build_flow,
    drift_second_derivative,
    eigvecs_on_gamma,
    h_function,
    hessians_on_gamma,
    jacobian_on_gamma,
    manifold_chart,
)
from .wf_simulators import make_env_process, run_fixation


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _emit(out_path, lines):
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as handle:
            handle.write(text)


def _csv_header(subcommand, params, seed):
    lines = [f"# seedbank {__version__}", f"# subcommand = {subcommand}"]
    for key in sorted(params):
        lines.append(f"# {key} = {_fmt(params[key])}")
    lines.append(f"# seed = {seed}")
    return lines


def _parse_floats(text):
    try:
        return [float(part) for part in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"could not parse list {text!r}") from exc


def cmd_psi_curve(args):
    b_values = _parse_floats(args.B)
    params = {"B": args.B, "ymax": args.ymax, "steps": args.steps}
    lines = _csv_header("psi-curve", params, args.seed)
    lines.append("B,y,psi")
    ys = np.linspace(0.0, args.ymax, args.steps + 1)
    for big_b in b_values:
        if big_b < 0:
            raise ValidationError("B values must be non-negative")
        for y in ys:
            lines.append(f"{_fmt(big_b)},{_fmt(float(y))},{_fmt(psi(big_b, float(y)))}")
    _emit(args.out, lines)


def cmd_drift_surface(args):
    params = {"grid": args.grid}
    lines = _csv_header("drift-surface", params, args.seed)
    lines.append("b0,x0,d2phi0_dx02")
    b0s = np.linspace(0.0, 1.0, args.grid + 1)[1:]  # b0 > 0 strictly
    x0s = np.linspace(0.0, 1.0, args.grid)
    for b0 in b0s:
        d = validate_distribution([b0, 1.0 - b0])
        for x0 in x0s:
            val = drift_second_derivative(d, float(x0))
            lines.append(f"{_fmt(float(b0))},{_fmt(float(x0))},{_fmt(val)}")
    _emit(args.out, lines)


def cmd_fixation_heatmap(args):
    params = {"grid": args.grid, "y": args.y}
    lines = _csv_header("fixation-heatmap", params, args.seed)
    lines.append("b0,q,fixation,psi_bound,difference")
    y = args.y
    b0s = np.linspace(0.0, 1.0, args.grid + 1)[1:]  # include the b0 = 1 edge
    qs = np.linspace(0.0, 1.0, args.grid)
    for b0 in b0s:
        for q in qs:
            b1 = q * (1.0 - b0)
            b2 = (1.0 - q) * (1.0 - b0)
            d = validate_distribution([b0, b1, b2])
            big_b = d.mean_time
            start = psi(big_b, y)
            phi2 = drift_factor_fn(d)
            den = lambda x: big_b * (1.0 - x) + 1.0
            fix = scale_fixation(
                lambda x: 0.5 * x * (1.0 - x) * phi2(x),
                lambda x: np.sqrt(max(x * (1.0 - x), 0.0)) / den(x),
                start,
            )
            bound = psi_cap(big_b, y)
            lines.append(
                f"{_fmt(float(b0))},{_fmt(float(q))},{_fmt(fix)},"
                f"{_fmt(bound)},{_fmt(bound - fix)}"
            )
    _emit(args.out, lines)


def cmd_fixation_vs_b0(args):
    xi_infs = _parse_floats(args.xi_inf)
    params = {"xi_inf": args.xi_inf, "r": args.r, "steps": args.steps, "y": args.y}
    lines = _csv_header("fixation-vs-b0", params, args.seed)
    lines.append("xi_inf,b0,fixation")
    b0s = np.linspace(0.0, 1.0, args.steps + 1)[1:]
    for xi_inf in xi_infs:
        for b0 in b0s:
            d = validate_distribution([b0, 1.0 - b0])
            start = psi(d.mean_time, args.y)
            fix = kolmogorov_fixation(d, {"r": args.r, "xi_inf": xi_inf}, start)
            lines.append(f"{_fmt(float(xi_inf))},{_fmt(float(b0))},{_fmt(fix)}")
    _emit(args.out, lines)


def cmd_g_plot(args):
    xis = _parse_floats(args.xi)
    big_bs = _parse_floats(args.B)
    params = {"xi": args.xi, "B": args.B, "steps": args.steps, "b": args.b or ""}
    lines = _csv_header("g-plot", params, args.seed)
    lines.append("xi,B,rho0,g")
    rhos = np.linspace(0.0, 1.0, args.steps)
    for xi in xis:
        for big_b in big_bs:
            if args.b:
                d = distribution_from_cli(args.b)
            else:
                # realize mean time B with a two-generation bank: b1 = b2 = B/3
                d = validate_distribution([1.0 - 2.0 * big_b / 3.0, big_b / 3.0,
                                           big_b / 3.0])
            for rho in rhos:
                val = g_function(d, float(rho), float(xi))
                lines.append(
                    f"{_fmt(float(xi))},{_fmt(float(big_b))},"
                    f"{_fmt(float(rho))},{_fmt(val)}"
                )
    _emit(args.out, lines)


def cmd_h_contour(args):
    params = {"grid": args.grid}
    lines = _csv_header("h-contour", params, args.seed)
    lines.append("x0,b0,h")
    xs = np.linspace(0.0, 1.0, args.grid)
    b0s = np.linspace(0.0, 1.0, args.grid)
    for x0 in xs:
        for b0 in b0s:
            lines.append(
                f"{_fmt(float(x0))},{_fmt(float(b0))},"
                f"{_fmt(h_function(float(x0), float(b0)))}"
            )
    _emit(args.out, lines)


def cmd_mc_compare(args):
    d = distribution_from_cli(args.b)
    env = None
    fenv = None
    if args.regime == "slow":
        env = make_env_process(
            "deterministic_logistic",
            xi_min=args.xi_min,
            xi_max=args.xi_max,
            n_pop=args.N,
            r=args.r,
            xi_inf=args.xi_inf,
        )
    if args.regime == "fast":
        fenv = FastEnvSpec(p=args.p, s=args.s)
    estimate = run_fixation(
        args.regime,
        d,
        args.N,
        args.start,
        args.replicates,
        args.max_generations,
        args.seed,
        threads=args.threads,
        env=env,
        fenv=fenv,
    )
    if args.regime == "constant":
        spec = sde_constant(d)
        prediction = scale_fixation(
            lambda x: spec.drift(np.array([x]))[0],
            lambda x: spec.diffusion(np.array([x]))[0, 0],
            args.start,
        )
    elif args.regime == "fast":
        spec = sde_fast_env(d, fenv)
        prediction = scale_fixation(
            lambda x: spec.drift(np.array([x]))[0],
            lambda x: spec.diffusion(np.array([x]))[0, 0],
            args.start,
        )
    else:
        prediction = kolmogorov_fixation(
            d, {"r": args.r, "xi_inf": args.xi_inf}, args.start
        )
    payload = {
        "estimate": estimate.to_dict(),
        "diffusion_prediction": prediction,
    }
    _emit(args.out, [json.dumps(payload, indent=2, sort_keys=True)])


def cmd_reduce(args):
    spec = json.loads(args.spec)
    if "b" not in spec or "tag" not in spec or "x0" not in spec:
        raise ValidationError('reduce spec needs keys "tag", "b", and "x0"')
    d = validate_distribution(spec["b"])
    kind = FlowKind(spec["tag"], d)
    flow = build_flow(kind)
    flow.jac = lambda x: jacobian_on_gamma(kind, x[0])
    flow.hess = lambda x: hessians_on_gamma(kind, x[0])
    chart = manifold_chart(kind)
    result = reduce_point(flow, chart, float(spec["x0"]))
    _emit(args.out, [json.dumps(result.to_dict(), indent=2, sort_keys=True)])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seedbank",
        description="Seed-bank population models: figure data, reduction "
        "engine, and Monte Carlo comparisons.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("psi-curve", help="splice map psi_B(y) curves")
    p.add_argument("--B", default="0,0.1,0.5,1,2")
    p.add_argument("--ymax", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=200)
    common(p)
    p.set_defaults(func=cmd_psi_curve)

    p = sub.add_parser("drift-surface", help="drift second derivative over (b0, x0)")
    p.add_argument("--grid", type=int, default=21)
    common(p)
    p.set_defaults(func=cmd_drift_surface)

    p = sub.add_parser("fixation-heatmap",
                       help="K=2 fixation probability, bound, and difference")
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--y", type=float, default=0.01)
    common(p)
    p.set_defaults(func=cmd_fixation_heatmap)

    p = sub.add_parser("fixation-vs-b0",
                       help="logistic-environment fixation curves")
    p.add_argument("--xi-inf", dest="xi_inf", default="0.7,0.8,0.9,1.0,1.1,1.2")
    p.add_argument("--r", type=float, default=20.0)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--y", type=float, default=0.01)
    common(p)
    p.set_defaults(func=cmd_fixation_vs_b0)

    p = sub.add_parser("g-plot", help="population-size fluctuation diagnostic g")
    p.add_argument("--xi", default="0.8,1.2")
    p.add_argument("--B", default="0.1,0.5,1.0")
    p.add_argument("--steps", type=int, default=201)
    p.add_argument("--b", default=None,
                   help="explicit germination distribution overriding --B")
    common(p)
    p.set_defaults(func=cmd_g_plot)

    p = sub.add_parser("h-contour", help="fast-environment extra-drift surface")
    p.add_argument("--grid", type=int, default=101)
    common(p)
    p.set_defaults(func=cmd_h_contour)

    p = sub.add_parser("mc-compare",
                       help="discrete Monte Carlo vs diffusion prediction")
    p.add_argument("--regime", choices=["constant", "slow", "fast"], required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--max-generations", type=int, default=10**6)
    p.add_argument("--p", type=float, default=0.25, help="fast regime mark probability")
    p.add_argument("--s", type=float, default=1.0, help="fast regime selection scale")
    p.add_argument("--r", type=float, default=20.0, help="slow regime logistic rate")
    p.add_argument("--xi-inf", dest="xi_inf", type=float, default=1.0)
    p.add_argument("--xi-min", dest="xi_min", type=float, default=0.1)
    p.add_argument("--xi-max", dest="xi_max", type=float, default=2.0)
    common(p)
    p.set_defaults(func=cmd_mc_compare)

    p = sub.add_parser("reduce", help="manifold reduction of a built-in flow")
    p.add_argument("--spec", required=True,
                   help='JSON like {"tag": "constant", "b": [0.5, 0.5], "x0": 0.3}')
    common(p)
    p.set_defaults(func=cmd_reduce)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SeedbankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
