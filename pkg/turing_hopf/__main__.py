#!/usr/bin/env python3
"""
Turing-Hopf analysis of two-component delayed reaction-diffusion systems.
"""

import argparse
import logging
import os
import sys
import tracemalloc
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import load_dotenv

from . import report
from .amplitude import (
    AmplitudeSystem,
    classify_unfolding,
    equilibria,
    predict_attractor,
    region_map,
    to_amplitude,
)
from .debug import mem_print
from .eigenbasis import EigenBasis, compute_basis
from .errors import ConfigError, InputError, TuringHopfError, ValidationFailed
from .expr import parse, serialize
from .model import DerivativeBundle, ModelSpec, derivative_bundle, linear_part, load_model_file, unit_delay
from .normalform import NormalFormCoeffs, normal_form
from .simulate import Perturbation, SimConfig, analyze_pattern, mirror_mismatch, mirrored_pair, run
from .spectrum import SearchConfig, TuringHopfPoint, locate_turing_hopf
from .version import __version__

_LOGGER = logging.getLogger(__name__)

DEFAULT_WORKERS = 2

# Arguments that do not change the analysis stay out of the config echo.
_NOT_ECHOED = {"func", "output", "debug"}


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit 1 with a JSON line, like other input errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(InputError(message).to_json() + "\n")
        raise SystemExit(1)


@dataclass(frozen=True)
class Analysis:
    model: ModelSpec
    point: TuringHopfPoint
    bundle: DerivativeBundle
    basis: EigenBasis
    normal_form: NormalFormCoeffs
    amplitude: AmplitudeSystem
    case: str


# -----------------------------------------------------------------------------
# Pipeline


def _load(args: argparse.Namespace) -> ModelSpec:
    path = args.model or os.environ.get("TURING_HOPF_MODEL") or None
    _LOGGER.debug("Model: %s", path or "embedded holling_tanner.toml")
    return load_model_file(path)


def _locate(args: argparse.Namespace, m: ModelSpec) -> TuringHopfPoint:
    box = None
    if args.search_box:
        lo1, hi1, lo2, hi2 = args.search_box
        box = ((lo1, hi1), (lo2, hi2))
    search = SearchConfig.from_model(
        m,
        box=box,
        n_max=args.n_max,
        tolerance=args.tolerance,
        delta=args.delta,
        certify_n_max=args.certify_n_max,
    )
    p = locate_turing_hopf(m, search)
    _LOGGER.info(
        "Turing-Hopf point %s=%.6g %s=%.6g omega=%.6g (original %.6g) n2=%d",
        p.parameters[0],
        p.mu[0],
        p.parameters[1],
        p.mu[1],
        p.omega,
        p.omega_original,
        p.n2,
    )
    mem_print("POINT")
    return p


def _reduce(m: ModelSpec, p: TuringHopfPoint) -> Analysis:
    bundle = derivative_bundle(unit_delay(m), p.mu)
    basis = compute_basis(bundle.linear, p)
    nf = normal_form(bundle, basis, p)
    amp = to_amplitude(nf)
    case = classify_unfolding(amp)
    _LOGGER.info("Unfolding case %s", case)
    mem_print("NORMAL FORM")
    return Analysis(m, p, bundle, basis, nf, amp, case)


def _analysis(args: argparse.Namespace) -> Analysis:
    m = _load(args)
    return _reduce(m, _locate(args, m))


def _model_document(m: ModelSpec) -> dict[str, Any]:
    return {
        "f": serialize(m.reactions[0]),
        "g": serialize(m.reactions[1]),
        "parameters": list(m.parameters),
        "base": list(m.base),
        "length": m.length,
        "delay": str(m.delay),
        "equilibrium": list(m.equilibrium),
    }


def _config(args: argparse.Namespace) -> dict[str, Any]:
    return {key: value for key, value in vars(args).items() if key not in _NOT_ECHOED and value is not None}


# -----------------------------------------------------------------------------
# Subcommands


def cmd_analyze(args: argparse.Namespace) -> dict[str, Any]:
    m = _load(args)
    p = _locate(args, m)
    return report.envelope(
        "point", {"model": _model_document(m), "point": report.point_document(p)}, _config(args)
    )


def cmd_normalform(args: argparse.Namespace) -> dict[str, Any]:
    a = _analysis(args)
    return report.envelope(
        "normalform",
        {
            "point": report.point_document(a.point),
            "eigenbasis": report.basis_document(a.basis),
            "normal_form": report.normal_form_document(a.normal_form),
        },
        _config(args),
    )


def cmd_amplitude(args: argparse.Namespace) -> dict[str, Any]:
    a = _analysis(args)
    body: dict[str, Any] = {"amplitude": report.amplitude_document(a.amplitude, a.case)}
    if args.alpha:
        body["predictions"] = [_prediction(a, alpha) for alpha in args.alpha]
    return report.envelope("amplitude", body, _config(args))


def _prediction(a: Analysis, alpha) -> dict[str, Any]:
    eqs = equilibria(a.amplitude, alpha)
    try:
        prediction = predict_attractor(a.amplitude, a.normal_form, a.basis, a.point, alpha)
    except TuringHopfError as error:
        return {
            "alpha": list(alpha),
            "equilibria": [report.equilibrium_document(e) for e in eqs],
            "error": error.code,
        }
    return report.prediction_document(prediction, eqs)


def _region_box(args: argparse.Namespace) -> tuple[tuple[float, float], tuple[float, float]]:
    if args.window:
        lo1, hi1, lo2, hi2 = args.window
        return (lo1, hi1), (lo2, hi2)
    if args.box <= 0:
        raise ConfigError("--box must be positive", box=args.box)
    return (-args.box, args.box), (-args.box, args.box)


def cmd_regions(args: argparse.Namespace) -> dict[str, Any]:
    a = _analysis(args)
    box = _region_box(args)
    rmap = region_map(a.amplitude, box, args.resolution)
    radius = max(abs(bound) for pair in box for bound in pair)
    paths = report.write_region_files(args.out_dir, rmap, radius)
    body = report.regions_document(rmap)
    body["files"] = [str(path) for path in paths]
    return report.envelope("regions", body, _config(args))


def _perturbation(text: str) -> Perturbation:
    parts = text.split(":")
    if len(parts) != 4:
        raise ConfigError("Perturbation must be species:shape:k:amplitude", value=text)
    try:
        return Perturbation(parts[0], parts[1], float(parts[2]), float(parts[3]))
    except ValueError as e:
        raise ConfigError(f"Invalid perturbation: {e}", value=text) from e


def _workers(args: argparse.Namespace) -> int:
    if args.workers is not None:
        return args.workers
    try:
        return int(os.environ.get("TURING_HOPF_WORKERS", DEFAULT_WORKERS))
    except ValueError as e:
        raise ConfigError("TURING_HOPF_WORKERS must be an integer") from e


def _t_end(args: argparse.Namespace) -> float | None:
    if args.t_end is not None:
        return args.t_end
    value = os.environ.get("TURING_HOPF_SIM_T_END")
    try:
        return float(value) if value else None
    except ValueError as e:
        raise ConfigError("TURING_HOPF_SIM_T_END must be a number") from e


def _suffixed(path: str, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}{suffix}{p.suffix}")


def cmd_simulate(args: argparse.Namespace) -> dict[str, Any]:
    m = _load(args)
    body: dict[str, Any] = {}
    if args.mu:
        mu = tuple(args.mu)
    else:
        p = _locate(args, m)
        alpha = args.offset or (0.0, 0.0)
        mu = (p.mu[0] + alpha[0], p.mu[1] + alpha[1])
        body["point"] = report.point_document(p)
        body["alpha"] = list(alpha)

    initial = None
    if args.initial:
        initial = report.read_trajectory(args.initial).values[-1]
    cfg = SimConfig.from_model(
        m,
        mu,
        n_points=args.n_points,
        dt_max=args.dt_max,
        t_end=_t_end(args),
        stride=args.stride,
        perturbation=[_perturbation(text) for text in args.perturb] if args.perturb else None,
        initial=initial,
    )
    _LOGGER.info("Simulating to t=%.6g with dt=%.6g at mu=%s", cfg.t_end, cfg.dt, mu)

    if args.mirror:
        runs = mirrored_pair(m, mu, cfg, _workers(args))
    else:
        runs = (run(m, mu, cfg),)
    mem_print("SIMULATION")

    patterns = [analyze_pattern(tr) for tr in runs]
    for label, (tr, pattern) in zip(("", "-mirror"), zip(runs, patterns)):
        _LOGGER.info("Pattern%s: %s (dominant mode %d)", label, pattern.kind, pattern.dominant_mode)
        if args.csv:
            report.write_trajectory_csv(_suffixed(args.csv, label), tr)
        if args.binary:
            report.write_trajectory_binary(_suffixed(args.binary, label), tr)

    body.update(mu=list(mu), simulation=cfg.to_dict(), pattern=report.pattern_document(patterns[0]))
    if args.mirror:
        body["mirror"] = {
            "pattern": report.pattern_document(patterns[1]),
            "mismatch": mirror_mismatch(runs[0], runs[1], patterns[0].dominant_mode),
        }
    return report.envelope("simulation", body, _config(args))


def cmd_report(args: argparse.Namespace) -> dict[str, Any]:
    a = _analysis(args)
    rmap = region_map(a.amplitude, _region_box(args), args.resolution)
    alphas = args.alpha or []
    body = {
        "model": _model_document(a.model),
        "point": report.point_document(a.point),
        "eigenbasis": report.basis_document(a.basis),
        "normal_form": report.normal_form_document(a.normal_form),
        "amplitude": report.amplitude_document(a.amplitude, a.case),
        "regions": report.regions_document(rmap),
        "region_samples": [{"alpha": list(alpha), "region": rmap.label_at(alpha)} for alpha in alphas],
        "predictions": [_prediction(a, alpha) for alpha in alphas],
    }
    return report.envelope("report", body, _config(args))


# -----------------------------------------------------------------------------
# Self test


GOLDEN = {
    "mu": (0.4567, 2.8646),
    "omega_original": 2.8899,
    "n2": 5,
    "equilibrium": 0.270156,
    "A": ((0.2625, -0.7298), (0.0, 0.0)),
    "coefficients": {
        "f_a1z1": 3.5526 + 2.0355j,
        "f_a2z1": 0.4523 + 0.4291j,
        "f_a1z2": 0.0,
        "f_a2z2": -0.0433,
        "g210": -25.8208 - 41.9428j,
        "g102": -0.8398 + 0.1637j,
        "g111": -0.2315,
        "g003": -0.6018,
    },
    "amplitude": {"b": 1.3954, "c": 0.0090, "d": 1.0, "epsilon": -1.0, "d_minus_bc": 0.9874},
    "eps1": (-1.7763, -0.2261),
    "eps2": (0.0, 0.0217),
    "case": "Ia",
    "regions": 6,
    "samples": {(0.05, -0.33): 4, (-0.1, -0.4): 3},
}

# Published values carry four decimals.
PRINTED = 5e-5


class _Checks:
    def __init__(self) -> None:
        self.rows: list[dict[str, Any]] = []

    def close(self, name: str, actual, expected, tolerance: float, relative: float = 0.0) -> None:
        error = abs(complex(actual) - complex(expected))
        limit = tolerance + relative * abs(complex(expected))
        self.rows.append(
            {"name": name, "actual": actual, "expected": expected, "limit": limit, "ok": bool(error <= limit)}
        )

    def equal(self, name: str, actual, expected) -> None:
        self.rows.append({"name": name, "actual": actual, "expected": expected, "ok": actual == expected})

    @property
    def failed(self) -> list[str]:
        return [row["name"] for row in self.rows if not row["ok"]]


def selftest() -> dict[str, Any]:
    """Golden checks on the embedded Holling-Tanner model across every module."""
    checks = _Checks()
    m = load_model_file(None)
    text = serialize(m.reactions[0])
    checks.equal("expr.round_trip", serialize(parse(text, m.symbol_table)), text)
    checks.close("model.equilibrium", m.equilibrium[0], GOLDEN["equilibrium"], 5e-4)

    p = locate_turing_hopf(m, SearchConfig.from_model(m))
    for index, expected in enumerate(GOLDEN["mu"]):
        checks.close(f"spectrum.mu{index + 1}", p.mu[index], expected, 1e-3)
    checks.close("spectrum.omega_original", p.omega_original, GOLDEN["omega_original"], 1e-3)
    checks.equal("spectrum.n2", p.n2, GOLDEN["n2"])

    A = linear_part(m, p.mu).A
    for (i, j), expected in np.ndenumerate(np.array(GOLDEN["A"])):
        checks.close(f"model.A{i + 1}{j + 1}", float(A[i, j]), float(expected), 1e-4)

    a = _reduce(m, p)
    checks.close("eigenbasis.residual", max(a.basis.residuals.values()), 0.0, 1e-6)
    checks.close("normalform.validation", a.normal_form.validation.max_residual, 0.0, 1e-7)
    for name, expected in GOLDEN["coefficients"].items():
        checks.close(f"normalform.{name}", a.normal_form.coefficients[name], expected, PRINTED, 2e-3)

    for name, expected in GOLDEN["amplitude"].items():
        actual = a.amplitude.d_minus_bc if name == "d_minus_bc" else getattr(a.amplitude, name)
        checks.close(f"amplitude.{name}", float(actual), expected, PRINTED, 2e-3)
    for name in ("eps1", "eps2"):
        for index, expected in enumerate(GOLDEN[name]):
            checks.close(f"amplitude.{name}[{index}]", getattr(a.amplitude, name)[index], expected, PRINTED, 2e-3)
    checks.equal("amplitude.case", a.case, GOLDEN["case"])

    rmap = region_map(a.amplitude)
    checks.equal("amplitude.regions", len(rmap.regions), GOLDEN["regions"])
    for alpha, case in GOLDEN["samples"].items():
        prediction = predict_attractor(a.amplitude, a.normal_form, a.basis, p, alpha)
        checks.equal(f"amplitude.predict{list(alpha)}", sorted({x.case for x in prediction.attractors}), [case])

    cfg = SimConfig.from_model(m, p.mu, n_points=64, t_end=20.0, stride=10, perturbation=[])
    tr = run(m, p.mu, cfg)
    checks.close("simulate.drift", float(np.abs(tr.deviations).max()), 0.0, 1e-10)
    checks.equal("simulate.pattern", str(analyze_pattern(tr).kind), "constant-steady")

    sample = report.point_document(p)
    checks.equal("report.deterministic", report.dumps(sample) == report.dumps(report.point_document(p)), True)
    return report.envelope("selftest", {"checks": checks.rows, "failed": checks.failed})


def cmd_selftest(args: argparse.Namespace) -> dict[str, Any]:
    document = selftest()
    if document["failed"]:
        _write(args, document)
        raise ValidationFailed("Self test failed", failed=document["failed"])
    _LOGGER.info("Self test passed (%d checks)", len(document["checks"]))
    return document


# -----------------------------------------------------------------------------
# Command line


def _pair(text: str) -> tuple[float, float]:
    try:
        first, second = (float(part) for part in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from e
    return first, second


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "model",
        nargs="?",
        help="Model file (TOML); default $TURING_HOPF_MODEL or the embedded Holling-Tanner model",
    )
    parser.add_argument("-o", "--output", help="Write the JSON document here instead of stdout")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")


def _add_search(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("point search")
    group.add_argument(
        "--search-box",
        nargs=4,
        type=float,
        metavar=("MU1_LO", "MU1_HI", "MU2_LO", "MU2_HI"),
        help="Parameter rectangle to search",
    )
    group.add_argument("--n-max", type=int, help="Largest spatial mode tried as the Turing mode")
    group.add_argument("--tolerance", type=float, help="Newton residual tolerance")
    group.add_argument("--delta", type=float, help="Spectral margin: other roots must satisfy Re < -delta")
    group.add_argument("--certify-n-max", type=int, help="Largest mode inspected by the root count")


def _add_region_box(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--box", type=float, default=0.2, help="Half-width of the alpha square (default: 0.2)")
    parser.add_argument(
        "--window",
        nargs=4,
        type=float,
        metavar=("A1_LO", "A1_HI", "A2_LO", "A2_HI"),
        help="Explicit alpha rectangle (overrides --box)",
    )
    parser.add_argument("--resolution", type=int, default=200, help="Grid points per axis (default: 200)")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="turing_hopf", description="Turing-Hopf bifurcation analysis")
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    analyze = commands.add_parser("analyze", help="Locate and certify the Turing-Hopf point")
    _add_common(analyze)
    _add_search(analyze)
    analyze.set_defaults(func=cmd_analyze)

    nf = commands.add_parser("normalform", help="Third-order normal form coefficients")
    _add_common(nf)
    _add_search(nf)
    nf.set_defaults(func=cmd_normalform)

    amplitude = commands.add_parser("amplitude", help="Amplitude system constants and unfolding case")
    _add_common(amplitude)
    _add_search(amplitude)
    amplitude.add_argument(
        "--alpha", type=_pair, action="append", metavar="A1,A2", help="Predict attractors at this offset"
    )
    amplitude.set_defaults(func=cmd_amplitude)

    regions = commands.add_parser("regions", help="Region map, critical rays and a gnuplot script")
    _add_common(regions)
    _add_search(regions)
    _add_region_box(regions)
    regions.add_argument("--out-dir", default=".", help="Directory for regions.csv, rays.csv, regions.gp")
    regions.set_defaults(func=cmd_regions)

    simulate = commands.add_parser("simulate", help="Integrate the system and classify the pattern")
    _add_common(simulate)
    _add_search(simulate)
    where = simulate.add_mutually_exclusive_group()
    where.add_argument("--mu", type=_pair, metavar="MU1,MU2", help="Absolute parameter values")
    where.add_argument(
        "--alpha", dest="offset", type=_pair, metavar="A1,A2", help="Offset from the located point (default: 0,0)"
    )
    simulate.add_argument("--t-end", type=float, help="Horizon in original time (default: $TURING_HOPF_SIM_T_END)")
    simulate.add_argument("--n-points", type=int, help="Grid points")
    simulate.add_argument("--dt-max", type=float, help="Largest time step; the step divides the delay")
    simulate.add_argument("--stride", type=int, help="Record every STRIDE steps")
    simulate.add_argument(
        "--perturb",
        action="append",
        metavar="SPECIES:SHAPE:K:AMPLITUDE",
        help="Initial perturbation, e.g. u:cos:5:0.005 (repeatable; replaces the model's list)",
    )
    simulate.add_argument("--initial", help="Trajectory file whose last snapshot is the initial state")
    simulate.add_argument("--mirror", action="store_true", help="Also run the mirrored initial data")
    simulate.add_argument("--workers", type=int, help="Worker processes (default: $TURING_HOPF_WORKERS or 2)")
    simulate.add_argument("--csv", help="Write the trajectory as CSV (t,x,u,v)")
    simulate.add_argument("--binary", help="Write the trajectory in THK1 binary framing")
    simulate.set_defaults(func=cmd_simulate)

    full = commands.add_parser("report", help="Consolidated JSON report")
    _add_common(full)
    _add_search(full)
    _add_region_box(full)
    full.add_argument("--alpha", type=_pair, action="append", metavar="A1,A2", help="Sample offset (repeatable)")
    full.set_defaults(func=cmd_report)

    test = commands.add_parser("selftest", help="Run the built-in golden checks")
    test.add_argument("-o", "--output", help="Write the JSON document here instead of stdout")
    test.add_argument("--debug", action="store_true", help="Enable debug logging")
    test.set_defaults(func=cmd_selftest)
    return parser


def _write(args: argparse.Namespace, document: Any) -> None:
    text = report.dumps(document)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def run_cli(argv: list[str] | None = None) -> int:
    """Parse ``argv``, run one subcommand and return the exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.debug:
        tracemalloc.start()
    mem_print("START")

    try:
        _write(args, args.func(args))
    except TuringHopfError as e:
        _LOGGER.error("%s: %s", e.code, e.message)
        sys.stderr.write(e.to_json() + "\n")
        return e.exit_code
    except OSError as e:
        sys.stderr.write(InputError(str(e)).to_json() + "\n")
        return 1
    return 0


def main() -> None:
    try:
        sys.exit(run_cli())
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
