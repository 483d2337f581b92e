"""Command-line front end.

Subcommands: simulate, closed-form, check-martingale, validate-expansion,
kesten-rate, spine-estimate.  Configuration comes from a flat key = value
file plus flag overrides (flags win over the file, the file over defaults);
every run writes its delimited results plus a manifest recording the fully
resolved configuration.  Exit codes: 0 success / all verdicts true, 2 verdict
failure, 1 usage or runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

from . import __version__
from .errors import BkbmError, PopulationCapExceeded
from .martingales import (
    checkpoint_times,
    limit_estimate,
    series_from_snapshots,
)
from .reporting import Manifest, default_output_dir, write_csv, write_json
from .simulator import OffspringLaw, SimConfig, simulate
from .special_math import DriftParams, Interval, expected_count, killed_transition_prob
from .spine import (
    bessel3_sample_check,
    indicator_functional,
    many_to_one_estimate,
    population_functional,
    positive_mass_functional,
)
from .validation import (
    expectation_level_check,
    kesten_rate_check,
    martingale_conservation_check,
    pathwise_check,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this tool reserves 2 for verdict
    failures, so usage errors exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _floats(text: str):
    return [float(v) for v in str(text).split(",")]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


# (dest, flag, converter, default, help) per subcommand; the converter also
# applies to config-file values so the precedence chain stays typed.
_COMMON = [
    ("out_dir", "--out-dir", str, None, "output directory (default: $BKBM_OUTPUT_DIR or ./bkbm_out)"),
    ("seed", "--seed", int, 0, "master 64-bit seed"),
    ("threads", "--threads", int, 1, "worker threads for replicate fan-out"),
    ("plot", "--plot", _bool, False, "also render figures next to the CSV output"),
]

_OPTIONS = {
    "simulate": [
        ("x", "--x", float, 1.0, "start position (> 0)"),
        ("theta", "--theta", float, 0.0, "drift magnitude (motion drifts by -theta)"),
        ("beta", "--beta", float, 1.0, "branching rate"),
        ("law", "--law", str, "binary", "offspring law: 'binary' or 'p0,p1,...'"),
        ("schedule", "--schedule", _floats, [1.0], "observation times, increasing"),
        ("max_population", "--max-population", int, 10_000_000, "alive-particle cap"),
    ],
    "closed-form": [
        ("x", "--x", float, 1.0, "start position"),
        ("t", "--t", float, 1.0, "time"),
        ("theta", "--theta", float, 0.0, "drift magnitude"),
        ("interval", "--interval", str, "0,inf", "target interval 'a,b' or 'a,inf'"),
    ],
    "check-martingale": [
        ("mode", "--mode", str, "conserve", "'conserve' (replicated mean) or 'series' (one path)"),
        ("x", "--x", float, 1.0, "start position"),
        ("theta", "--theta", float, 0.5, "drift magnitude"),
        ("beta", "--beta", float, 1.0, "branching rate"),
        ("law", "--law", str, "binary", "offspring law"),
        ("k_max", "--k-max", int, 2, "check orders k = 0..k_max"),
        ("times", "--times", _floats, [1.0, 2.0, 4.0], "observation times (conserve mode)"),
        ("replicates", "--replicates", int, 10_000, "replicates (conserve mode)"),
        ("z_max", "--z-max", float, 4.0, "pass threshold on |z| (conserve mode)"),
        ("kappa", "--kappa", float, 4.0, "checkpoint exponent (series mode)"),
        ("horizon", "--horizon", float, 10.0, "last checkpoint time (series mode)"),
        ("n_checkpoints", "--n-checkpoints", int, 64, "checkpoint count (series mode)"),
        ("tail_fraction", "--tail-fraction", float, 0.5, "tail window for the limit estimate"),
        ("max_population", "--max-population", int, 10_000_000, "alive-particle cap"),
    ],
    "validate-expansion": [
        ("mode", "--mode", str, "expectation", "'expectation' (deterministic) or 'pathwise'"),
        ("m", "--m", int, 0, "expansion order"),
        ("x", "--x", float, 1.0, "start position"),
        ("theta", "--theta", float, 1.0, "drift magnitude"),
        ("beta", "--beta", float, 1.0, "branching rate"),
        ("law", "--law", str, "binary", "offspring law"),
        ("interval", "--interval", str, "0,inf", "count window"),
        ("t_grid", "--t-grid", _floats, [5.0, 10.0, 20.0, 40.0], "time grid (expectation mode)"),
        ("kappa", "--kappa", float, 4.0, "checkpoint exponent (pathwise mode)"),
        ("horizon", "--horizon", float, 18.0, "last checkpoint time (pathwise mode)"),
        ("replicates", "--replicates", int, 200, "replicates (pathwise mode)"),
        ("n_checkpoints", "--n-checkpoints", int, 96, "checkpoints (pathwise mode)"),
        ("tail_fraction", "--tail-fraction", float, 0.5, "martingale tail window"),
        ("decay_multiple", "--decay-multiple", float, 1.0, "pathwise decay verdict multiple"),
        ("max_population", "--max-population", int, 10_000_000, "alive-particle cap"),
    ],
    "kesten-rate": [
        ("x", "--x", float, 1.0, "start position"),
        ("theta", "--theta", float, 1.0, "drift magnitude"),
        ("beta", "--beta", float, 1.0, "branching rate"),
        ("law", "--law", str, "binary", "offspring law (sets the mean)"),
        ("interval", "--interval", str, "0,inf", "count window"),
        ("t_grid", "--t-grid", _floats, [10.0, 20.0, 40.0, 80.0], "time grid"),
        ("rel_tol", "--rel-tol", float, 0.01, "fitted-vs-theory constant tolerance (theta > 0)"),
    ],
    "spine-estimate": [
        ("functional", "--functional", str, "indicator",
         "indicator | population | bessel-mass | bessel-gof"),
        ("x", "--x", float, 1.0, "start position"),
        ("t", "--t", float, 1.0, "time"),
        ("theta", "--theta", float, 0.5, "drift magnitude"),
        ("beta", "--beta", float, 1.0, "branching rate"),
        ("law", "--law", str, "binary", "offspring law"),
        ("interval", "--interval", str, "0,inf", "window for the indicator functional"),
        ("replicates", "--replicates", int, 100_000, "spine replicates"),
        ("z_max", "--z-max", float, 4.0, "pass threshold on |z|"),
        ("threshold_coeff", "--threshold-coeff", float, 2.0,
         "KS threshold coefficient (bessel-gof)"),
    ],
}


def build_parser() -> _Parser:
    parser = _Parser(prog="bkbm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bkbm {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, options in _OPTIONS.items():
        p = sub.add_parser(name, add_help=True)
        p.add_argument("--config", type=str, default=None,
                       help="flat key = value config file; flags override it")
        for dest, flag, conv, _default, help_text in options + _COMMON:
            if conv is _bool:
                p.add_argument(flag, dest=dest, action="store_const", const=True,
                               default=None, help=help_text)
            else:
                p.add_argument(flag, dest=dest, type=conv, default=None, help=help_text)
    return parser


def parse_config_file(path: str) -> dict:
    """Flat 'key = value' lines; '#' starts a comment."""
    values = {}
    with open(path) as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve_options(args: argparse.Namespace, options) -> dict:
    """Precedence: flags > config file > built-in defaults."""
    file_values = parse_config_file(args.config) if args.config else {}
    known = {dest for dest, *_ in options + _COMMON}
    unknown = set(file_values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for dest, _flag, conv, default, _help in options + _COMMON:
        flag_value = getattr(args, dest)
        if flag_value is not None:
            resolved[dest] = flag_value
        elif dest in file_values:
            resolved[dest] = conv(file_values[dest])
        else:
            resolved[dest] = default
    if resolved.get("out_dir") is None:
        resolved["out_dir"] = default_output_dir()
    return resolved


def _params(opt, *, theta_key="theta") -> tuple[DriftParams, OffspringLaw]:
    law = OffspringLaw.parse(opt["law"]) if "law" in opt else OffspringLaw.binary()
    beta = opt.get("beta", 1.0)
    return DriftParams(theta=opt[theta_key], beta=beta, mu=law.mean), law


def _out(opt, name: str) -> str:
    return os.path.join(opt["out_dir"], name)


def _run_simulate(opt, manifest) -> int:
    params, law = _params(opt)
    config = SimConfig(params=params, law=law, start_x=opt["x"],
                       schedule=tuple(opt["schedule"]),
                       max_population=opt["max_population"], seed=opt["seed"])
    code = EXIT_OK
    try:
        snapshots = simulate(config)
    except PopulationCapExceeded as exc:
        snapshots = exc.partial
        manifest.cap_exceeded = True
        code = EXIT_ERROR
    rows = []
    for snap in snapshots:
        for i, pos in enumerate(snap.positions):
            rows.append((snap.time, i, float(pos)))
    manifest.outputs.append(write_csv(_out(opt, "positions.csv"),
                                      ("time", "particle_index", "position"), rows))
    if snapshots:
        last = snapshots[-1]
        manifest.verdicts = {
            "final_alive": int(last.positions.size),
            "total_ever_branched": last.total_ever_branched,
            "absorbed_count": last.absorbed_count,
        }
    if opt["plot"] and snapshots:
        from .plots import plot_positions
        manifest.outputs.append(plot_positions(snapshots, _out(opt, "positions.png")))
    return code


def _run_closed_form(opt, manifest) -> int:
    interval = Interval.parse(opt["interval"])
    value = killed_transition_prob(opt["x"], opt["t"], opt["theta"], interval)
    print(f"{value:.10f}")
    manifest.outputs.append(write_csv(
        _out(opt, "closed_form.csv"),
        ("x", "t", "theta", "interval", "value"),
        [(opt["x"], opt["t"], opt["theta"], opt["interval"], value)],
    ))
    manifest.verdicts = {"value": value}
    return EXIT_OK


def _run_check_martingale(opt, manifest) -> int:
    params, law = _params(opt)
    if opt["mode"] == "conserve":
        report = martingale_conservation_check(
            params, law, opt["x"], opt["times"], opt["k_max"], opt["replicates"],
            opt["seed"], z_max=opt["z_max"], threads=opt["threads"],
        )
        header, rows = report.csv_rows()
        manifest.outputs.append(write_csv(_out(opt, "martingale_check.csv"), header, rows))
        manifest.verdicts = {"conserved": report.verdict,
                             "max_abs_z": max(abs(r[-1]) for r in report.rows)}
        return EXIT_OK if report.verdict else EXIT_VERDICT
    if opt["mode"] == "series":
        times = checkpoint_times(opt["kappa"], opt["horizon"], opt["n_checkpoints"])
        config = SimConfig(params=params, law=law, start_x=opt["x"],
                           schedule=tuple(times),
                           max_population=opt["max_population"], seed=opt["seed"])
        snapshots = simulate(config)
        rows = []
        limits = {}
        for k in range(opt["k_max"] + 1):
            series = series_from_snapshots(snapshots, k, params, opt["kappa"])
            est = limit_estimate(series, opt["tail_fraction"])
            limits[f"k{k}"] = {"limit_estimate": est, "dispersion": series.dispersion}
            rows.extend((k, params.theta, rn, val)
                        for rn, val in zip(series.times, series.values))
        manifest.outputs.append(write_csv(_out(opt, "martingale_series.csv"),
                                          ("k", "theta", "r_n", "value"), rows))
        manifest.verdicts = limits
        if opt["plot"]:
            from .plots import plot_martingale_rows
            manifest.outputs.append(
                plot_martingale_rows(rows, _out(opt, "martingale_series.png")))
        return EXIT_OK
    raise ValueError(f"unknown mode {opt['mode']!r}")


def _run_validate_expansion(opt, manifest) -> int:
    params, law = _params(opt)
    interval = Interval.parse(opt["interval"])
    if opt["mode"] == "expectation":
        report = expectation_level_check(opt["m"], params, opt["x"], interval,
                                         opt["t_grid"])
    elif opt["mode"] == "pathwise":
        config = SimConfig(params=params, law=law, start_x=opt["x"],
                           schedule=(opt["horizon"],),
                           max_population=opt["max_population"], seed=opt["seed"])
        try:
            report = pathwise_check(
                opt["m"], config, interval, kappa=opt["kappa"],
                replicates=opt["replicates"], n_checkpoints=opt["n_checkpoints"],
                tail_fraction=opt["tail_fraction"],
                decay_multiple=opt["decay_multiple"], threads=opt["threads"],
            )
        except PopulationCapExceeded as exc:
            manifest.cap_exceeded = True
            manifest.verdicts = {"error": str(exc)}
            partial = exc.partial
            manifest.outputs.append(write_json(_out(opt, "expansion_report.json"),
                                               partial.to_dict()))
            return EXIT_ERROR
    else:
        raise ValueError(f"unknown mode {opt['mode']!r}")
    header, rows = report.csv_rows()
    manifest.outputs.append(write_csv(_out(opt, "expansion_report.csv"), header, rows))
    manifest.outputs.append(write_json(_out(opt, "expansion_report.json"),
                                       report.to_dict()))
    manifest.verdicts = {"expansion_verdict": report.verdict, **report.extras}
    for bulky in ("M", "mean_observed_all"):
        manifest.verdicts.pop(bulky, None)
    if opt["plot"]:
        from .plots import plot_expansion_report
        manifest.outputs.append(
            plot_expansion_report(report, _out(opt, "expansion_report.png")))
    return EXIT_OK if report.verdict else EXIT_VERDICT


def _run_kesten_rate(opt, manifest) -> int:
    params, law = _params(opt)
    interval = Interval.parse(opt["interval"])
    report = kesten_rate_check(params, opt["x"], opt["t_grid"], interval)
    header, rows = report.csv_rows()
    manifest.outputs.append(write_csv(_out(opt, "kesten_rate.csv"), header, rows))
    verdicts = {"diffs_decreasing": report.verdict}
    if report.fitted_constant is not None:
        rel = abs(report.fitted_constant / report.theory_constant - 1.0)
        verdicts["constant_rel_error"] = rel
        verdicts["constant_ok"] = rel <= opt["rel_tol"]
    manifest.verdicts = verdicts
    if opt["plot"]:
        from .plots import plot_kesten_report
        manifest.outputs.append(plot_kesten_report(report, _out(opt, "kesten_rate.png")))
    ok = all(v for k, v in verdicts.items() if isinstance(v, bool))
    return EXIT_OK if ok else EXIT_VERDICT


def _run_spine_estimate(opt, manifest) -> int:
    params, law = _params(opt)
    interval = Interval.parse(opt["interval"])
    x, t = opt["x"], opt["t"]
    if opt["functional"] == "bessel-gof":
        result = bessel3_sample_check(x, t, opt["replicates"], opt["seed"],
                                      theta=opt["theta"],
                                      threshold_coeff=opt["threshold_coeff"])
        manifest.outputs.append(write_csv(
            _out(opt, "spine_estimate.csv"),
            ("x", "t", "theta", "replicates", "statistic", "threshold", "n_eff", "passed"),
            [(x, t, opt["theta"], opt["replicates"], result.statistic,
              result.threshold, result.n_eff, result.passed)],
        ))
        manifest.verdicts = {"gof_passed": result.passed,
                             "statistic": result.statistic,
                             "threshold": result.threshold}
        return EXIT_OK if result.passed else EXIT_VERDICT
    if opt["functional"] == "indicator":
        functional = indicator_functional(interval)
        reference = expected_count(x, t, params, interval)
    elif opt["functional"] == "population":
        functional = population_functional()
        reference = math.exp(params.beta * (params.mu - 1.0) * t)
    elif opt["functional"] == "bessel-mass":
        functional = positive_mass_functional(params.theta)
        reference = (math.exp(params.growth_rate * t) * x
                     * math.exp(params.theta * x))
    else:
        raise ValueError(f"unknown functional {opt['functional']!r}")
    result = many_to_one_estimate(functional, x, t, params, opt["replicates"],
                                  opt["seed"])
    z = ((result.estimate - reference) / result.std_error
         if result.std_error > 0 else 0.0)
    passed = abs(z) <= opt["z_max"]
    manifest.outputs.append(write_csv(
        _out(opt, "spine_estimate.csv"),
        ("functional", "x", "t", "theta", "estimate", "std_error", "reference", "z"),
        [(opt["functional"], x, t, opt["theta"], result.estimate,
          result.std_error, reference, z)],
    ))
    manifest.verdicts = {"agrees": passed, "z": z,
                         "alive_fraction": result.alive_fraction}
    return EXIT_OK if passed else EXIT_VERDICT


_RUNNERS = {
    "simulate": _run_simulate,
    "closed-form": _run_closed_form,
    "check-martingale": _run_check_martingale,
    "validate-expansion": _run_validate_expansion,
    "kesten-rate": _run_kesten_rate,
    "spine-estimate": _run_spine_estimate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        opt = resolve_options(args, _OPTIONS[args.subcommand])
    except (OSError, ValueError) as exc:
        print(f"bkbm: {exc}", file=sys.stderr)
        return EXIT_ERROR
    manifest = Manifest(
        subcommand=args.subcommand,
        version=__version__,
        seed=opt.get("seed"),
        config={k: v for k, v in opt.items()},
    )
    try:
        code = _RUNNERS[args.subcommand](opt, manifest)
    except (BkbmError, ValueError, OSError) as exc:
        print(f"bkbm: {exc}", file=sys.stderr)
        manifest.exit_code = EXIT_ERROR
        manifest.wall_time_s = time.perf_counter() - started
        try:
            manifest.write(os.path.join(opt["out_dir"], "manifest.json"))
        except OSError:
            pass
        return EXIT_ERROR
    manifest.exit_code = code
    manifest.wall_time_s = time.perf_counter() - started
    manifest.write(os.path.join(opt["out_dir"], "manifest.json"))
    return code


if __name__ == "__main__":
    sys.exit(main())
