"""Command-line entry point: ``jacobicast <command> [options]``.

Every command writes a ``*.manifest.json`` next to its primary output with the
effective settings, input digests, seed and output digests.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv

from . import __version__
from .calibrate import (
    CalibrationResult,
    FitMethod,
    FixedPointConfig,
    calibrate,
    compare_models,
    evaluate_loglik,
    loglik_surface,
)
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    InfeasibleMomentsError,
    IntegrationError,
    JacobicastError,
)
from .forecast import (
    Segment,
    SegmentSet,
    build_curve,
    detect_curtailment,
    merge_raw,
    normalize,
    read_raw_csv,
    read_segments,
    segment_series,
    split_by_provider,
    write_segments,
)
from .manifest import RunManifest
from .model import ModelKind, ModelParams, check_conditions
from .moments import IntegratorConfig
from .optimizer import OptimizerConfig
from .schedules import get_schedule
from .selftest import print_report, run_selftest
from .settings import Settings, debug_enabled, load_settings
from .simulate import (
    SimConfig,
    compare_transitions,
    derive_seed,
    draw_seed,
    empirical_bands,
    lamperti_paths,
    lamperti_transitions,
    simulate_paths,
    write_bands_csv,
    write_histogram_csv,
    write_paths_csv,
)
from .synthetic import synthetic_series, write_raw_csv

logger = logging.getLogger("jacobicast.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; route it through ConfigError instead"""

    def error(self, message):
        raise ConfigError(message)


def setup_logging(verbose: bool = False) -> None:
    root = logging.getLogger("jacobicast")
    if not any(getattr(h, "_jacobicast", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("[Jacobicast] %(levelname)s: %(message)s"))
        handler._jacobicast = True
        root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose or debug_enabled() else logging.INFO)


def _settings(args) -> Settings:
    overrides = {
        "threads": args.threads,
        "seed": args.seed,
        "epsilon": args.epsilon,
        "substeps": getattr(args, "substeps", None),
        "capacity_mw": getattr(args, "capacity", None),
        "n_paths": getattr(args, "n_paths", None),
        "levels": getattr(args, "levels", None),
        "delta_minutes": getattr(args, "delta_minutes", None),
    }
    return load_settings(args.config, overrides)


def _optimizer(settings: Settings) -> OptimizerConfig:
    return OptimizerConfig(xtol=settings.xtol, ftol=settings.ftol, max_evals=settings.max_evals)


def _fixed_point(settings: Settings) -> FixedPointConfig:
    return FixedPointConfig(max_iters=settings.fp_max_iters, fp_tol=settings.fp_tol,
                            damping=settings.damping, damping_iters=settings.damping_iters)


def _load_segments(path: str, manifest: RunManifest, provider: Optional[str] = None) -> SegmentSet:
    manifest.add_input(path)
    segments = read_segments(path)
    data = SegmentSet(segments)
    if provider:
        data = data.for_provider(provider)
    if not len(data):
        raise DataError("no segments" + (f" for provider '{provider}'" if provider else ""), path=path)
    return data


def _train_test(data: SegmentSet):
    return split_by_provider(data.retained())


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _load_calibration(path: str, manifest: RunManifest) -> CalibrationResult:
    manifest.add_input(path)
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read calibration: {e}", path=path)
    return CalibrationResult.from_dict(record)


def cmd_ingest(args, settings: Settings) -> int:
    if settings.capacity_mw is None:
        raise ConfigError("ingest needs an installed capacity (--capacity or capacity_mw in the config file)")
    manifest = RunManifest("ingest", settings.to_dict(), args.argv)
    raws = []
    for path in args.inputs:
        manifest.add_input(path)
        raws.append(read_raw_csv(path, settings.capacity_mw))
    series = normalize(merge_raw(raws))
    segments = segment_series(series, settings.delta_minutes, settings.segment_hours, settings.segment_start_hour)
    if not segments:
        raise DataError("no complete daily segment in the input", path=", ".join(args.inputs))
    for segment in segments:
        segment.curtailed = detect_curtailment(segment, settings.plateau_len, settings.flat_tol, settings.gap_tol)
    train, test = _train_test(SegmentSet(segments))
    report = {
        "total": len(segments),
        "curtailed": sum(s.curtailed for s in segments),
        "retained": sum(not s.curtailed for s in segments),
        "train": len(train),
        "test": len(test),
        "providers": sorted({s.provider for s in segments}),
        "rejected_lines": sum(len(r.rejected_lines) for r in raws),
        "clamped_values": series.n_clamped,
    }
    write_segments(args.out, segments)
    report_path = Path(args.out).with_suffix(".report.json")
    _write_json(report_path, report)
    manifest.add_output(args.out)
    manifest.add_output(report_path)
    manifest.finish(RunManifest.path_for(args.out))
    print(f"[Jacobicast] segments: total {report['total']}, curtailed {report['curtailed']}, "
          f"retained {report['retained']}, train {report['train']}, test {report['test']}")
    return EXIT_OK


def _params_from_args(args, manifest: RunManifest) -> ModelParams:
    if args.calibration:
        params = _load_calibration(args.calibration, manifest).params
    elif args.theta0 is not None and args.alpha is not None:
        params = ModelParams(theta0=args.theta0, alpha=args.alpha, kind=ModelKind.parse(args.model))
    else:
        raise ConfigError("give either --calibration or both --theta0 and --alpha")
    if args.schedule:
        params = ModelParams(params.theta0, params.alpha, params.kind, get_schedule(args.schedule))
    return params


def cmd_validate(args, settings: Settings) -> int:
    manifest = RunManifest("validate", settings.to_dict(), args.argv)
    data = _load_segments(args.segments, manifest, args.provider)
    params = _params_from_args(args, manifest)
    records = []
    failing = 0
    for segment in data:
        curve = build_curve(segment, settings.epsilon)
        report = check_conditions(curve, params, segment.times)
        failing += not report.ok
        records.append({"segment": segment.id, **report.to_dict()})
        if not report.ok:
            logger.warning("segment %s: %d (A) and %d (B) violations", segment.id,
                           len(report.violations_a), len(report.violations_b))
    out = {"params": params.to_dict(), "n_segments": len(data), "n_failing": failing, "segments": records}
    _write_json(args.out, out)
    manifest.add_output(args.out)
    manifest.finish(RunManifest.path_for(args.out))
    print(f"[Jacobicast] {failing} of {len(data)} segments violate the validity conditions "
          f"under the '{params.rate_schedule.name}' schedule")
    return EXIT_NUMERICAL if failing else EXIT_OK


def _surface_grid(center: float, points: int = 15) -> np.ndarray:
    return np.geomspace(center / 4.0, center * 4.0, points)


def cmd_calibrate(args, settings: Settings) -> int:
    manifest = RunManifest("calibrate", settings.to_dict(), args.argv)
    data = _load_segments(args.segments, manifest, args.provider)
    train, test = _train_test(data)
    if not len(train):
        raise DataError("training set is empty", path=args.segments)
    integrator = IntegratorConfig(substeps=settings.substeps)
    schedule = get_schedule(args.schedule) if args.schedule else None
    provider = args.provider or ",".join(train.providers)
    result = calibrate(train, args.method, args.model, settings.epsilon, _optimizer(settings), _fixed_point(settings),
                       integrator, schedule=schedule, provider=provider)
    if result.optimizer is not None and not result.optimizer.converged:
        logger.warning("optimizer stopped on %s without converging; result is flagged", result.optimizer.reason)

    record = result.to_dict()
    if len(test):
        record["test_loglik"] = evaluate_loglik(result, test, settings.epsilon, integrator).value
        record["test_n"] = test.n_transitions
    _write_json(args.out, record)
    manifest.add_output(args.out)

    if args.surface:
        frame = loglik_surface(train, _surface_grid(result.params.theta0), _surface_grid(max(result.params.alpha, 1e-6)),
                               settings.epsilon, result.params.kind, integrator)
        frame.to_csv(args.surface, index=False, float_format="%.10g")
        manifest.add_output(args.surface)
    manifest.finish(RunManifest.path_for(args.out))

    delta = f", delta={result.delta:.4g}" if result.delta is not None else ""
    print(f"[Jacobicast] model {result.params.kind.number} ({result.method.value}): theta0={result.params.theta0:.4g}, "
          f"alpha={result.params.alpha:.4g}{delta}, product={result.product:.4g}, loglik={result.loglik.value:.6g}, "
          f"AIC={result.criteria.aic:.6g}, BIC={result.criteria.bic:.6g}")
    if "test_loglik" in record:
        print(f"[Jacobicast] held-out loglik={record['test_loglik']:.6g} over {record['test_n']} transitions")
    return EXIT_OK


def cmd_compare(args, settings: Settings) -> int:
    manifest = RunManifest("compare", settings.to_dict(), args.argv)
    data = _load_segments(args.segments, manifest)
    train, _ = _train_test(data)
    table = compare_models(train, args.providers, args.models, args.methods, settings.epsilon, _optimizer(settings),
                           _fixed_point(settings), IntegratorConfig(substeps=settings.substeps), settings.threads)
    frame = table.to_frame()
    csv_path = Path(args.out)
    json_path = csv_path.with_suffix(".json")
    frame.to_csv(csv_path, index=False, float_format="%.10g")
    _write_json(json_path, table.to_dict())
    manifest.add_output(csv_path)
    manifest.add_output(json_path)
    manifest.finish(RunManifest.path_for(csv_path))
    print(frame.to_string(index=False))
    return EXIT_OK


def _select_days(data: SegmentSet, days: Optional[Sequence[str]], path: str) -> List[Segment]:
    if not days:
        _, test = _train_test(data)
        return test.segments or data.segments
    chosen = []
    for day in days:
        matches = [s for s in data if s.id == day or s.start.startswith(day)]
        if not matches:
            raise DataError(f"no forecast coverage for requested day '{day}'", path=path)
        chosen.extend(matches)
    return chosen


def _simulate_days(args, settings: Settings, manifest: RunManifest):
    result = _load_calibration(args.calibration, manifest)
    data = _load_segments(args.segments, manifest, args.provider)
    seed = settings.seed if settings.seed is not None else draw_seed()
    manifest.record_seed(seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for index, segment in enumerate(_select_days(data, args.day, args.segments)):
        curve = build_curve(segment, settings.epsilon)
        cfg = SimConfig(n_paths=settings.n_paths, substeps=settings.sim_substeps, seed=derive_seed(seed, index),
                        threads=settings.threads)
        v0 = float(segment.x[0] - curve.value(0.0))
        bundle = simulate_paths(result.params, curve, segment.times, cfg, v0=v0, delta=result.delta,
                                epsilon=settings.epsilon)
        yield segment, bundle, out_dir, result.params


def _write_histograms(segment: Segment, bundle, params: ModelParams, settings: Settings, out_dir: Path,
                      manifest: RunManifest, bins: int) -> dict:
    """Observed vs simulated V (and, with diffusion, Z) transition histograms for one day"""
    day = SegmentSet([segment])
    observed = day.prepared(settings.epsilon)[0]
    spaces = {"v": (np.diff(observed.errors), bundle.errors)}
    if params.product > 0:
        spaces["z"] = (lamperti_transitions(day, params, settings.epsilon), lamperti_paths(bundle, params))
    else:
        logger.info("day %s: zero diffusion, no Lamperti histogram", segment.id)
    distances = {}
    for space, (observed_steps, simulated) in spaces.items():
        comparison = compare_transitions(observed_steps, np.diff(simulated, axis=-1), bins)
        for side, histogram in (("observed", comparison.observed), ("simulated", comparison.simulated)):
            path = out_dir / f"{segment.id}.{space}_{side}.hist.csv"
            write_histogram_csv(histogram, path)
            manifest.add_output(path)
        distances[space] = comparison.distance
    return distances


def cmd_simulate(args, settings: Settings) -> int:
    if args.histograms and args.bins < 1:
        raise ConfigError(f"--bins must be at least 1, got {args.bins}")
    manifest = RunManifest("simulate", settings.to_dict(), args.argv)
    written = 0
    distances = {}
    for segment, bundle, out_dir, params in _simulate_days(args, settings, manifest):
        path = out_dir / f"{segment.id}.paths.csv"
        write_paths_csv(bundle, path, args.keep)
        manifest.add_output(path)
        if args.histograms:
            distances[segment.id] = _write_histograms(segment, bundle, params, settings, out_dir, manifest, args.bins)
        written += 1
    if distances:
        summary = Path(args.out_dir) / "histograms.json"
        _write_json(summary, distances)
        manifest.add_output(summary)
        for space in ("v", "z"):
            values = [d[space] for d in distances.values() if space in d]
            if values:
                print(f"[Jacobicast] {space.upper()} transitions: mean total variation distance {np.mean(values):.4f}")
    manifest.finish(Path(args.out_dir) / "simulate.manifest.json")
    print(f"[Jacobicast] wrote paths for {written} day(s) to {args.out_dir} (seed {manifest.seed})")
    return EXIT_OK


def cmd_bands(args, settings: Settings) -> int:
    manifest = RunManifest("bands", settings.to_dict(), args.argv)
    written = 0
    for segment, bundle, out_dir, _ in _simulate_days(args, settings, manifest):
        bands = empirical_bands(bundle, settings.levels)
        path = out_dir / f"{segment.id}.bands.csv"
        write_bands_csv(bands, path, realized=segment.x)
        manifest.add_output(path)
        written += 1
    manifest.finish(Path(args.out_dir) / "bands.manifest.json")
    print(f"[Jacobicast] wrote bands for {written} day(s) to {args.out_dir} (seed {manifest.seed})")
    return EXIT_OK


def cmd_selftest(args, settings: Settings) -> int:
    results = run_selftest(full=args.full, seed=settings.seed if settings.seed is not None else 0, only=args.only)
    print_report(results)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def cmd_synth(args, settings: Settings) -> int:
    manifest = RunManifest("synth", settings.to_dict(), args.argv)
    seed = settings.seed if settings.seed is not None else draw_seed()
    manifest.record_seed(seed)
    params = ModelParams(theta0=args.theta0, alpha=args.alpha, kind=ModelKind.parse(args.model))
    series = synthetic_series(params, args.days, args.providers, seed, args.curtailed_days,
                              settings.delta_minutes, settings.epsilon, settings.sim_substeps)
    capacity = settings.capacity_mw if settings.capacity_mw is not None else 100.0
    write_raw_csv(args.out, series, capacity)
    manifest.add_output(args.out)
    manifest.finish(RunManifest.path_for(args.out))
    print(f"[Jacobicast] wrote {args.days} synthetic day(s) for {len(args.providers)} provider(s) to {args.out}")
    return EXIT_OK


def _add_params_args(parser) -> None:
    parser.add_argument("--calibration", help="calibration JSON written by `calibrate`")
    parser.add_argument("--theta0", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--model", default="2", help="1 (plain) or 2 (derivative tracking)")
    parser.add_argument("--schedule", help="theta_t schedule: forecast_bound or constant")


def _add_sim_args(parser) -> None:
    parser.add_argument("calibration", help="calibration JSON")
    parser.add_argument("segments", help="segments JSON")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--day", action="append", help="segment id or start date; repeatable (default: test days)")
    parser.add_argument("--provider")
    parser.add_argument("--n-paths", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value settings file (default: $JACOBICAST_CONFIG)")
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--epsilon", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="jacobicast", description="Calibrate and simulate bounded forecast-error diffusions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = commands.add_parser("ingest", parents=[common], help="raw CSV -> daily segments")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--capacity", type=float, help="installed capacity in MW")
    p.add_argument("--delta-minutes", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = commands.add_parser("validate", parents=[common], help="check conditions (A) and (B) per segment")
    p.add_argument("segments")
    p.add_argument("--provider")
    p.add_argument("--out", required=True)
    _add_params_args(p)
    p.set_defaults(func=cmd_validate)

    p = commands.add_parser("calibrate", parents=[common], help="fit one model on the training days")
    p.add_argument("segments")
    p.add_argument("--method", default=FitMethod.V_BETA.value, choices=[m.value for m in FitMethod])
    p.add_argument("--model", default="2", choices=["1", "2"])
    p.add_argument("--provider")
    p.add_argument("--schedule")
    p.add_argument("--substeps", type=int)
    p.add_argument("--surface", help="also write the log-likelihood surface around the fit to this CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = commands.add_parser("compare", parents=[common], help="model x provider x method comparison table")
    p.add_argument("segments")
    p.add_argument("--providers", nargs="*")
    p.add_argument("--models", nargs="+", default=["1", "2"], choices=["1", "2"])
    p.add_argument("--methods", nargs="+", default=[FitMethod.V_BETA.value, FitMethod.V_GAUSS.value],
                   choices=[m.value for m in FitMethod])
    p.add_argument("--substeps", type=int)
    p.add_argument("--out", required=True, help="CSV path; the JSON table goes next to it")
    p.set_defaults(func=cmd_compare)

    p = commands.add_parser("simulate", parents=[common], help="simulate paths for forecast days")
    _add_sim_args(p)
    p.add_argument("--keep", type=int, help="write only the first KEEP paths")
    p.add_argument("--histograms", action="store_true",
                   help="also write observed and simulated V and Z transition histograms per day")
    p.add_argument("--bins", type=int, default=50, help="histogram bins (default 50)")
    p.set_defaults(func=cmd_simulate)

    p = commands.add_parser("bands", parents=[common], help="pointwise confidence bands for forecast days")
    _add_sim_args(p)
    p.add_argument("--levels", help="comma-separated central levels, e.g. 0.5,0.9,0.99")
    p.set_defaults(func=cmd_bands)

    p = commands.add_parser("selftest", parents=[common], help="run the property checks on synthetic fixtures")
    p.add_argument("--full", action="store_true", help="acceptance sizes (slow)")
    p.add_argument("--only", nargs="+")
    p.set_defaults(func=cmd_selftest)

    p = commands.add_parser("synth", parents=[common], help="write a synthetic raw CSV")
    p.add_argument("--theta0", type=float, default=1.9)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--model", default="2", choices=["1", "2"])
    p.add_argument("--days", type=int, default=10)
    p.add_argument("--providers", nargs="+", default=["synthetic"])
    p.add_argument("--curtailed-days", type=int, nargs="*", default=[])
    p.add_argument("--capacity", type=float)
    p.add_argument("--delta-minutes", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        setup_logging()
        logger.error("%s", e)
        return EXIT_USAGE
    setup_logging(args.verbose)
    args.argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        return args.func(args, _settings(args))
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except DataError as e:
        logger.error("%s", e)
        return EXIT_DATA
    except (IntegrationError, DomainError, InfeasibleMomentsError) as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL
    except JacobicastError as e:
        logger.error("%s", e)
        logger.debug("unhandled jacobicast error", exc_info=True)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
