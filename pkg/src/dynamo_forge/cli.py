"""Command line entry points.

Commands: verify, grow, schedule, scan-kappa0, replay.  Exit codes: 0 on
success, 1 when a check or comparison fails, 2 for usage or configuration
errors.  Flag values override config-file values; `--threads` (or the
DYNAMO_FORGE_THREADS variable) caps worker threads and defaults to the
available cores.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

from .analysis import kappa0_scan
from .config import ConfigError, RunConfig
from .controller import GrowthShortfall, TransferFailure, run_schedule
from .reports import replay_flow, write_run_reports, write_scan_reports
from .verification import run_verification

__all__ = ["main"]

_DEFAULT_GROW_HORIZON = 60.0


def _default_threads() -> int:
    env = os.environ.get("DYNAMO_FORGE_THREADS")
    if env is not None:
        try:
            v = int(env)
        except ValueError:
            raise ConfigError(f"DYNAMO_FORGE_THREADS must be an integer, got {env!r}")
        if v < 1:
            raise ConfigError("DYNAMO_FORGE_THREADS must be positive")
        return v
    return os.cpu_count() or 1


def _load_certificate() -> dict:
    ref = resources.files("dynamo_forge").joinpath("data/kappa0_certificate.json")
    with ref.open() as fh:
        return json.load(fh)


def _gate_kappas(config: RunConfig) -> None:
    """Refuse diffusivities above the packaged certified range."""
    if config.allow_uncertified:
        return
    cert = _load_certificate()
    kappa0 = float(cert["kappa0_emp"])
    bad = [k for k in config.kappas if k > kappa0 + 1e-15]
    if bad:
        raise ConfigError(
            f"kappa values {bad} exceed the certified kappa0 = {kappa0!r}; "
            "rerun scan-kappa0 or pass --allow-uncertified"
        )


def _base_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "n", None) is not None:
        overrides["N"] = args.n
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
    if getattr(args, "stop_after_crossings", None) is not None:
        overrides["stop_after_crossings"] = args.stop_after_crossings
    if getattr(args, "kappas", None) is not None:
        overrides["kappas"] = tuple(args.kappas)
    if getattr(args, "allow_uncertified", False):
        overrides["allow_uncertified"] = True
    overrides["threads"] = args.threads if args.threads else _default_threads()
    return config.with_overrides(**overrides)


def _out_dir(args, config: RunConfig, command: str) -> str:
    if args.out:
        return args.out
    return os.path.join("runs", f"{command}-{config.content_hash()[:12]}")


def _cmd_verify(args) -> int:
    results = run_verification()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _cmd_grow(args) -> int:
    config = _base_config(args)
    config = config.with_overrides(
        kappas=(args.kappa,),
        stop_after_crossings=args.stop_after_crossings or 1,
        horizon=args.horizon if args.horizon is not None else _DEFAULT_GROW_HORIZON,
    )
    _gate_kappas(config)
    return _run_and_report(config, args, "grow")


def _cmd_schedule(args) -> int:
    config = _base_config(args)
    if config.stop_after_crossings is None and args.stop_after_crossings is None:
        config = config.with_overrides(stop_after_crossings=2)
    _gate_kappas(config)
    return _run_and_report(config, args, "schedule")


def _run_and_report(config: RunConfig, args, command: str) -> int:
    try:
        result = run_schedule(config)
    except (GrowthShortfall, TransferFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    outdir = _out_dir(args, config, command)
    write_run_reports(result, outdir)
    for kappa in config.kappas:
        print(
            f"kappa={kappa!r}: {result.crossing_counts[kappa]} threshold events"
        )
    print(f"status: {result.status}; end time {result.end_time!r}; reports in {outdir}")
    if args.replay_check:
        report = replay_flow(outdir)
        print(f"replay max relative error {report.max_error:.3e}")
        if not report.passed:
            return 1
    return 0 if result.status != "budget exhausted" else 1


def _cmd_scan_kappa0(args) -> int:
    config = _base_config(args)
    kappas = list(config.kappas)
    if args.kappas is None and not args.config:
        kappas = [
            0.0, 1e-4, 3e-4, 1e-3, 3e-3, 5e-3, 7e-3,
            1e-2, 1.3e-2, 1.6e-2, 2e-2, 3e-2, 1e-1, 1.0,
        ]
    rows = kappa0_scan(
        kappas,
        config.control_amplitude,
        config.N,
        config.solver_params(),
        proj_tol=config.proj_tol,
    )
    outdir = _out_dir(args, config, "scan-kappa0")
    params_desc = {
        "N": config.N,
        "dt": config.dt,
        "control_amplitude": config.control_amplitude,
        "config_hash": config.content_hash(),
    }
    write_scan_reports(rows, params_desc, outdir)
    print("kappa,growth_factor,simplicity_gap,worst_projection,certified")
    for r in sorted(rows, key=lambda r: r.kappa):
        print(
            f"{r.kappa!r},{r.growth_factor!r},{r.simplicity_gap!r},"
            f"{r.worst_projection!r},{int(r.certified)}"
        )
    print(f"reports in {outdir}")
    return 0


def _cmd_replay(args) -> int:
    run_dir = os.path.dirname(os.path.abspath(args.flow))
    report = replay_flow(run_dir, tolerance=args.tol)
    for kappa in sorted(report.errors):
        print(f"kappa={kappa!r}: relative error {report.errors[kappa]:.3e}")
    print("replay " + ("ok" if report.passed else "MISMATCH"))
    return 0 if report.passed else 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory (default runs/<cmd>-<hash>)")
    p.add_argument("--threads", type=int, help="worker thread cap")
    p.add_argument("--n", type=int, help="spectral radius override")
    p.add_argument("--dt", type=float, help="time step override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynamo-forge",
        description="Spectral simulation and control synthesis for induction dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", help="run the fast self-check battery")

    g = sub.add_parser("grow", help="drive one diffusivity to the growth threshold")
    _add_common(g)
    g.add_argument("--kappa", type=float, required=True)
    g.add_argument("--horizon", type=float)
    g.add_argument("--stop-after-crossings", type=int, dest="stop_after_crossings")
    g.add_argument("--allow-uncertified", action="store_true")
    g.add_argument("--replay-check", action="store_true")

    s = sub.add_parser("schedule", help="multi-diffusivity growth schedule")
    _add_common(s)
    s.add_argument("--kappas", type=float, nargs="+")
    s.add_argument("--horizon", type=float)
    s.add_argument("--stop-after-crossings", type=int, dest="stop_after_crossings")
    s.add_argument("--allow-uncertified", action="store_true")
    s.add_argument("--replay-check", action="store_true")

    k = sub.add_parser("scan-kappa0", help="certify a diffusivity grid")
    _add_common(k)
    k.add_argument("--kappas", type=float, nargs="+")

    r = sub.add_parser("replay", help="re-simulate an exported flow and compare")
    r.add_argument("--flow", required=True, help="path to a run's flow.json")
    r.add_argument("--tol", type=float, default=1e-8)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "verify": _cmd_verify,
        "grow": _cmd_grow,
        "schedule": _cmd_schedule,
        "scan-kappa0": _cmd_scan_kappa0,
        "replay": _cmd_replay,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
