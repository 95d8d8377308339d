"""Deterministic run reports and the replay check.

Every writer emits sorted-key JSON (or fixed-column CSV) with repr-exact
floats and no timestamps, hostnames, or paths, so identical configurations
produce byte-identical files.  The manifest ties the set together with the
configuration hash.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from . import __version__
from .config import RunConfig
from .controller import ScheduleResult
from .flows import flow_from_json_dict, flow_to_json_dict
from .solver import solve
from .spectral import FourierField, field_from_json_dict, field_to_json_dict

__all__ = [
    "write_run_reports",
    "kappa_tag",
    "ReplayReport",
    "replay_flow",
    "write_scan_reports",
]


def kappa_tag(kappa: float) -> str:
    """Filename-stable tag for a diffusivity value."""
    return repr(float(kappa))


def _dump_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def write_run_reports(result: ScheduleResult, outdir: str) -> list[str]:
    """Write the full report set for a scheduled run; returns relative paths."""
    os.makedirs(outdir, exist_ok=True)
    os.makedirs(os.path.join(outdir, "fields"), exist_ok=True)
    written: list[str] = []

    def emit(relpath: str, obj) -> None:
        _dump_json(os.path.join(outdir, relpath), obj)
        written.append(relpath)

    emit("flow.json", flow_to_json_dict(result.flow))
    for kappa in result.config.kappas:
        tag = kappa_tag(kappa)
        emit(f"fields/initial_{tag}.json", field_to_json_dict(result.initial_fields[kappa]))
        emit(f"fields/final_{tag}.json", field_to_json_dict(result.final_fields[kappa]))
    emit(
        "crossings.json",
        {
            "threshold": 0.25,
            "events": result.crossings,
            "counts": {kappa_tag(k): v for k, v in result.crossing_counts.items()},
        },
    )
    certs = result.certificates
    emit(
        "certificates.json",
        {
            "segments": certs,
            "all_hold": all(c["holds"] for c in certs),
            "min_margin": min(
                (
                    min(c["upper_margin"], c["lower_margin"], c["projective_margin"])
                    for c in certs
                ),
                default=0.0,
            ),
        },
    )
    emit("segments.json", {"status": result.status, "segments": result.segments})

    rates = os.path.join(outdir, "rates.csv")
    with open(rates, "w") as fh:
        fh.write("kappa,t,stat,log_l2_sq\n")
        for kappa in result.config.kappas:
            for t, stat, log_l2 in result.samples[kappa]:
                fh.write(f"{kappa!r},{t!r},{stat!r},{log_l2!r}\n")
    written.append("rates.csv")

    manifest = {
        "package": "dynamo-forge",
        "version": __version__,
        "config": result.config.to_json_dict(),
        "config_hash": result.config.content_hash(),
        "status": result.status,
        "end_time": result.end_time,
        "crossing_counts": {kappa_tag(k): v for k, v in result.crossing_counts.items()},
        "files": sorted(written),
    }
    _dump_json(os.path.join(outdir, "manifest.json"), manifest)
    written.append("manifest.json")
    return written


@dataclass
class ReplayReport:
    errors: dict[float, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def replay_flow(run_dir: str, tolerance: float = 1e-8) -> ReplayReport:
    """Re-simulate a run directory's exported flow and compare final fields.

    The exported flow covers the whole schedule with idle segments explicit,
    so one solve per diffusivity reproduces the run.  Errors are relative L2
    differences against the exported finals.
    """
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    config = RunConfig.from_json_dict(manifest["config"])
    with open(os.path.join(run_dir, "flow.json")) as fh:
        flow = flow_from_json_dict(json.load(fh))
    params = config.solver_params()

    errors: dict[float, float] = {}
    for kappa in config.kappas:
        tag = kappa_tag(kappa)
        with open(os.path.join(run_dir, "fields", f"initial_{tag}.json")) as fh:
            start = field_from_json_dict(json.load(fh))
        with open(os.path.join(run_dir, "fields", f"final_{tag}.json")) as fh:
            expected = field_from_json_dict(json.load(fh))
        got, _ = solve(start, flow, kappa, params, t0=flow.t0, t1=flow.t1)
        num = math.sqrt(
            float(FourierField(got.N, got.coeffs - expected.coeffs).l2_norm_sq())
        )
        den = math.sqrt(float(expected.l2_norm_sq()))
        errors[kappa] = num / den if den > 0 else num
    return ReplayReport(errors=errors, tolerance=tolerance)


def write_scan_reports(rows, params_desc: dict, outdir: str) -> list[str]:
    """CSV table plus machine-readable certificate for a kappa0 scan."""
    rows = sorted(rows, key=lambda r: r.kappa)
    os.makedirs(outdir, exist_ok=True)
    written = []

    csv_path = os.path.join(outdir, "kappa0_scan.csv")
    with open(csv_path, "w") as fh:
        fh.write("kappa,growth_factor,simplicity_gap,worst_projection,certified\n")
        for r in rows:
            fh.write(
                f"{r.kappa!r},{r.growth_factor!r},{r.simplicity_gap!r},"
                f"{r.worst_projection!r},{int(r.certified)}\n"
            )
    written.append("kappa0_scan.csv")

    certified_prefix = 0.0
    for r in rows:
        if not r.certified:
            break
        certified_prefix = r.kappa
    certificate = {
        "params": params_desc,
        "rows": [r.to_json_dict() for r in rows],
        "kappa0_emp": certified_prefix,
    }
    _dump_json(os.path.join(outdir, "certificate.json"), certificate)
    written.append("certificate.json")
    return written
