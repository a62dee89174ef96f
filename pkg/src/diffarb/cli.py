"""Command line front end.

Subcommands:

``check``
    validate the model, run the configured condition checks, classify,
    and write the machine report;
``simulate``
    run the configured Monte Carlo plan, write the paths CSV and a
    report with the estimates;
``feller``
    explosion test for one-dimensional time-independent models;
``report``
    everything: checks, the martingale and per-asset defect
    simulations, a consistency cross-check between the two, the paths
    CSV, and rendered figures;
``preset list`` / ``preset show NAME``
    enumerate or print the bundled example configurations.

Exit codes: 0 success, 1 configuration problem, 2 numeric failure
(failed validation, non-PSD diffusion, expression blow-up),
3 contradiction between derivation rules or between a certificate-grade
verdict and simulation.

Reports are deterministic: no timestamps, keys sorted, and the config
digest identifies the effective configuration (after any --seed
override), so a rerun with the same config and seed is byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, criteria
from .config import (ALL_APPLICABLE, RUNNABLE_CHECKS, RunConfig,
                     config_digest, load_config, write_config)
from .errors import (ConfigError, ContradictionError, DimensionMismatch,
                     EvalError, MissingCertificate, NotPSD, UnknownPreset)
from .model import validate_model
from .presets import PRESET_NAMES, preset
from .quadrature import feller_classify
from .simulate import (asset_defect, emit_paths, martingale_defect,
                       simulate_exit)
from .verdict import classify

_FIGURE_DIR = "figures"
_CSV_PATH_COUNT = 10
_CSV_MAX_ROWS_PER_PATH = 512


# ---------------------------------------------------------------------------
# Check orchestration


def _dispatch_check(cid, model, certs, radial_pair):
    """Run one check id against the model; returns a list of reports."""
    if cid == "slmd":
        return [criteria.check_slmd(model)]
    if cid == "EL1":
        return [criteria.check_EL1(model, certs)]
    if cid == "E1":
        return [criteria.check_E1(model, certs, i=i)
                for i in range(1, model.m + 1)]
    if cid == "EL3":
        return [criteria.check_EL3(model, certs)]
    if cid == "E3":
        return [criteria.check_E3(model, certs)]
    if cid == "mckean":
        return [criteria.check_mckean(model, certs)]
    if cid == "growth_cap":
        return [criteria.check_growth_cap(model, certs)]
    if cid == "U1":
        return [criteria.check_U1(model)]
    if cid == "U2":
        return [criteria.check_U2(model)]
    if cid == "holder_1d":
        return [criteria.check_holder_1d(model)]
    if cid == "NL1":
        return [criteria.check_NL1(model, certs)]
    if cid == "N1":
        return [criteria.check_N1(model, certs)]
    if cid == "radial_existence":
        return [radial_pair()[0]]
    if cid == "radial_nonexistence":
        return [radial_pair()[1]]
    if cid == "1d_emm":
        shape = criteria.radial_shape(model)
        if model.d != 1 or shape is None:
            raise DimensionMismatch(
                "1d_emm needs a one-dimensional market with a scalar "
                "radial diffusion")
        return [criteria.check_1d_emm(shape["f"])]
    raise ValueError(f"unknown check id {cid!r}")


def run_checks(model, certs, check_ids, *, source=None):
    """Run condition checks; returns (reports, skipped).

    With the "all-applicable" sentinel every runnable check is tried
    and the inapplicable ones (wrong shape, missing certificate inputs)
    are recorded as skips.  An explicitly requested check that turns
    out inapplicable is a configuration error instead.
    """
    forgiving = check_ids == ALL_APPLICABLE
    selected = RUNNABLE_CHECKS if forgiving else tuple(check_ids)
    radial = None

    def radial_pair():
        nonlocal radial
        if radial is None:
            radial = criteria.check_radial_market(model, certs)
        return radial

    reports = []
    skipped = []
    for cid in selected:
        try:
            reports.extend(_dispatch_check(cid, model, certs, radial_pair))
        except (DimensionMismatch, MissingCertificate) as exc:
            if not forgiving:
                raise ConfigError(
                    source, None,
                    f"check {cid!r} is not applicable here: {exc}") from exc
            skipped.append({"check": cid, "reason": type(exc).__name__,
                            "message": str(exc)})
    return reports, skipped


# ---------------------------------------------------------------------------
# Simulation and cross-checking


def _csv_thin(model, sim) -> int:
    n_steps = max(1, math.ceil(sim.steps_per_unit_time * model.T - 1e-9))
    return max(1, n_steps // _CSV_MAX_ROWS_PER_PATH)


def _first_rule(verdict, conclusion: str) -> str:
    for prov in verdict.provenance:
        if prov.conclusion == conclusion:
            return prov.rule
    return "unknown_rule"


def _cross_check(verdict, mart, assets, tol):
    """Compare certified existence flags against simulated defects.

    A certificate-grade Exists flag facing a simulated defect plateau
    above tol is a contradiction; evidence-grade conflicts are recorded
    as tension only.
    """
    findings = []
    status = "consistent"
    pairs = []
    if mart is not None:
        pairs.append(("elmm", "simulated_martingale_defect", mart))
    for i, rep in sorted(assets.items()):
        pairs.append(("emm", f"simulated_asset_defect(i={i})", rep))
    for flag, sim_rule, rep in pairs:
        if getattr(verdict, flag) != "Exists":
            continue
        if rep.trend != "plateau" or rep.defect <= tol:
            continue
        grade = verdict.grades.get(flag)
        findings.append({
            "flag": flag,
            "rule": _first_rule(verdict, f"{flag}=Exists"),
            "simulation": sim_rule,
            "defect": rep.defect,
            "tol": tol,
            "grade": grade,
        })
        if grade == "certificate":
            status = "contradiction"
        elif status != "contradiction":
            status = "tension"
    return {"status": status, "tol": tol, "findings": findings}


# ---------------------------------------------------------------------------
# Output helpers


def _resolve(out_dir, name) -> Path:
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _say(config: RunConfig, quiet: bool, text: str) -> None:
    if not quiet and config.verbosity != "quiet":
        print(text)


def _summarise_checks(config, quiet, reports, skipped, verdict):
    for rep in reports:
        _say(config, quiet, f"  {rep.condition_id}: {rep.verdict} ({rep.mode})")
    for entry in skipped:
        _say(config, quiet,
             f"  {entry['check']}: skipped ({entry['message']})")
    flags = (f"slmd={verdict.slmd} smd={verdict.smd} "
             f"elmm={verdict.elmm} emm={verdict.emm} bubble={verdict.bubble}")
    _say(config, quiet, f"verdict: {flags}")
    if verdict.elmm_unique != "Unknown" or verdict.emm_unique != "Unknown":
        _say(config, quiet,
             f"uniqueness: elmm_unique={verdict.elmm_unique} "
             f"emm_unique={verdict.emm_unique}")
    for note in verdict.notes:
        _say(config, quiet, f"note: {note}")


def _defect_line(rep) -> str:
    which = ("martingale defect" if rep.asset is None
             else f"asset {rep.asset} defect")
    return (f"{which}: {rep.trend} "
            f"(defect {rep.defect:.4g} at radius "
            f"{rep.estimate.per_radius[-1].radius:g})")


# ---------------------------------------------------------------------------
# Modes


def run(config: RunConfig, *, mode: str = "report", out_dir=".",
        tol: float = 0.01, workers: int | None = None, quiet: bool = False,
        source=None) -> int:
    """Execute one configuration end to end; returns the exit code.

    mode is "check" (criteria only), "simulate" (Monte Carlo only) or
    "report" (both, plus the cross-check, CSV and figures).
    """
    if mode not in ("check", "simulate", "report"):
        raise ValueError(f"unknown mode {mode!r}")
    source = source if source is not None else "<config>"
    if mode == "simulate" and config.simulate is None:
        raise ConfigError(source, None,
                          "simulate needs a 'simulate' section in the config")
    model = config.model
    doc: dict = {
        "version": __version__,
        "config_digest": config_digest(config),
        "master_seed": (None if config.simulate is None
                        else config.simulate.master_seed),
    }
    report_path = _resolve(out_dir, config.report_path)

    validation = validate_model(model)
    doc["validation"] = validation.to_dict()
    if not validation.passed:
        _write_json(report_path, doc)
        print(f"error: model validation failed "
              f"(min eigenvalue {validation.min_eigenvalue:.4g}, "
              f"symmetry defect {validation.max_symmetry_defect:.4g})",
              file=sys.stderr)
        return 2
    _say(config, quiet,
         f"validation: passed ({validation.samples} samples, "
         f"min eigenvalue {validation.min_eigenvalue:.4g})")

    verdict = None
    if mode in ("check", "report"):
        reports, skipped = run_checks(model, config.certificates,
                                      config.checks, source=source)
        verdict = classify(reports, model)
        doc["checks"] = [rep.to_dict() for rep in reports]
        doc["skipped"] = skipped
        doc["verdict"] = verdict.to_dict()
        _summarise_checks(config, quiet, reports, skipped, verdict)

    contradiction = None
    if mode in ("simulate", "report") and config.simulate is not None:
        sim = config.simulate
        simulation: dict = {}
        defect_reports = []
        if mode == "simulate":
            if sim.drift_mode == "P":
                estimate = simulate_exit(model, sim, workers=workers)
                simulation["exit"] = estimate.to_dict()
                top = estimate.per_radius[-1]
                _say(config, quiet,
                     f"exit probability at radius {top.radius:g}: "
                     f"{top.p_hat:.4g} [{top.ci_lo:.4g}, {top.ci_hi:.4g}]")
            elif sim.drift_mode == "Q":
                rep = martingale_defect(model, sim, workers=workers)
                simulation["martingale"] = rep.to_dict()
                defect_reports.append(rep)
                _say(config, quiet, _defect_line(rep))
            else:
                rep = asset_defect(model, sim.shift_asset, sim,
                                   workers=workers)
                simulation["assets"] = {str(sim.shift_asset): rep.to_dict()}
                defect_reports.append(rep)
                _say(config, quiet, _defect_line(rep))
        else:
            mart = martingale_defect(model, sim, workers=workers)
            simulation["martingale"] = mart.to_dict()
            defect_reports.append(mart)
            _say(config, quiet, _defect_line(mart))
            assets = {}
            for i in range(1, model.m + 1):
                rep = asset_defect(model, i, sim, workers=workers)
                assets[i] = rep
                defect_reports.append(rep)
                _say(config, quiet, _defect_line(rep))
            simulation["assets"] = {str(i): rep.to_dict()
                                    for i, rep in assets.items()}
            cross = _cross_check(verdict, mart, assets, tol)
            doc["cross_check"] = cross
            if cross["status"] == "contradiction":
                finding = cross["findings"][0]
                contradiction = ContradictionError(
                    finding["flag"], finding["rule"], finding["simulation"])
            elif cross["status"] == "tension":
                _say(config, quiet,
                     "note: evidence-grade existence sits uneasily with a "
                     "simulated defect plateau; see cross_check in the report")

        csv_text = emit_paths(model, sim, min(_CSV_PATH_COUNT, sim.paths),
                              thin=_csv_thin(model, sim))
        csv_path = _resolve(out_dir, config.csv_path)
        csv_path.write_text(csv_text, encoding="utf-8")
        simulation["csv"] = config.csv_path
        doc["simulation"] = simulation
        _say(config, quiet, f"paths csv: {csv_path}")

        if mode == "report":
            from . import figures  # heavy import, deferred

            fig_dir = Path(out_dir) / _FIGURE_DIR
            fig_dir.mkdir(parents=True, exist_ok=True)
            figures.save_exit_figure(defect_reports,
                                     fig_dir / "exit_probabilities.png")
            figures.save_defect_figure(defect_reports,
                                       fig_dir / "defect_trend.png")
            figures.save_paths_figure(csv_text, fig_dir / "sample_paths.png")
            _say(config, quiet, f"figures: {fig_dir}")

    _write_json(report_path, doc)
    _say(config, quiet, f"report: {report_path}")
    if contradiction is not None:
        raise contradiction
    return 0


def _autonomy_probe(model, source) -> None:
    """Reject time-dependent coefficients for the explosion test."""
    xs = np.linspace(-8.0, 8.0, 33).reshape(-1, 1)
    ref_b = model.eval_b(0.0, xs)
    ref_a = model.eval_a(0.0, xs)
    for t in (0.5 * model.T, model.T):
        if (np.max(np.abs(model.eval_b(t, xs) - ref_b)) > 0
                or np.max(np.abs(model.eval_a(t, xs) - ref_a)) > 0):
            raise ConfigError(
                source, None,
                "feller needs time-independent coefficients")


def run_feller(config: RunConfig, *, out_dir=".", quiet: bool = False,
               source=None) -> int:
    """Explosion test of the one-dimensional state equation."""
    source = source if source is not None else "<config>"
    model = config.model
    if model.d != 1:
        raise ConfigError(source, None,
                          f"feller needs a one-dimensional model, got d={model.d}")
    _autonomy_probe(model, source)

    def mu(x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = model.eval_b(0.0, arr.reshape(-1, 1))[:, 0]
        return vals if np.ndim(x) else float(vals[0])

    def sigma2(x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = model.eval_a(0.0, arr.reshape(-1, 1))[:, 0, 0]
        return vals if np.ndim(x) else float(vals[0])

    report = feller_classify(mu, sigma2, interval=(-np.inf, np.inf),
                             anchor=float(model.x0[0]))
    doc = {
        "version": __version__,
        "config_digest": config_digest(config),
        "feller": report.to_dict(),
    }
    report_path = _resolve(out_dir, config.report_path)
    _write_json(report_path, doc)

    def word(flag):
        return "unresolved" if flag is None else ("yes" if flag else "no")

    _say(config, quiet, f"explosive towards -inf: {word(report.explosive_left)}")
    _say(config, quiet, f"explosive towards +inf: {word(report.explosive_right)}")
    _say(config, quiet, f"explosive: {word(report.explosive)}")
    if report.detail:
        _say(config, quiet, f"note: {report.detail}")
    _say(config, quiet, f"report: {report_path}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _preset_params(args) -> dict:
    params = {}
    if getattr(args, "dim", None) is not None:
        params["d"] = args.dim
    if getattr(args, "eps", None) is not None:
        params["eps"] = args.eps
    if getattr(args, "delta", None) is not None:
        params["delta"] = args.delta
    return params


def _preset_command(args) -> int:
    if args.action == "list":
        for name in PRESET_NAMES:
            print(name)
        return 0
    config = preset(args.name, **_preset_params(args))
    sys.stdout.write(write_config(config))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffarb",
        description="Deterministic no-arbitrage checks and Monte Carlo "
                    "defect estimates for diffusion market models.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="run configuration JSON file")
    common.add_argument("--seed", type=int, default=None, metavar="N",
                        help="override the simulation master seed")
    common.add_argument("--out", default=".", metavar="DIR",
                        help="directory for reports, CSV and figures")
    common.add_argument("--tol", type=float, default=0.01, metavar="X",
                        help="defect threshold for the certificate vs "
                             "simulation cross-check")
    common.add_argument("--quiet", action="store_true",
                        help="suppress the human summary")
    common.add_argument("--workers", type=int, default=None, metavar="N",
                        help="worker threads for simulation chunks")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common],
                   help="validate, run condition checks, classify")
    sub.add_parser("simulate", parents=[common],
                   help="run the configured Monte Carlo plan")
    sub.add_parser("feller", parents=[common],
                   help="explosion test for 1-d time-independent models")
    sub.add_parser("report", parents=[common],
                   help="checks plus simulations, cross-check and figures")
    pre = sub.add_parser("preset", help="bundled example configurations")
    pre_sub = pre.add_subparsers(dest="action", required=True)
    pre_sub.add_parser("list", help="list preset names")
    show = pre_sub.add_parser("show", help="print a preset as config JSON")
    show.add_argument("name")
    show.add_argument("--dim", type=int, default=None, metavar="N",
                      help="dimension for radial-d")
    show.add_argument("--eps", type=float, default=None, metavar="X",
                      help="tail exponent offset for radial-d")
    show.add_argument("--delta", type=float, default=None, metavar="X",
                      help="volatility exponent for power-1d")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors;
        # usage problems are configuration errors in our code scheme.
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command == "preset":
            return _preset_command(args)
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.command == "feller":
            return run_feller(config, out_dir=args.out, quiet=args.quiet,
                              source=args.config)
        return run(config, mode=args.command, out_dir=args.out, tol=args.tol,
                   workers=args.workers, quiet=args.quiet,
                   source=args.config)
    except (ConfigError, UnknownPreset, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EvalError, NotPSD) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ContradictionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


__all__ = ["main", "run", "run_checks", "run_feller", "load_config",
           "preset"]


if __name__ == "__main__":
    sys.exit(main())
