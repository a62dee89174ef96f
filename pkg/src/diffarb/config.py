"""Run configuration files: strict JSON schema, loader, canonical writer.

A run configuration is one JSON document with up to five sections:

``model``
    the market description (required), fields exactly as MarketModel;
``certificates``
    optional user-supplied envelope functions, fields as CertificateBundle;
``checks``
    either the string "all-applicable" or a list of condition ids the
    orchestrator can run from the model (see RUNNABLE_CHECKS);
``simulate``
    optional Monte Carlo settings, fields as SimConfig;
``output``
    report path, paths-CSV path and verbosity (all with defaults).

Unknown keys are rejected anywhere in the document, with a best-effort
line number pointing at the offender.  The canonical writer renders any
accepted configuration back to sorted, indented JSON so that a config
round-trips to an equivalent one field by field; the digest of that
canonical form identifies the run in reports.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

from . import dsl
from .errors import ConfigError, DiffarbError
from .model import CertificateBundle, MarketModel
from .simulate import SimConfig

ALL_APPLICABLE = "all-applicable"

# Condition ids the orchestrator can run straight from a market model.
# check_mu_1d takes price-SDE coefficients rather than a market model, so
# it stays a library-only entry point.
RUNNABLE_CHECKS = (
    "slmd",
    "EL1",
    "E1",
    "EL3",
    "E3",
    "mckean",
    "growth_cap",
    "U1",
    "U2",
    "holder_1d",
    "NL1",
    "N1",
    "radial_existence",
    "radial_nonexistence",
    "1d_emm",
)

_TOP_KEYS = ("model", "certificates", "checks", "simulate", "output")
_MODEL_KEYS = ("d", "m", "T", "x0", "S0", "b", "a", "mu")
_CERT_KEYS = ("r", "zeta", "A", "B", "xi", "alpha", "a_hat", "z0",
              "per_asset", "moduli")
_PER_ASSET_KEYS = ("r", "zeta", "A", "B")
_SIM_KEYS = ("steps_per_unit_time", "paths", "radii", "master_seed",
             "drift_mode", "shift_asset", "scheme", "bridge_correction")
_OUTPUT_KEYS = ("report", "csv", "verbosity")
_VERBOSITY = ("normal", "quiet")

_DEFAULT_REPORT = "report.json"
_DEFAULT_CSV = "paths.csv"


@dataclass(frozen=True)
class RunConfig:
    """One validated run: model, optional certificates, checks to run,
    optional simulation settings, and output locations."""

    model: MarketModel
    certificates: CertificateBundle | None
    checks: tuple | str
    simulate: SimConfig | None
    report_path: str = _DEFAULT_REPORT
    csv_path: str = _DEFAULT_CSV
    verbosity: str = "normal"

    def with_seed(self, master_seed: int) -> "RunConfig":
        if self.simulate is None:
            return self
        return replace(self, simulate=replace(self.simulate,
                                              master_seed=master_seed))


def _line_of(raw: str, needle: str) -> int | None:
    """1-based line of the first occurrence of a quoted key, if any."""
    idx = raw.find(f'"{needle}"')
    if idx < 0:
        return None
    return raw.count("\n", 0, idx) + 1


def _require_mapping(path, raw, name, value):
    if not isinstance(value, dict):
        raise ConfigError(path, _line_of(raw, name),
                          f"section {name!r} must be an object")
    return value


def _reject_unknown(path, raw, section, data, allowed):
    for key in data:
        if key not in allowed:
            raise ConfigError(
                path, _line_of(raw, key),
                f"unknown key {key!r} in {section} "
                f"(known: {', '.join(allowed)})")


def load_config(path) -> RunConfig:
    """Parse and validate a configuration file.

    Any defect (bad JSON, unknown key, wrong dimensions, an expression
    that fails to parse or bind) is reported as ConfigError carrying the
    file path and a best-effort line number.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(path, exc.lineno, f"not valid JSON: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError(path, 1, "top level must be a JSON object")
    _reject_unknown(path, raw, "the top level", doc, _TOP_KEYS)

    if "model" not in doc:
        raise ConfigError(path, 1, "missing required section 'model'")
    model_doc = _require_mapping(path, raw, "model", doc["model"])
    _reject_unknown(path, raw, "model", model_doc, _MODEL_KEYS)
    missing = [k for k in _MODEL_KEYS if k not in model_doc]
    if missing:
        raise ConfigError(path, _line_of(raw, "model"),
                          f"model is missing {', '.join(missing)}")
    try:
        model = MarketModel(
            d=model_doc["d"], m=model_doc["m"], T=model_doc["T"],
            x0=tuple(model_doc["x0"]), S0=tuple(model_doc["S0"]),
            b=tuple(model_doc["b"]),
            a=tuple(tuple(row) for row in model_doc["a"]),
            mu=tuple(model_doc["mu"]))
    except (DiffarbError, ValueError, TypeError) as exc:
        raise ConfigError(path, _line_of(raw, "model"), f"model: {exc}")

    certificates = None
    if doc.get("certificates") is not None:
        cert_doc = _require_mapping(path, raw, "certificates",
                                    doc["certificates"])
        _reject_unknown(path, raw, "certificates", cert_doc, _CERT_KEYS)
        for i, sub in dict(cert_doc.get("per_asset") or {}).items():
            _reject_unknown(path, raw, f"certificates.per_asset[{i}]",
                            _require_mapping(path, raw, "per_asset", sub),
                            _PER_ASSET_KEYS)
        try:
            certificates = CertificateBundle(**cert_doc)
        except (DiffarbError, ValueError, TypeError) as exc:
            raise ConfigError(path, _line_of(raw, "certificates"),
                              f"certificates: {exc}")

    checks = doc.get("checks", ALL_APPLICABLE)
    if isinstance(checks, str):
        if checks != ALL_APPLICABLE:
            raise ConfigError(
                path, _line_of(raw, "checks"),
                f"checks must be {ALL_APPLICABLE!r} or a list of condition ids")
    elif isinstance(checks, list):
        for cid in checks:
            if cid not in RUNNABLE_CHECKS:
                raise ConfigError(
                    path, _line_of(raw, "checks"),
                    f"unknown check id {cid!r} "
                    f"(known: {', '.join(RUNNABLE_CHECKS)})")
        checks = tuple(checks)
    else:
        raise ConfigError(path, _line_of(raw, "checks"),
                          "checks must be a string or a list")

    simulate = None
    if doc.get("simulate") is not None:
        sim_doc = _require_mapping(path, raw, "simulate", doc["simulate"])
        _reject_unknown(path, raw, "simulate", sim_doc, _SIM_KEYS)
        try:
            simulate = SimConfig(**{k: (tuple(v) if k == "radii" else v)
                                    for k, v in sim_doc.items()})
        except (ValueError, TypeError) as exc:
            raise ConfigError(path, _line_of(raw, "simulate"),
                              f"simulate: {exc}")

    out_doc = _require_mapping(path, raw, "output", doc.get("output") or {})
    _reject_unknown(path, raw, "output", out_doc, _OUTPUT_KEYS)
    verbosity = out_doc.get("verbosity", "normal")
    if verbosity not in _VERBOSITY:
        raise ConfigError(path, _line_of(raw, "verbosity"),
                          f"verbosity must be one of {_VERBOSITY}")

    return RunConfig(
        model=model,
        certificates=certificates,
        checks=checks,
        simulate=simulate,
        report_path=str(out_doc.get("report", _DEFAULT_REPORT)),
        csv_path=str(out_doc.get("csv", _DEFAULT_CSV)),
        verbosity=verbosity,
    )


# ---------------------------------------------------------------------------
# Canonical writer
# ---------------------------------------------------------------------------


def _expr_str(e):
    return e if isinstance(e, str) else dsl.print_expr(e)


def _model_dict(model: MarketModel) -> dict:
    return {
        "d": int(model.d),
        "m": int(model.m),
        "T": float(model.T),
        "x0": [float(v) for v in model.x0],
        "S0": [float(v) for v in model.S0],
        "b": [_expr_str(e) for e in model.b],
        "a": [[_expr_str(e) for e in row] for row in model.a],
        "mu": [_expr_str(e) for e in model.mu],
    }


def _certs_dict(certs: CertificateBundle) -> dict:
    out = {}
    for key in ("r", "z0"):
        value = getattr(certs, key)
        if value is not None:
            out[key] = float(value)
    for key in ("zeta", "A", "B", "xi", "alpha", "a_hat"):
        value = getattr(certs, key)
        if value is not None:
            out[key] = _expr_str(value)
    if certs.per_asset:
        out["per_asset"] = {
            str(i): {k: (float(v) if k == "r" else _expr_str(v))
                     for k, v in sub.items() if v is not None}
            for i, sub in certs.per_asset.items()
        }
    if certs.moduli:
        out["moduli"] = {name: _expr_str(value)
                         for name, value in certs.moduli.items()}
    return out


def config_to_dict(config: RunConfig) -> dict:
    """Plain-data rendering of a RunConfig, ready for JSON."""
    return {
        "model": _model_dict(config.model),
        "certificates": (None if config.certificates is None
                         else _certs_dict(config.certificates)),
        "checks": (config.checks if isinstance(config.checks, str)
                   else list(config.checks)),
        "simulate": (None if config.simulate is None
                     else config.simulate.to_dict()),
        "output": {
            "report": config.report_path,
            "csv": config.csv_path,
            "verbosity": config.verbosity,
        },
    }


def write_config(config: RunConfig) -> str:
    """Canonical text form: sorted keys, two-space indent, LF, newline at
    end.  load(write(c)) is equivalent to c field by field."""
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"


def config_digest(config: RunConfig) -> str:
    """Hex digest identifying the effective configuration in reports."""
    return hashlib.sha256(write_config(config).encode("utf-8")).hexdigest()


__all__ = [
    "ALL_APPLICABLE",
    "RUNNABLE_CHECKS",
    "RunConfig",
    "config_digest",
    "config_to_dict",
    "load_config",
    "write_config",
]
