"""Deterministic condition checkers.

Each checker probes one sufficient condition from the existence /
non-existence toolkit and emits a ConditionReport.  Two modes:

* certificate -- the caller supplied the condition's auxiliary functions
  (r, zeta, A, B, xi, alpha, a_hat); the checker verifies the defining
  inequalities on probe grids and classifies the required integrals.
* evidence -- no certificate was given; the checker fits envelopes from
  samples and applies the same tests to the fitted objects.

Verdicts are Holds / Fails / Inconclusive.  A Fails report always
carries a concrete witness: either a probe point violating an
inequality, or a tail classification of the wrong kind.  Inconclusive
is a first-class outcome for borderline integrals and sampling limits;
the verdict engine treats it as unknown, never as a failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .envelopes import (
    _effective_times,
    ellipticity_profile,
    gamma_profile,
    modulus_estimate,
)
from .errors import (
    DimensionMismatch,
    EvalError,
    MaxDepthExceeded,
    MissingCertificate,
    OscillationDetected,
)
from .model import (
    CertificateBundle,
    MarketModel,
    MPRField,
    SamplePlan,
    good_mpr_markov,
    sqrt_psd_batch,
)
from .quadrature import TailReport, classify_tail, khasminskii_nested

HOLDS = "Holds"
FAILS = "Fails"
INCONCLUSIVE = "Inconclusive"

_VERDICTS = (HOLDS, FAILS, INCONCLUSIVE)
_MODES = ("certificate", "evidence")

# Evidence-mode growth thresholds for ratio profiles against (1 + |x|^2):
# log-log slope of the per-radius sup together with the growth factor over
# the top five octaves.  The gap between the Holds and Fails bands is
# reported as Inconclusive.
_SLOPE_HOLD = 0.05
_SLOPE_FAIL = 0.15
_GROWTH_HOLD = 1.3
_GROWTH_FAIL = 1.5

# Pair-count stability test for modulus estimates: the estimate at the
# largest count must not keep growing as the count doubles.
_STAB_STEP = 1.2
_STAB_SPAN = 1.5
_MODULUS_BALLS = (1.0, 2.0, 4.0, 8.0)
_MODULUS_BASE_PAIRS = 256


# ---------------------------------------------------------------------------
# Report type


def _plain(value):
    """Recursively convert evidence payloads to JSON-friendly types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, TailReport):
        return value.to_dict()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    return value


@dataclass(frozen=True)
class ConditionReport:
    condition_id: str
    verdict: str
    mode: str
    evidence: dict = field(default_factory=dict)
    notes: tuple = ()

    def __post_init__(self):
        if self.verdict not in _VERDICTS:
            raise ValueError(f"verdict must be one of {_VERDICTS}, got {self.verdict!r}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        object.__setattr__(self, "evidence", _plain(self.evidence))
        object.__setattr__(self, "notes", tuple(str(n) for n in self.notes))

    def to_dict(self) -> dict:
        return {
            "condition_id": self.condition_id,
            "verdict": self.verdict,
            "mode": self.mode,
            "evidence": self.evidence,
            "notes": list(self.notes),
        }


def _point(t, x, **extra) -> dict:
    rec = {
        "t": None if t is None else float(t),
        "x": np.asarray(x, dtype=float).tolist() if x is not None else None,
    }
    rec.update({k: _plain(v) for k, v in extra.items()})
    return rec


class _Worst:
    """Tracks the most-violating probe (minimum margin) across sweeps."""

    def __init__(self):
        self.margin = np.inf
        self.record = None

    def update(self, margins, t, pts, **extra):
        margins = np.asarray(margins, dtype=float)
        if margins.size == 0:
            return
        j = int(np.argmin(margins))
        if margins[j] < self.margin:
            self.margin = float(margins[j])
            self.record = _point(t, pts[j], margin=float(margins[j]), **extra)


class _Best:
    """Tracks the largest value and its probe point (for max-ratio witnesses)."""

    def __init__(self):
        self.value = -np.inf
        self.record = None

    def update(self, values, t, pts, **extra):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        j = int(np.argmax(values))
        if values[j] > self.value:
            self.value = float(values[j])
            self.record = _point(t, pts[j], value=float(values[j]), **extra)


# ---------------------------------------------------------------------------
# Scalar helpers


def _fn_of(expr, var: str):
    """Turn a single-variable Expr into a float/array callable."""

    def fn(v):
        return dsl.eval_scalar_expr(expr, var, v)

    return fn


def _as_profile_fn(f, default_var: str = "x1"):
    """Coerce an Expr / source string / callable into a scalar callable."""
    if callable(f):
        return f
    expr = dsl.parse_expr(f) if isinstance(f, str) else f
    names = sorted(dsl.free_variables(expr))
    if len(names) > 1:
        raise DimensionMismatch(
            f"profile must depend on a single variable, found {names}"
        )
    var = names[0] if names else default_var
    return _fn_of(expr, var)


def _slack(lhs, rhs):
    """Relative tolerance for inequality margins at a probe."""
    return 1e-9 * (1.0 + np.abs(lhs) + np.abs(rhs))


def _positivity_probe(fn, grid, name: str):
    """Check fn > 0 and finite on the grid; returns a witness dict or None."""
    try:
        vals = np.asarray(fn(grid), dtype=float)
    except EvalError as err:
        return {"certificate": name, "error": str(err)}
    bad = ~np.isfinite(vals) | (vals <= 0.0)
    if np.any(bad):
        j = int(np.argmax(bad))
        return {"certificate": name, "z": float(grid[j]), "value": float(vals[j])}
    return None


class _ProfileFit:
    """Log-log interpolant of a positive profile with power-law tails.

    Sampled envelopes only reach the plan's largest radius, while the
    tail classifiers probe far beyond it; the fit extends the profile by
    the power law of its first and last few sampled points.
    """

    def __init__(self, z, v, fit_points: int = 8):
        z = np.asarray(z, dtype=float)
        v = np.maximum(np.asarray(v, dtype=float), 1e-300)
        keep = z > 0
        self.logz = np.log(z[keep])
        self.logv = np.log(v[keep])
        k = min(fit_points, self.logz.size)
        if self.logz.size >= 2 and self.logz[-1] > self.logz[-k]:
            self.hi_slope = float(
                np.polyfit(self.logz[-k:], self.logv[-k:], 1)[0]
            )
            self.lo_slope = float(np.polyfit(self.logz[:k], self.logv[:k], 1)[0])
        else:
            self.hi_slope = 0.0
            self.lo_slope = 0.0

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        logz = np.log(np.maximum(z, 1e-300))
        out = np.interp(logz, self.logz, self.logv)
        above = logz > self.logz[-1]
        if np.any(above):
            out = np.where(
                above, self.logv[-1] + self.hi_slope * (logz - self.logz[-1]), out
            )
        below = logz < self.logz[0]
        if np.any(below):
            out = np.where(
                below, self.logv[0] + self.lo_slope * (logz - self.logz[0]), out
            )
        return np.exp(out)[()] if out.ndim else float(np.exp(out))


# ---------------------------------------------------------------------------
# Shared sweeps


def _probe_times(model: MarketModel, time_points: int) -> np.ndarray:
    """Strictly positive probe times for inequality sweeps.

    The conditions constrain the coefficients for a.e. t, and an
    envelope zeta(t) that blows up at t = 0 while staying integrable is
    legitimate, so sweeps must not evaluate at t = 0 itself.  A few
    geometric points near 0 keep near-origin blowups visible.
    """
    times = _effective_times(model, time_points)
    if times.size == 1:
        return times  # autonomous sentinel: t is never read
    small = model.T * np.geomspace(1e-8, 1e-2, 4)
    return np.unique(np.concatenate([small, times[1:]]))


def _mu_term(model: MarketModel, t: float, pts: np.ndarray) -> np.ndarray:
    """2 <x, (0, mu)(t, x)> per probe point (zero when m = d)."""
    k = model.d - model.m
    if k == 0:
        return np.zeros(pts.shape[0])
    mu = model.eval_mu(t, pts)
    return 2.0 * np.einsum("nk,nk->n", pts[:, model.d - k:], mu)


def _growth_sweep(model: MarketModel, plan: SamplePlan, shifts):
    """Per-radius sup of [trace a + 2<x,(0,mu)> (+ 2<x, a e_i>)] / (1+|x|^2).

    shifts is a list of asset indices, with 0 meaning no shift.  Returns
    ({i: sup array}, {i: _Best witness tracker}).
    """
    times = _probe_times(model, plan.time_points)
    radii = plan.radii
    sups = {i: np.full(radii.size, -np.inf) for i in shifts}
    bests = {i: _Best() for i in shifts}
    for k, rho in enumerate(radii):
        pts = plan.sphere(model.d, float(rho), k)
        denom = 1.0 + rho * rho
        for t in times:
            A = model.eval_a(float(t), pts)
            tr = np.trace(A, axis1=1, axis2=2)
            base = tr + _mu_term(model, float(t), pts)
            xa = np.einsum("nij,ni->nj", A, pts)
            for i in shifts:
                vals = base if i == 0 else base + 2.0 * xa[:, i - 1]
                ratio = vals / denom
                sups[i][k] = max(sups[i][k], float(np.max(ratio)))
                bests[i].update(ratio, float(t), pts, radius=float(rho))
    return sups, bests


def _fit_growth(radii, sup_values):
    """Log-log slope and top-octaves growth factor of a sup profile."""
    radii = np.asarray(radii, dtype=float)
    s = np.maximum(np.asarray(sup_values, dtype=float), 1e-300)
    mask = radii >= 1.0
    if int(mask.sum()) < 8:
        mask = np.arange(radii.size) >= radii.size // 2
    r_f, s_f = radii[mask], s[mask]
    slope = float(np.polyfit(np.log(r_f), np.log(s_f), 1)[0])
    target = r_f[-1] / 32.0
    j = int(np.argmin(np.abs(r_f - target)))
    growth = float(s_f[-1] / max(s_f[j], 1e-300))
    return slope, growth


def _growth_verdict(slope, growth):
    if slope >= _SLOPE_FAIL and growth >= _GROWTH_FAIL:
        return FAILS
    if slope <= _SLOPE_HOLD and growth <= _GROWTH_HOLD:
        return HOLDS
    return INCONCLUSIVE


def _stability_sweep(fld, kind, box: float, dim: int, seed: int):
    """Modulus estimates at doubling pair counts, without anchor pairs.

    Returns (values, stable, estimate_at_max).  A genuinely Lipschitz /
    Hoelder field saturates; a rougher one keeps growing as the pairs
    densify, which the ratio test flags.
    """
    counts = [_MODULUS_BASE_PAIRS * (2 ** j) for j in range(4)]
    ests = [
        modulus_estimate(fld, kind, box, pairs=c, seed=seed, dim=dim, anchors=False)
        for c in counts
    ]
    vals = [e.value for e in ests]
    tiny = 1e-12 * (1.0 + vals[-1])
    stable = (
        vals[-1] <= _STAB_STEP * vals[-2] + tiny
        and vals[-1] <= _STAB_SPAN * vals[-3] + tiny
    )
    return vals, bool(stable), ests[-1]


def _interval_field(fn, center: float):
    """1-D field on a centered box from a scalar function on an interval."""

    def wrapped(X):
        return np.asarray(fn(np.asarray(X)[:, 0] + center), dtype=float)

    return wrapped


# ---------------------------------------------------------------------------
# SLMD (constructive market-price-of-risk route)


def check_slmd(model: MarketModel, *, plan: SamplePlan | None = None) -> ConditionReport:
    """Existence of a strict local martingale density via the Markovian
    market-price-of-risk field c = -a^{-1} b + (0, mu).

    Holds (evidence) when the field is constructible and locally bounded
    at all probes, which certifies the localized exponential-moment
    bound on stopped balls.  Fails (evidence) when d = m and |a^{-1} b|
    blows up inside a bounded box: the traded coordinates then pin the
    field down uniquely, so no locally bounded alternative exists.
    Everything else is Inconclusive.
    """
    plan = plan or SamplePlan.default()
    out = good_mpr_markov(model, plan)
    if isinstance(out, MPRField):
        evidence = {
            "construction": "zero_drift" if out.zero_drift else "a_inverse_b",
            "sup_by_box": {f"{edge:g}": val for edge, val in sorted(out.boundedness.items())},
        }
        notes = ["field locally bounded at all probes"]
        if model.m < model.d:
            notes.append("includes the (0, mu) completion on the untraded coordinates")
        return ConditionReport("slmd", HOLDS, "evidence", evidence, tuple(notes))

    evidence = {
        "kind": out.kind,
        "detail": out.detail,
        "witness": _point(*out.witness) if out.witness else None,
        "sup_by_box": {f"{edge:g}": val for edge, val in sorted(out.sup_samples.items())},
    }
    if out.kind == "interior_unbounded" and model.d == model.m:
        return ConditionReport(
            "slmd",
            FAILS,
            "evidence",
            evidence,
            ("with d = m the only candidate field is -a^{-1} b, and it is "
             "unbounded inside a bounded box",),
        )
    return ConditionReport(
        "slmd",
        INCONCLUSIVE,
        "evidence",
        evidence,
        ("the Markovian construction failed, but other density candidates "
         "are not ruled out",),
    )


# ---------------------------------------------------------------------------
# Existence-side envelope conditions (certificate and autonomous modes)


def _el1_sub_checks(model, r, zeta_fn, A_fn, B_fn, shift_i, plan):
    """Small-ball bound, the two envelope inequalities, and the nested
    tail classification shared by the EL1 / E1 checkers.

    shift_i = 0 runs the plain trace bound; i >= 1 adds 2<x, a e_i>.
    Returns (verdict, evidence, notes).
    """
    times = _probe_times(model, plan.time_points)
    rho_small = float(np.sqrt(2.0 * r))
    evidence = {}
    notes = []

    # Certificate sanity: zeta integrable over (0, T], A and B positive
    # on the window range the nested classifier will visit.
    zeta_tail = classify_tail(zeta_fn, model.T, "to_zero")
    evidence["zeta_integral"] = zeta_tail
    if zeta_tail.verdict == "Diverges":
        evidence["witness"] = {"certificate": "zeta", "detail": "integral over (0, T] diverges"}
        return FAILS, evidence, notes
    z_grid = r * 2.0 ** np.arange(0, 41, dtype=float)
    for name, fn in (("A", A_fn), ("B", B_fn)):
        bad = _positivity_probe(fn, z_grid, name)
        if bad is not None:
            evidence["witness"] = bad
            return FAILS, evidence, notes + [f"{name} must be positive on [r, infinity)"]

    # (a) small-ball boundedness: |a| + |mu| <= zeta(t) for |x| <= sqrt(2r).
    ball = plan.ball(model.d, rho_small, 0)
    small = _Worst()
    for t in times:
        A = model.eval_a(float(t), ball)
        sym = (A + np.transpose(A, (0, 2, 1))) / 2.0
        norm_a = np.abs(np.linalg.eigvalsh(sym)).max(axis=1)
        norm_mu = np.zeros(ball.shape[0])
        if model.m < model.d:
            mu = model.eval_mu(float(t), ball)
            norm_mu = np.sqrt(np.einsum("nk,nk->n", mu, mu))
        zt = float(zeta_fn(float(t)))
        lhs = norm_a + norm_mu
        small.update(zt - lhs + _slack(zt, lhs), float(t), ball, bound=zt)
    evidence["small_ball"] = {"min_margin": small.margin, "radius": rho_small}
    if small.margin < 0.0:
        evidence["witness"] = small.record
        return FAILS, evidence, notes + ["|a| + |mu| exceeds zeta inside the small ball"]

    # (b), (c): the two envelope inequalities on spheres of radius >= sqrt(2r).
    radii = plan.radii[plan.radii >= rho_small]
    if radii.size == 0:
        radii = rho_small * 2.0 ** np.arange(0, 11, dtype=float)
    bound1 = _Worst()
    bound2 = _Worst()
    for k, rho in enumerate(radii):
        pts = plan.sphere(model.d, float(rho), k)
        z = rho * rho / 2.0
        A_z = float(A_fn(z))
        B_z = float(B_fn(z))
        for t in times:
            A = model.eval_a(float(t), pts)
            axx = np.einsum("nij,ni,nj->n", A, pts, pts)
            tr = np.trace(A, axis1=1, axis2=2)
            rhs = tr + _mu_term(model, float(t), pts)
            if shift_i:
                xa = np.einsum("nij,ni->nj", A, pts)
                rhs = rhs + 2.0 * xa[:, shift_i - 1]
            zt = float(zeta_fn(float(t)))
            lhs1 = zt * A_z
            bound1.update(lhs1 - axx + _slack(lhs1, axx), float(t), pts, radius=float(rho))
            lhs2 = zt * axx * B_z
            bound2.update(lhs2 - rhs + _slack(lhs2, rhs), float(t), pts, radius=float(rho))
    evidence["upper_bound_A"] = {"min_margin": bound1.margin}
    evidence["trace_bound_B"] = {"min_margin": bound2.margin}
    if bound1.margin < 0.0:
        evidence["witness"] = bound1.record
        return FAILS, evidence, notes + ["zeta * A(rho^2/2) fails to dominate <a x, x>"]
    if bound2.margin < 0.0:
        evidence["witness"] = bound2.record
        return FAILS, evidence, notes + ["zeta * <a x, x> * B(rho^2/2) fails to dominate the trace term"]

    # (d) the nested tail must diverge.
    tail = khasminskii_nested(A_fn, B_fn, float(r), "to_infinity")
    evidence["nested_tail"] = tail
    if tail.verdict == "Diverges":
        if zeta_tail.verdict == "Inconclusive":
            notes.append("zeta integrability near 0 could not be classified")
            return INCONCLUSIVE, evidence, notes
        return HOLDS, evidence, notes
    if tail.verdict == "Converges":
        evidence["witness"] = {"integral": "nested_tail", "verdict": "Converges"}
        return FAILS, evidence, notes
    notes.append("nested tail classification is inconclusive")
    return INCONCLUSIVE, evidence, notes


def _fit_el1_envelopes(model, shift_i, plan):
    """Autonomous EL1 / E1 envelopes fitted from sphere sweeps.

    Uses the canonical choices: r anchored at max(1/2, |x0|^2/2),
    constant zeta equal to the small-ball sup of |a| + |mu|, A the sup
    profile of <a x, x> / zeta, and B the sup profile of the trace
    ratio.  The fitted profiles extend by their boundary power laws.
    """
    r = max(0.5, float(np.dot(model.x0, model.x0)) / 2.0)
    times = _probe_times(model, plan.time_points)
    rho_small = float(np.sqrt(2.0 * r))

    ball = plan.ball(model.d, rho_small, 0)
    zeta0 = 0.0
    for t in times:
        A = model.eval_a(float(t), ball)
        sym = (A + np.transpose(A, (0, 2, 1))) / 2.0
        norm_a = np.abs(np.linalg.eigvalsh(sym)).max(axis=1)
        norm_mu = np.zeros(ball.shape[0])
        if model.m < model.d:
            mu = model.eval_mu(float(t), ball)
            norm_mu = np.sqrt(np.einsum("nk,nk->n", mu, mu))
        zeta0 = max(zeta0, float(np.max(norm_a + norm_mu)))
    zeta0 = max(zeta0, 1e-12)

    radii = plan.radii[plan.radii >= rho_small]
    if radii.size < 8:
        radii = rho_small * np.geomspace(1.0, 2.0 ** 10, 32)
    a_sup = np.zeros(radii.size)
    b_sup = np.full(radii.size, 1e-12)
    for k, rho in enumerate(radii):
        pts = plan.sphere(model.d, float(rho), k)
        for t in times:
            A = model.eval_a(float(t), pts)
            axx = np.einsum("nij,ni,nj->n", A, pts, pts)
            rhs = np.trace(A, axis1=1, axis2=2) + _mu_term(model, float(t), pts)
            if shift_i:
                xa = np.einsum("nij,ni->nj", A, pts)
                rhs = rhs + 2.0 * xa[:, shift_i - 1]
            a_sup[k] = max(a_sup[k], float(np.max(axx)))
            pos = axx > 0
            if np.any(pos):
                b_sup[k] = max(b_sup[k], float(np.max(rhs[pos] / axx[pos])))
            if np.any(~pos) and np.any(rhs[~pos] > _slack(0.0, rhs[~pos])):
                # <a x, x> = 0 with a positive trace term: no B can work.
                return r, zeta0, None, None
    z_grid = radii * radii / 2.0
    A_fit = _ProfileFit(z_grid, np.maximum(a_sup / zeta0, 1e-300))
    B_fit = _ProfileFit(z_grid, np.maximum(b_sup / zeta0, 1e-12))
    return r, zeta0, A_fit, B_fit


def _check_el1_like(model, certs, shift_i, condition_id, plan):
    plan = plan or SamplePlan.default()
    certs = certs or CertificateBundle()

    sub = dict(certs.per_asset.get(shift_i, {})) if shift_i else {}
    r = sub.get("r", certs.r)
    zeta = sub.get("zeta", certs.zeta)
    A = sub.get("A", certs.A)
    B = sub.get("B", certs.B)

    supplied = [v is not None for v in (r, zeta, A, B)]
    if any(supplied) and not all(supplied):
        missing = [
            name
            for name, v in zip(("r", "zeta", "A", "B"), (r, zeta, A, B))
            if v is None
        ]
        raise MissingCertificate(condition_id, missing)

    if all(supplied):
        verdict, evidence, notes = _el1_sub_checks(
            model, float(r), _fn_of(zeta, "t"), _fn_of(A, "z"), _fn_of(B, "z"),
            shift_i, plan,
        )
        return ConditionReport(condition_id, verdict, "certificate", evidence, tuple(notes))

    # Autonomous fit: one concrete admissible envelope pair.  A divergent
    # nested tail for it certifies the condition at the probes; a
    # convergent one only rules out this canonical choice.
    fit = _fit_el1_envelopes(model, shift_i, plan)
    r, zeta0, A_fit, B_fit = fit
    notes = [
        "autonomous envelopes fitted from sphere sweeps "
        f"(r = {r:g}, constant zeta = {zeta0:g})"
    ]
    if A_fit is None:
        return ConditionReport(
            condition_id,
            INCONCLUSIVE,
            "evidence",
            {"detail": "degenerate <a x, x> with a positive trace term; no "
                       "envelope B exists along the fitted profile"},
            tuple(notes),
        )
    tail = khasminskii_nested(A_fit, B_fit, float(r), "to_infinity")
    evidence = {"nested_tail": tail, "r": r, "zeta": zeta0}
    if tail.verdict == "Diverges":
        return ConditionReport(condition_id, HOLDS, "evidence", evidence, tuple(notes))
    if tail.verdict == "Converges":
        evidence["witness"] = {"integral": "nested_tail", "verdict": "Converges"}
        notes.append("the fitted envelope fails; a cleverer certificate could still satisfy the condition")
        return ConditionReport(condition_id, FAILS, "evidence", evidence, tuple(notes))
    return ConditionReport(condition_id, INCONCLUSIVE, "evidence", evidence, tuple(notes))


def check_EL1(model: MarketModel, certs: CertificateBundle | None = None, *,
              plan: SamplePlan | None = None) -> ConditionReport:
    """Envelope condition for the driftless construction: small-ball
    boundedness of |a| + |mu|, the sphere inequalities against zeta * A
    and zeta * <a x, x> * B, and a divergent nested tail from r."""
    return _check_el1_like(model, certs, 0, "EL1", plan)


def check_E1(model: MarketModel, certs: CertificateBundle | None = None,
             i: int = 1, *, plan: SamplePlan | None = None) -> ConditionReport:
    """Per-asset variant of check_EL1 with the trace term shifted by
    2 <x, a e_i>.  Certificates may come from certs.per_asset[i], falling
    back to the top-level (r, zeta, A, B)."""
    if not 1 <= int(i) <= model.m:
        raise DimensionMismatch(f"asset index {i} out of range 1..{model.m}")
    rep = _check_el1_like(model, certs, int(i), "E1", plan)
    evidence = dict(rep.evidence)
    evidence["asset"] = int(i)
    return ConditionReport(rep.condition_id, rep.verdict, rep.mode, evidence, rep.notes)


# ---------------------------------------------------------------------------
# Linear-growth conditions


def _check_linear_growth(model, certs, shifts, condition_id, plan):
    plan = plan or SamplePlan.default()
    sups, bests = _growth_sweep(model, plan, shifts)

    if certs is not None and certs.zeta is not None:
        zeta_fn = _fn_of(certs.zeta, "t")
        # Re-sweep against the user's zeta pointwise: the fitted sups
        # above are per-radius and would be loose for time-varying zeta.
        times = _probe_times(model, plan.time_points)
        worst = _Worst()
        for k, rho in enumerate(plan.radii):
            pts = plan.sphere(model.d, float(rho), k)
            denom = 1.0 + rho * rho
            for t in times:
                A = model.eval_a(float(t), pts)
                base = np.trace(A, axis1=1, axis2=2) + _mu_term(model, float(t), pts)
                xa = np.einsum("nij,ni->nj", A, pts)
                zt = float(zeta_fn(float(t)))
                for i in shifts:
                    vals = base if i == 0 else base + 2.0 * xa[:, i - 1]
                    bound = zt * denom
                    worst.update(bound - vals + _slack(bound, vals), float(t), pts,
                                 radius=float(rho), asset=i)
        zeta_tail = classify_tail(zeta_fn, model.T, "to_zero")
        evidence = {
            "min_margin": worst.margin,
            "zeta_integral": zeta_tail,
        }
        if worst.margin < 0.0:
            evidence["witness"] = worst.record
            return ConditionReport(condition_id, FAILS, "certificate", evidence,
                                   ("the trace term exceeds zeta(t) (1 + |x|^2) at a probe",))
        if zeta_tail.verdict == "Diverges":
            evidence["witness"] = {"certificate": "zeta",
                                   "detail": "integral over (0, T] diverges"}
            return ConditionReport(condition_id, FAILS, "certificate", evidence, ())
        if zeta_tail.verdict == "Inconclusive":
            return ConditionReport(condition_id, INCONCLUSIVE, "certificate", evidence,
                                   ("zeta integrability near 0 could not be classified",))
        return ConditionReport(condition_id, HOLDS, "certificate", evidence, ())

    # Evidence mode: the ratio profile must stay bounded as the radius
    # grows.  Slope and growth measured on the upper radius range.
    per_asset = {}
    verdicts = []
    witness = None
    for i in shifts:
        slope, growth = _fit_growth(plan.radii, sups[i])
        v = _growth_verdict(slope, growth)
        verdicts.append(v)
        rec = {
            "slope": slope,
            "growth": growth,
            "max_ratio": bests[i].value,
            "verdict": v,
        }
        if i:
            per_asset[str(i)] = rec
        else:
            per_asset["trace"] = rec
        if v == FAILS and witness is None:
            witness = bests[i].record
    evidence = {"profiles": per_asset}
    notes = []
    time_names = set()
    for row in model.a:
        for e in row:
            time_names |= dsl.free_variables(e)
    if "t" in time_names:
        # Time-varying diffusion: classify the fitted zeta(t) near 0.
        cloud = plan.cloud(model)
        xa_cols = shifts

        def zeta_fit(t_val):
            t_arr = np.atleast_1d(np.asarray(t_val, dtype=float))
            out = np.empty(t_arr.size)
            denom = 1.0 + np.einsum("nd,nd->n", cloud, cloud)
            for j, tv in enumerate(t_arr):
                A = model.eval_a(float(tv), cloud)
                base = np.trace(A, axis1=1, axis2=2) + _mu_term(model, float(tv), cloud)
                xa = np.einsum("nij,ni->nj", A, cloud)
                m = -np.inf
                for i in xa_cols:
                    vals = base if i == 0 else base + 2.0 * xa[:, i - 1]
                    m = max(m, float(np.max(vals / denom)))
                out[j] = m
            return out if np.asarray(t_val).ndim else float(out[0])

        zeta_tail = classify_tail(zeta_fit, model.T, "to_zero")
        evidence["zeta_integral"] = zeta_tail
        if zeta_tail.verdict == "Diverges":
            evidence["witness"] = {"detail": "fitted zeta(t) is not integrable near 0"}
            return ConditionReport(condition_id, FAILS, "evidence", evidence, tuple(notes))
        if zeta_tail.verdict == "Inconclusive":
            notes.append("fitted zeta(t) integrability near 0 could not be classified")
            verdicts.append(INCONCLUSIVE)

    if any(v == FAILS for v in verdicts):
        evidence["witness"] = witness
        return ConditionReport(
            condition_id, FAILS, "evidence", evidence,
            ("the ratio against (1 + |x|^2) keeps growing along the radius grid",),
        )
    if all(v == HOLDS for v in verdicts):
        return ConditionReport(condition_id, HOLDS, "evidence", evidence, tuple(notes))
    notes.append("ratio growth is borderline at the sampled radii")
    return ConditionReport(condition_id, INCONCLUSIVE, "evidence", evidence, tuple(notes))


def check_EL3(model: MarketModel, certs: CertificateBundle | None = None, *,
              plan: SamplePlan | None = None) -> ConditionReport:
    """Linear-growth condition: trace a + 2 <x, (0, mu)> <= zeta(t) (1 + |x|^2).

    Certificate mode verifies a user zeta pointwise; evidence mode fits
    the ratio profile and tests whether it stays bounded in the radius.
    """
    return _check_linear_growth(model, certs, [0], "EL3", plan)


def check_E3(model: MarketModel, certs: CertificateBundle | None = None, *,
             plan: SamplePlan | None = None) -> ConditionReport:
    """Per-asset linear-growth condition with the shift 2 <x, a e_i>,
    required for every traded asset i = 1..m simultaneously."""
    return _check_linear_growth(model, certs, list(range(1, model.m + 1)), "E3", plan)


def check_growth_cap(model: MarketModel, certs: CertificateBundle | None = None, *,
                     plan: SamplePlan | None = None) -> ConditionReport:
    """Diagonal cap: max_i <a e_i, e_i> <= zeta(t) a_hat(t, x) with a_hat
    locally bounded and zeta integrable.

    Without a certificate the cap is taken to be the diagonal maximum
    itself (zeta = 1), which is locally bounded exactly when the probes
    evaluate finitely; that is the evidence-mode content.
    """
    plan = plan or SamplePlan.default()
    times = _probe_times(model, plan.time_points)
    cloud = plan.cloud(model)
    idx = np.arange(model.m)

    if certs is not None and certs.a_hat is not None:
        a_hat = certs.a_hat
        dsl.bind_state_expr(a_hat, model.d)
        zeta_fn = _fn_of(certs.zeta, "t") if certs.zeta is not None else (lambda t: 1.0)
        worst = _Worst()
        for t in times:
            A = model.eval_a(float(t), cloud)
            cap = np.max(A[:, idx, idx], axis=1)
            hat = dsl.eval_expr(a_hat, float(t), cloud)
            bound = float(zeta_fn(float(t))) * hat
            worst.update(bound - cap + _slack(bound, cap), float(t), cloud)
        evidence = {"min_margin": worst.margin}
        if certs.zeta is not None:
            zeta_tail = classify_tail(zeta_fn, model.T, "to_zero")
            evidence["zeta_integral"] = zeta_tail
            if zeta_tail.verdict != "Converges":
                verdict = FAILS if zeta_tail.verdict == "Diverges" else INCONCLUSIVE
                if verdict == FAILS:
                    evidence["witness"] = {"certificate": "zeta",
                                           "detail": "integral over (0, T] diverges"}
                return ConditionReport("growth_cap", verdict, "certificate", evidence, ())
        if worst.margin < 0.0:
            evidence["witness"] = worst.record
            return ConditionReport("growth_cap", FAILS, "certificate", evidence,
                                   ("the diagonal exceeds zeta(t) a_hat at a probe",))
        return ConditionReport("growth_cap", HOLDS, "certificate", evidence, ())

    cap_max = 0.0
    for t in times:
        A = model.eval_a(float(t), cloud)
        cap = np.max(A[:, idx, idx], axis=1)
        cap_max = max(cap_max, float(np.max(np.abs(cap))))
    return ConditionReport(
        "growth_cap",
        HOLDS,
        "evidence",
        {"cap_probe_max": cap_max},
        ("cap taken as the diagonal maximum itself, finite at all probes",),
    )


# ---------------------------------------------------------------------------
# Driftless growth condition (running-max route)


def check_mckean(model: MarketModel, certs: CertificateBundle | None = None, *,
                 plan: SamplePlan | None = None) -> ConditionReport:
    """Driftless slow-growth condition on gamma(z) = sup over the ball of
    the top eigenvalue of a.

    Requires mu identically zero.  Branch 1 watches n^2 / gamma(n) for
    repeated doublings of its running max that persist to the end of the
    grid.  Branch 2 classifies the tail of z / xi(z) for a certified
    envelope xi >= gamma, or for the fitted power-law extension of the
    sampled gamma when no certificate is given.
    """
    plan = plan or SamplePlan.default()
    evidence = {}
    notes = []

    if model.m < model.d and not all(dsl.is_zero(e) for e in model.mu):
        times = _probe_times(model, plan.time_points)
        cloud = plan.cloud(model)
        worst = _Best()
        for t in times:
            mu = model.eval_mu(float(t), cloud)
            mags = np.sqrt(np.einsum("nk,nk->n", mu, mu))
            worst.update(mags, float(t), cloud)
        if worst.value > 1e-12:
            evidence["witness"] = worst.record
            return ConditionReport(
                "mckean", FAILS, "evidence", evidence,
                ("the condition requires mu identically zero",),
            )
        notes.append("mu is symbolically nonzero but vanishes at all probes")

    prof = gamma_profile(model, z_grid=plan.radii, samples_per_ball=plan.samples_per_sphere,
                         seed=plan.seed, time_points=plan.time_points)
    z, gamma = prof.z, prof.values
    z0 = float(certs.z0) if certs is not None and certs.z0 is not None else max(
        float(np.sqrt(np.dot(model.x0, model.x0))), float(z[0])
    )
    tail_mask = z >= z0
    if not np.any(tail_mask):
        tail_mask = np.ones(z.size, dtype=bool)
    if np.any(gamma[tail_mask] <= 0.0):
        j = int(np.argmax((gamma <= 0.0) & tail_mask))
        evidence["witness"] = {"z": float(z[j]), "gamma": float(gamma[j])}
        return ConditionReport(
            "mckean", INCONCLUSIVE, "evidence", evidence,
            ("gamma vanishes on the probe grid; the condition needs "
             "0 < gamma(z) < infinity beyond z0",),
        )
    evidence["z0"] = z0

    # Branch 1: repeated doublings of the running max of z^2 / gamma(z).
    v = z[tail_mask] ** 2 / gamma[tail_mask]
    ref = None
    events = []
    for k, val in enumerate(v):
        if val <= 0.0 or not np.isfinite(val):
            continue
        if ref is None:
            ref = val
            continue
        if val >= 2.0 * ref:
            events.append(k)
            ref = val
    last_quarter = 3 * (v.size - 1) // 4
    branch1 = len(events) >= 3 and bool(events and events[-1] >= last_quarter)
    evidence["running_max"] = {
        "doublings": len(events),
        "last_event_index": events[-1] if events else None,
        "grid_points": int(v.size),
    }
    if branch1:
        return ConditionReport("mckean", HOLDS, "evidence", evidence,
                               tuple(notes + ["n^2 / gamma(n) keeps doubling through the grid"]))

    # Branch 2: tail of z / xi(z).
    if certs is not None and certs.xi is not None:
        xi_fn = _fn_of(certs.xi, "z")
        xi_vals = np.asarray(xi_fn(z[tail_mask]), dtype=float)
        margins = xi_vals - gamma[tail_mask]
        j = int(np.argmin(margins))
        evidence["xi_vs_gamma_min_margin"] = float(margins[j])
        if margins[j] < -_slack(xi_vals[j], gamma[tail_mask][j]):
            evidence["witness"] = {"z": float(z[tail_mask][j]),
                                   "xi": float(xi_vals[j]),
                                   "gamma": float(gamma[tail_mask][j])}
            return ConditionReport("mckean", FAILS, "certificate", evidence,
                                   ("xi fails to dominate the sampled gamma",))
        tail = classify_tail(lambda s: s / xi_fn(s), z0, "to_infinity")
        evidence["xi_tail"] = tail
        if tail.verdict == "Diverges":
            return ConditionReport("mckean", HOLDS, "certificate", evidence, tuple(notes))
        if tail.verdict == "Converges":
            evidence["witness"] = {"integral": "xi_tail", "verdict": "Converges"}
            return ConditionReport("mckean", FAILS, "certificate", evidence, tuple(notes))
        return ConditionReport("mckean", INCONCLUSIVE, "certificate", evidence, tuple(notes))

    gamma_fit = _ProfileFit(z[tail_mask], gamma[tail_mask])
    tail = classify_tail(lambda s: s / gamma_fit(s), z0, "to_infinity")
    evidence["gamma_tail"] = tail
    notes.append("tail classified on the power-law extension of the sampled gamma")
    if tail.verdict == "Diverges":
        return ConditionReport("mckean", HOLDS, "evidence", evidence, tuple(notes))
    if tail.verdict == "Converges":
        evidence["witness"] = {"integral": "gamma_tail", "verdict": "Converges"}
        return ConditionReport("mckean", FAILS, "evidence", evidence, tuple(notes))
    return ConditionReport("mckean", INCONCLUSIVE, "evidence", evidence, tuple(notes))


# ---------------------------------------------------------------------------
# Uniqueness conditions


def check_U1(model: MarketModel, *, seed: int = 2024) -> ConditionReport:
    """Pointwise ellipticity plus time-uniform continuity of a.

    The smallest eigenvalue must be positive at every probe, and the
    continuity defect must keep halving (ratio <= 0.6 within a relative
    floor) over the last three sampled neighbor scales.
    """
    prof = ellipticity_profile(model, seed=seed)
    floors = 1e-12 * (1.0 + prof.a_norm)
    gaps = prof.min_eig - floors
    j = int(np.argmin(gaps))
    evidence = {"min_eigenvalue": float(prof.min_eig[j])}
    if gaps[j] <= 0.0:
        evidence["witness"] = _point(None, prof.points[j],
                                     min_eigenvalue=float(prof.min_eig[j]))
        return ConditionReport(
            "U1", FAILS, "evidence", evidence,
            ("the diffusion is not positive definite at the witness probe",),
        )

    defects = prof.continuity_defects
    atol = 1e-9 * (1.0 + prof.a_norm)
    for i in range(defects.shape[0]):
        row = defects[i]
        ok = True
        for k in range(defects.shape[1] - 4, defects.shape[1] - 1):
            if row[k + 1] <= atol[i]:
                continue
            if row[k + 1] > 0.6 * row[k] + atol[i]:
                ok = False
                break
        if not ok:
            evidence["witness"] = _point(None, prof.points[i],
                                         defects=row, scales=prof.defect_scales)
            return ConditionReport(
                "U1", FAILS, "evidence", evidence,
                ("the continuity defect stops shrinking at the witness probe",),
            )
    evidence["max_final_defect"] = float(np.max(defects[:, -1])) if defects.size else 0.0
    return ConditionReport("U1", HOLDS, "evidence", evidence, ())


def _root_stability(model: MarketModel, kind, *, seed: int, time_points: int = 9):
    """Pair-count stability of the modulus of a^{1/2} over centered balls."""
    times = _probe_times(model, time_points)
    per_ball = {}
    for n in _MODULUS_BALLS:
        vals_max = None
        for t in times:
            def root_field(X, t=float(t)):
                R, _bad = sqrt_psd_batch(model.eval_a(t, np.atleast_2d(X)))
                return R

            vals, stable, est = _stability_sweep(root_field, kind, float(n),
                                                 model.d, seed)
            if vals_max is None or vals[-1] > vals_max[-1]:
                vals_max = vals
            if not stable:
                return n, float(t), vals, est, per_ball
        per_ball[f"{n:g}"] = {"estimates": vals_max,
                              "value": vals_max[-1]}
    return None, None, None, None, per_ball


def check_U2(model: MarketModel, *, seed: int = 2024) -> ConditionReport:
    """Local Lipschitz regularity of the PSD root of a, probed by
    modulus estimates whose pair counts double; a root that is not
    locally Lipschitz keeps producing larger estimates as the pairs
    approach its rough set."""
    n_bad, t_bad, vals, est, per_ball = _root_stability(model, "Lipschitz", seed=seed)
    if n_bad is not None:
        return ConditionReport(
            "U2", FAILS, "evidence",
            {
                "ball": n_bad,
                "t": t_bad,
                "estimates": vals,
                "witness": {
                    "x": est.x.tolist(),
                    "y": est.y.tolist(),
                    "ratio": est.value,
                },
            },
            ("the Lipschitz estimate of a^{1/2} grows with the pair count",),
        )
    return ConditionReport(
        "U2", HOLDS, "evidence",
        {"per_ball": per_ball},
        ("squared root increments stay quadratic in |x - y| at all probes",),
    )


def check_holder_1d(model: MarketModel, *, seed: int = 2024) -> ConditionReport:
    """One-dimensional Hoelder-1/2 regularity of a^{1/2}, which bounds
    squared root increments by a constant multiple of |x - y| and so
    certifies at-most-one equivalent local martingale density."""
    if model.d != 1 or model.m != 1:
        raise DimensionMismatch("the 1-D Hoelder uniqueness route needs d = m = 1")
    n_bad, t_bad, vals, est, per_ball = _root_stability(
        model, ("Hoelder", 0.5), seed=seed
    )
    if n_bad is not None:
        return ConditionReport(
            "holder_1d", FAILS, "evidence",
            {
                "ball": n_bad,
                "t": t_bad,
                "estimates": vals,
                "witness": {
                    "x": est.x.tolist(),
                    "y": est.y.tolist(),
                    "ratio": est.value,
                },
            },
            ("the Hoelder-1/2 estimate of a^{1/2} grows with the pair count",),
        )
    peak = max((rec["value"] for rec in per_ball.values()), default=0.0)
    return ConditionReport(
        "holder_1d", HOLDS, "evidence",
        {"per_ball": per_ball, "h_constant": peak * peak},
        (f"h_n(z) = K z with K = {peak * peak:g}; the reciprocal integral "
         "of z diverges at 0",),
    )


# ---------------------------------------------------------------------------
# Non-existence conditions


def _moduli_sub_check(A_fn, B_fn, moduli, seed):
    """Regularity of A^{1/2} (Hoelder-1/2) and A*B (Lipschitz) on the
    interval family [1/n, n], either declared or probed for stability."""
    out = {}
    for name, fn, kind in (
        ("A_sqrt", lambda s: np.sqrt(np.maximum(A_fn(s), 0.0)), ("Hoelder", 0.5)),
        ("AB", lambda s: A_fn(s) * B_fn(s), "Lipschitz"),
    ):
        declared = moduli.get(name)
        if declared is not None:
            if declared == "linear":
                out[name] = {"declared": "linear"}
                continue
            if declared == "sqrt":
                return name, {"declared": "sqrt",
                              "detail": "the reciprocal integral of sqrt(z) "
                                        "converges at 0, so sqrt is not an "
                                        "admissible modulus"}, out
            mod_fn = _fn_of(declared, "z")
            probe = np.geomspace(1e-8, 1.0, 64)
            bad = _positivity_probe(mod_fn, probe, name)
            if bad is not None:
                return name, bad, out
            rec = classify_tail(lambda s: 1.0 / mod_fn(s), 1.0, "to_zero")
            if rec.verdict != "Diverges":
                return name, {"declared": "expr", "reciprocal_integral": rec.to_dict(),
                              "detail": "the declared modulus must have a "
                                        "divergent reciprocal integral at 0"}, out
            out[name] = {"declared": "expr", "reciprocal_integral": rec}
            continue
        for n in (2.0, 4.0, 8.0):
            center = (n + 1.0 / n) / 2.0
            half = (n - 1.0 / n) / 2.0
            vals, stable, est = _stability_sweep(
                _interval_field(fn, center), kind, half, 1, seed
            )
            if not stable:
                return name, {
                    "interval": [1.0 / n, n],
                    "estimates": vals,
                    "witness": {"x": est.x.tolist(), "y": est.y.tolist(),
                                "ratio": est.value},
                }, out
        out[name] = {"probed": "stable"}
    return None, None, out


def _nonexistence_sub_checks(model, certs, shift_assets, condition_id, plan, seed):
    """Shared body of the non-existence checkers.

    shift_assets is empty for the plain trace bound, or the list of
    candidate assets i for the shifted bound, of which one must pass.
    """
    if model.d != model.m:
        raise DimensionMismatch(
            "the non-existence conditions assume d = m (no untraded coordinates)"
        )
    if certs is None or certs.A is None or certs.B is None:
        missing = [k for k in ("A", "B")
                   if certs is None or getattr(certs, k) is None]
        raise MissingCertificate(condition_id, missing)
    plan = plan or SamplePlan.default()
    A_fn = _fn_of(certs.A, "z")
    B_fn = _fn_of(certs.B, "z")
    anchor = max(0.5, float(np.dot(model.x0, model.x0)) / 2.0)
    evidence = {"anchor": anchor}
    notes = []

    z_grid = anchor * 2.0 ** np.arange(-40, 41, dtype=float)
    for name, fn in (("A", A_fn), ("B", B_fn)):
        bad = _positivity_probe(fn, z_grid, name)
        if bad is not None:
            evidence["witness"] = bad
            return FAILS, evidence, notes + [f"{name} must be positive on (0, infinity)"]

    times = _probe_times(model, plan.time_points)
    lower = _Worst()
    shifted = {i: _Worst() for i in shift_assets} if shift_assets else {0: _Worst()}
    for k, rho in enumerate(plan.radii):
        pts = plan.sphere(model.d, float(rho), k)
        z = rho * rho / 2.0
        A_z = float(A_fn(z))
        B_z = float(B_fn(z))
        for t in times:
            A = model.eval_a(float(t), pts)
            axx = np.einsum("nij,ni,nj->n", A, pts, pts)
            tr = np.trace(A, axis1=1, axis2=2)
            lower.update(axx - A_z + _slack(axx, A_z), float(t), pts, radius=float(rho))
            if shift_assets:
                xa = np.einsum("nij,ni->nj", A, pts)
                for i in shift_assets:
                    rhs = tr + 2.0 * xa[:, i - 1]
                    shifted[i].update(rhs - B_z * axx + _slack(rhs, B_z * axx),
                                      float(t), pts, radius=float(rho))
            else:
                shifted[0].update(tr - B_z * axx + _slack(tr, B_z * axx),
                                  float(t), pts, radius=float(rho))

    evidence["lower_bound_A"] = {"min_margin": lower.margin}
    if lower.margin < 0.0:
        evidence["witness"] = lower.record
        return FAILS, evidence, notes + ["A(rho^2/2) fails to stay below <a x, x>"]

    passing = [i for i, w in sorted(shifted.items()) if w.margin >= 0.0]
    evidence["trace_bound"] = {
        str(i): {"min_margin": w.margin} for i, w in sorted(shifted.items())
    }
    if not passing:
        first = min(shifted)
        evidence["witness"] = shifted[first].record
        label = ("<a x, x> B exceeds the shifted trace term for every asset"
                 if shift_assets else "<a x, x> B exceeds the trace at a probe")
        return FAILS, evidence, notes + [label]
    if shift_assets:
        evidence["asset"] = int(passing[0])

    tail_inf = khasminskii_nested(A_fn, B_fn, anchor, "to_infinity")
    evidence["tail_to_infinity"] = tail_inf
    if tail_inf.verdict == "Diverges":
        evidence["witness"] = {"integral": "tail_to_infinity", "verdict": "Diverges"}
        return FAILS, evidence, notes + ["the nested tail diverges, so the comparison process does not explode"]
    if tail_inf.verdict == "Inconclusive":
        return INCONCLUSIVE, evidence, notes + ["nested tail classification is inconclusive"]

    tail_zero = khasminskii_nested(A_fn, B_fn, anchor, "to_zero")
    evidence["tail_to_zero"] = tail_zero
    if tail_zero.verdict == "Converges":
        evidence["witness"] = {"integral": "tail_to_zero", "verdict": "Converges"}
        return FAILS, evidence, notes + ["the inner tail converges, so the comparison process can reach 0"]
    if tail_zero.verdict == "Inconclusive":
        return INCONCLUSIVE, evidence, notes + ["inner tail classification is inconclusive"]

    bad_name, bad_rec, moduli_rec = _moduli_sub_check(A_fn, B_fn, certs.moduli, seed)
    evidence["moduli"] = moduli_rec
    if bad_name is not None:
        evidence["witness"] = bad_rec
        return FAILS, evidence, notes + [f"the {bad_name} modulus check failed"]
    return HOLDS, evidence, notes


def check_NL1(model: MarketModel, certs: CertificateBundle | None = None, *,
              plan: SamplePlan | None = None, seed: int = 2024) -> ConditionReport:
    """Non-existence envelope condition: A below <a x, x>, B below the
    trace ratio, a convergent nested tail at infinity, a divergent inner
    tail at 0, and regularity of A^{1/2} and A * B."""
    verdict, evidence, notes = _nonexistence_sub_checks(
        model, certs, [], "NL1", plan, seed
    )
    return ConditionReport("NL1", verdict, "certificate", evidence, tuple(notes))


def check_N1(model: MarketModel, certs: CertificateBundle | None = None,
             i: int | None = None, *, plan: SamplePlan | None = None,
             seed: int = 2024) -> ConditionReport:
    """Shifted variant of check_NL1 with trace a + 2 <x, a e_i> on the
    right of the B bound; it suffices that one asset index passes, so
    i=None tries all of them."""
    if i is not None and not 1 <= int(i) <= model.m:
        raise DimensionMismatch(f"asset index {i} out of range 1..{model.m}")
    assets = [int(i)] if i is not None else list(range(1, model.m + 1))
    verdict, evidence, notes = _nonexistence_sub_checks(
        model, certs, assets, "N1", plan, seed
    )
    return ConditionReport("N1", verdict, "certificate", evidence, tuple(notes))


# ---------------------------------------------------------------------------
# Scalar-diffusion (radial) markets


def radial_shape(model: MarketModel, *, plan: SamplePlan | None = None,
                 tol: float = 1e-9) -> dict | None:
    """Probe whether the market is a time-homogeneous scalar diffusion:
    d = m, a = f * Id with f positive at all probes, b finite at all
    probes.  Returns the probe summary with the diagonal profile
    expression, or None when the shape does not match.
    """
    if model.d != model.m:
        return None
    names = set()
    for row in model.a:
        for e in row:
            names |= dsl.free_variables(e)
    if "t" in names:
        return None
    plan = plan or SamplePlan.default()
    pts = plan.cloud(model)
    symbolic = model.a_structure() == "scalar"
    try:
        A = model.eval_a(0.0, pts)
        b_vals = model.eval_b(0.0, pts)
    except EvalError:
        return None
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    diag = A[:, np.arange(model.d), np.arange(model.d)]
    if not symbolic:
        off = A.copy()
        off[:, np.arange(model.d), np.arange(model.d)] = 0.0
        if float(np.max(np.abs(off))) > tol * (1.0 + scale):
            return None
        if float(np.max(np.abs(diag - diag[:, :1]))) > tol * (1.0 + scale):
            return None
    f_min = float(np.min(diag[:, 0]))
    if f_min <= 0.0:
        return None
    if not np.all(np.isfinite(b_vals)):
        return None
    return {
        "f": model.a[0][0],
        "f_min": f_min,
        "symbolic_scalar": symbolic,
        "b_probe_max": float(np.max(np.abs(b_vals))) if b_vals.size else 0.0,
    }


def check_radial_market(model: MarketModel, certs: CertificateBundle | None = None, *,
                        plan: SamplePlan | None = None, seed: int = 2024):
    """Both sides of the scalar-diffusion growth dichotomy.

    Returns (existence_report, nonexistence_report).  The existence side
    needs a divergent integral of rho / xi(rho) for an envelope xi above
    the ball sup of f; the non-existence side needs a convergent
    integral of rho / alpha(rho) for a locally Lipschitz floor alpha
    below f.  Both anchor at radius 1.
    """
    plan = plan or SamplePlan.default()
    shape = radial_shape(model, plan=plan)
    if shape is None:
        note = ("the market is not a time-homogeneous scalar diffusion "
                "(a = f * Id with f positive, d = m)",)
        rep = lambda cid: ConditionReport(cid, INCONCLUSIVE, "evidence", {}, note)
        return rep("radial_existence"), rep("radial_nonexistence")

    prof = gamma_profile(model, z_grid=plan.radii,
                         samples_per_ball=plan.samples_per_sphere,
                         seed=plan.seed, time_points=plan.time_points)
    z, ball_sup = prof.z, prof.values

    # Existence side.
    if certs is not None and certs.xi is not None:
        xi_fn = _fn_of(certs.xi, "z")
        mask = z >= 1.0
        if not np.any(mask):
            mask = np.ones(z.size, dtype=bool)
        xi_vals = np.asarray(xi_fn(z[mask]), dtype=float)
        margins = xi_vals - ball_sup[mask]
        j = int(np.argmin(margins))
        evidence = {"xi_vs_sup_min_margin": float(margins[j])}
        if margins[j] < -_slack(xi_vals[j], ball_sup[mask][j]):
            evidence["witness"] = {"z": float(z[mask][j]), "xi": float(xi_vals[j]),
                                   "ball_sup": float(ball_sup[mask][j])}
            exist = ConditionReport("radial_existence", FAILS, "certificate", evidence,
                                    ("xi fails to dominate the ball sup of f",))
        else:
            tail = classify_tail(lambda s: s / xi_fn(s), 1.0, "to_infinity")
            evidence["tail"] = tail
            if tail.verdict == "Diverges":
                exist = ConditionReport("radial_existence", HOLDS, "certificate", evidence, ())
            elif tail.verdict == "Converges":
                evidence["witness"] = {"integral": "tail", "verdict": "Converges"}
                exist = ConditionReport("radial_existence", FAILS, "certificate", evidence, ())
            else:
                exist = ConditionReport("radial_existence", INCONCLUSIVE, "certificate",
                                        evidence, ())
    else:
        fit = _ProfileFit(z, ball_sup)
        tail = classify_tail(lambda s: s / fit(s), 1.0, "to_infinity")
        evidence = {"tail": tail}
        note = ("tail classified on the power-law extension of the sampled ball sup",)
        if tail.verdict == "Diverges":
            exist = ConditionReport("radial_existence", HOLDS, "evidence", evidence, note)
        elif tail.verdict == "Converges":
            evidence["witness"] = {"integral": "tail", "verdict": "Converges"}
            exist = ConditionReport("radial_existence", FAILS, "evidence", evidence, note)
        else:
            exist = ConditionReport("radial_existence", INCONCLUSIVE, "evidence",
                                    evidence, note)

    # Non-existence side: needs a floor alpha below f on spheres.
    times = _probe_times(model, plan.time_points)
    sphere_inf = np.full(plan.radii.size, np.inf)
    for k, rho in enumerate(plan.radii):
        pts = plan.sphere(model.d, float(rho), k)
        for t in times:
            A = model.eval_a(float(t), pts)
            sphere_inf[k] = min(sphere_inf[k], float(np.min(A[:, 0, 0])))
    if certs is not None and certs.alpha is not None:
        alpha_fn = _fn_of(certs.alpha, "rho")
        mask = plan.radii >= 1.0
        if not np.any(mask):
            mask = np.ones(plan.radii.size, dtype=bool)
        alpha_vals = np.asarray(alpha_fn(plan.radii[mask]), dtype=float)
        margins = sphere_inf[mask] - alpha_vals
        j = int(np.argmin(margins))
        evidence = {"f_vs_alpha_min_margin": float(margins[j])}
        if margins[j] < -_slack(alpha_vals[j], sphere_inf[mask][j]):
            evidence["witness"] = {"rho": float(plan.radii[mask][j]),
                                   "alpha": float(alpha_vals[j]),
                                   "sphere_inf": float(sphere_inf[mask][j])}
            nonexist = ConditionReport("radial_nonexistence", FAILS, "certificate",
                                       evidence, ("alpha fails to stay below f",))
            return exist, nonexist
        for n in (2.0, 4.0, 8.0):
            center = (n + 1.0) / 2.0
            half = (n - 1.0) / 2.0
            vals, stable, est = _stability_sweep(
                _interval_field(alpha_fn, center), "Lipschitz", half, 1, seed
            )
            if not stable:
                evidence["witness"] = {"interval": [1.0, n], "estimates": vals,
                                       "x": est.x.tolist(), "y": est.y.tolist()}
                nonexist = ConditionReport(
                    "radial_nonexistence", FAILS, "certificate", evidence,
                    ("alpha must be locally Lipschitz on [1, infinity)",),
                )
                return exist, nonexist
        tail = classify_tail(lambda s: s / alpha_fn(s), 1.0, "to_infinity")
        evidence["tail"] = tail
        if tail.verdict == "Converges":
            nonexist = ConditionReport("radial_nonexistence", HOLDS, "certificate",
                                       evidence, ())
        elif tail.verdict == "Diverges":
            evidence["witness"] = {"integral": "tail", "verdict": "Diverges"}
            nonexist = ConditionReport("radial_nonexistence", FAILS, "certificate",
                                       evidence, ())
        else:
            nonexist = ConditionReport("radial_nonexistence", INCONCLUSIVE,
                                       "certificate", evidence, ())
    else:
        fit = _ProfileFit(plan.radii, np.maximum(sphere_inf, 1e-300))
        tail = classify_tail(lambda s: s / fit(s), 1.0, "to_infinity")
        evidence = {"tail": tail}
        note = ("tail classified on the power-law extension of the sampled "
                "sphere inf; no Lipschitz floor was certified",)
        if tail.verdict == "Converges":
            nonexist = ConditionReport("radial_nonexistence", HOLDS, "evidence",
                                       evidence, note)
        elif tail.verdict == "Diverges":
            evidence["witness"] = {"integral": "tail", "verdict": "Diverges"}
            nonexist = ConditionReport("radial_nonexistence", FAILS, "evidence",
                                       evidence, note)
        else:
            nonexist = ConditionReport("radial_nonexistence", INCONCLUSIVE,
                                       "evidence", evidence, note)
    return exist, nonexist


def check_1d_emm(f) -> ConditionReport:
    """One-dimensional scalar-diffusion martingale dichotomy: the
    reciprocal integral of f over [1, infinity) diverges exactly when a
    true martingale measure exists (and is then unique)."""
    f_fn = _as_profile_fn(f)
    probe = np.geomspace(1.0, 2.0 ** 41, 256)
    bad = _positivity_probe(f_fn, probe, "f")
    if bad is not None:
        return ConditionReport(
            "1d_emm", INCONCLUSIVE, "certificate", {"witness": bad},
            ("f must be positive and finite on [1, infinity)",),
        )
    tail = classify_tail(lambda y: 1.0 / f_fn(y), 1.0, "to_infinity")
    evidence = {"reciprocal_tail": tail}
    if tail.verdict == "Diverges":
        return ConditionReport("1d_emm", HOLDS, "certificate", evidence, ())
    if tail.verdict == "Converges":
        evidence["witness"] = {"integral": "reciprocal_tail", "verdict": "Converges"}
        return ConditionReport("1d_emm", FAILS, "certificate", evidence, ())
    return ConditionReport("1d_emm", INCONCLUSIVE, "certificate", evidence, ())


# ---------------------------------------------------------------------------
# Scalar SDE on (0, infinity), price coordinates


def _interior_singularities(g_fn, grid):
    """Locate interior blowups of g on the grid; returns (centers, cap).

    Clusters of non-finite or huge values are reduced to their midpoint.
    Clusters touching the grid ends are dropped: endpoint growth does
    not threaten local integrability on the open half-line.
    """
    vals = np.empty(grid.size)
    ok = np.ones(grid.size, dtype=bool)
    for j, xv in enumerate(grid):
        try:
            vals[j] = float(g_fn(float(xv)))
        except (EvalError, ZeroDivisionError, OverflowError):
            vals[j] = np.nan
            ok[j] = False
    finite = vals[ok & np.isfinite(vals)]
    if finite.size == 0:
        return [], np.inf
    cap = 1e10 * (1.0 + float(np.median(np.abs(finite))))
    bad = ~ok | ~np.isfinite(vals) | (np.abs(vals) > cap)
    centers = []
    j = 0
    while j < grid.size:
        if not bad[j]:
            j += 1
            continue
        k = j
        while k + 1 < grid.size and bad[k + 1]:
            k += 1
        if j > 0 and k < grid.size - 1:
            centers.append(float(np.sqrt(grid[j] * grid[k])))
        j = k + 1
    return centers, cap


def check_mu_1d(mu, sigma) -> dict:
    """Scalar SDE dY = mu dt + sigma dW on (0, infinity), price scale.

    Returns {"slmd", "elmm", "emm"} reports: the martingale-part ratio
    mu^2 / sigma^4 must be locally integrable on the open half-line;
    the density is a true martingale when x / sigma^2 diverges at 0;
    the market has a true martingale measure when it also diverges at
    infinity.
    """
    mu_fn = _as_profile_fn(mu)
    sigma_fn = _as_profile_fn(sigma)

    def g_fn(xv):
        s = np.asarray(sigma_fn(xv), dtype=float)
        m = np.asarray(mu_fn(xv), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (m * m) / (s * s * s * s)
        return out[()] if out.ndim == 0 else out

    grid = np.geomspace(1e-4, 1e4, 4001)
    centers, cap = _interior_singularities(g_fn, grid)
    evidence = {"interior_singularities": centers, "probe_cap": cap}
    notes = []
    slmd_verdict = HOLDS
    for x_star in centers:
        step = x_star * (grid[1] / grid[0] - 1.0)
        delta0 = max(8.0 * step, 1e-8 * x_star)
        sides = []
        for sign in (1.0, -1.0):
            rep = classify_tail(lambda u, s=sign: g_fn(x_star + s * u),
                                delta0, "to_zero")
            sides.append(rep)
        evidence[f"window_sums_at_{x_star:g}"] = sides
        if any(rep.verdict == "Diverges" for rep in sides):
            evidence["witness"] = {"x": x_star,
                                   "detail": "mu^2 / sigma^4 is not integrable "
                                             "across this interior point"}
            slmd_verdict = FAILS
            break
        if any(rep.verdict == "Inconclusive" for rep in sides):
            slmd_verdict = INCONCLUSIVE
            notes.append(f"window sums at {x_star:g} are inconclusive")
    slmd = ConditionReport("mu_1d.slmd", slmd_verdict, "certificate",
                           evidence, tuple(notes))

    def ratio_fn(xv):
        s = np.asarray(sigma_fn(xv), dtype=float)
        xv = np.asarray(xv, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = xv / (s * s)
        return out[()] if out.ndim == 0 else out

    def gated(cid, tail_direction):
        if slmd.verdict == FAILS:
            return ConditionReport(cid, FAILS, "certificate",
                                   {"witness": evidence.get("witness")},
                                   ("the martingale-part integrability already fails",))
        # Anchor the endpoint integral past any interior sigma zeros:
        # they are a separate pathology and must not shadow the 0 / inf
        # behavior the condition is about.
        anchor = 1.0
        if tail_direction == "to_zero":
            below = [c for c in centers if c <= 1.0]
            if below:
                anchor = min(below) / 2.0
        else:
            above = [c for c in centers if c >= 1.0]
            if above:
                anchor = 2.0 * max(above)
        try:
            tail = classify_tail(ratio_fn, anchor, tail_direction)
        except (EvalError, MaxDepthExceeded, OscillationDetected) as err:
            return ConditionReport(cid, INCONCLUSIVE, "certificate",
                                   {"anchor": anchor, "error": str(err)},
                                   ("the endpoint integral could not be classified",))
        ev = {"tail": tail, "anchor": anchor}
        if tail.verdict == "Diverges" and slmd.verdict == HOLDS:
            return ConditionReport(cid, HOLDS, "certificate", ev, ())
        if tail.verdict == "Converges":
            ev["witness"] = {"integral": "tail", "verdict": "Converges"}
            return ConditionReport(cid, FAILS, "certificate", ev, ())
        return ConditionReport(cid, INCONCLUSIVE, "certificate", ev, ())

    elmm = gated("mu_1d.elmm", "to_zero")
    emm_own = gated("mu_1d.emm", "to_infinity")
    if elmm.verdict == FAILS and emm_own.verdict == HOLDS:
        emm_own = ConditionReport(
            "mu_1d.emm", FAILS, "certificate", emm_own.evidence,
            ("the density is already a strict local martingale",),
        )
    elif elmm.verdict == INCONCLUSIVE and emm_own.verdict == HOLDS:
        emm_own = ConditionReport("mu_1d.emm", INCONCLUSIVE, "certificate",
                                  emm_own.evidence, emm_own.notes)
    return {"slmd": slmd, "elmm": elmm, "emm": emm_own}


__all__ = [
    "ConditionReport",
    "HOLDS",
    "FAILS",
    "INCONCLUSIVE",
    "check_slmd",
    "check_EL1",
    "check_E1",
    "check_EL3",
    "check_E3",
    "check_growth_cap",
    "check_mckean",
    "check_U1",
    "check_U2",
    "check_holder_1d",
    "check_NL1",
    "check_N1",
    "radial_shape",
    "check_radial_market",
    "check_1d_emm",
    "check_mu_1d",
]
