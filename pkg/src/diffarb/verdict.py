"""Market-level verdicts assembled from condition reports.

Each rule consumes condition reports (and, for the scalar-market
shortcuts, a shape probe of the model itself) and asserts one flag in
one direction; conditions are sufficient, never necessary, so a report
that Fails usually asserts nothing.  The exceptions are the checks that
encode equivalences: the market-price-of-risk construction, the scalar
martingale dichotomy in one dimension, and the price-SDE integral tests.

After the base rules fire, the implication lattice

    emm  =>  elmm  =>  slmd        emm  =>  smd  =>  slmd

is closed forward for Exists and contrapositively for NotExists.  A rule
that would flip a decided flag raises ContradictionError naming both
rules: that always signals inconsistent numeric evidence or a
misconfigured certificate, not a legitimate outcome.

Every conclusion carries a grade: "certificate" when every input was
verified against user-supplied envelopes, "evidence" as soon as any link
in the chain rests on sampled profiles.  Downstream conclusions inherit
the weakest grade among their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .criteria import radial_shape
from .errors import ContradictionError
from .model import MarketModel

EXISTS = "Exists"
NOT_EXISTS = "NotExists"
UNKNOWN = "Unknown"
YES = "Yes"

_HOLDS = "Holds"
_FAILS = "Fails"
_CERT = "certificate"
_EVIDENCE = "evidence"

_FLAGS = ("slmd", "smd", "elmm", "emm")

# (src, dst): src = Exists forces dst = Exists; the contrapositive runs
# the arrow backwards for NotExists.
_IMPLIES = (("emm", "smd"), ("emm", "elmm"), ("elmm", "slmd"), ("smd", "slmd"))

_TAXONOMY = (("NUPBR", "slmd"), ("NRA", "smd"), ("NFLVR", "elmm"), ("NGA", "emm"))


def _min_grade(*grades: str) -> str:
    return _EVIDENCE if _EVIDENCE in grades else _CERT


@dataclass(frozen=True)
class Provenance:
    """One derivation step: which rule concluded what from which inputs."""

    conclusion: str
    rule: str
    condition_ids: tuple
    grade: str

    def to_dict(self) -> dict:
        return {
            "conclusion": self.conclusion,
            "rule": self.rule,
            "condition_ids": list(self.condition_ids),
            "grade": self.grade,
        }


@dataclass(frozen=True)
class MarketVerdict:
    slmd: str
    smd: str
    elmm: str
    emm: str
    elmm_unique: str
    emm_unique: str
    taxonomy: dict
    bubble: str
    provenance: tuple
    grades: dict
    notes: tuple

    def to_dict(self) -> dict:
        return {
            "slmd": self.slmd,
            "smd": self.smd,
            "elmm": self.elmm,
            "emm": self.emm,
            "elmm_unique": self.elmm_unique,
            "emm_unique": self.emm_unique,
            "taxonomy": dict(self.taxonomy),
            "bubble": self.bubble,
            "grades": dict(self.grades),
            "notes": list(self.notes),
            "provenance": [p.to_dict() for p in self.provenance],
        }


class _State:
    """Existence flags with grades, derivation log, and conflict detection."""

    def __init__(self):
        self.value = {f: UNKNOWN for f in _FLAGS}
        self.grade = {f: None for f in _FLAGS}
        self.rules = {f: [] for f in _FLAGS}
        self.provenance: list[Provenance] = []

    def set(self, flag, value, rule, conditions, grade) -> bool:
        cur = self.value[flag]
        entry = Provenance(f"{flag}={value}", rule, tuple(conditions), grade)
        if cur == value:
            if grade == _CERT and self.grade[flag] == _EVIDENCE:
                self.grade[flag] = _CERT
                self.rules[flag].append(rule)
                self.provenance.append(entry)
                return True
            if not rule.endswith("closure"):
                # An independent derivation is worth logging even when it
                # changes nothing; closure re-derivations are just noise.
                self.provenance.append(entry)
            return False
        if cur != UNKNOWN:
            raise ContradictionError(flag, rule, self.rules[flag][0])
        self.value[flag] = value
        self.grade[flag] = grade
        self.rules[flag].append(rule)
        self.provenance.append(entry)
        return True


def _close(state: _State) -> None:
    changed = True
    while changed:
        changed = False
        for src, dst in _IMPLIES:
            if state.value[src] == EXISTS:
                changed |= state.set(dst, EXISTS, "implication_closure",
                                     (f"{src}=Exists",), state.grade[src])
        for src, dst in _IMPLIES:
            if state.value[dst] == NOT_EXISTS:
                changed |= state.set(src, NOT_EXISTS, "contrapositive_closure",
                                     (f"{dst}=NotExists",), state.grade[dst])


def _index(reports) -> dict:
    by_id: dict = {}
    for rep in reports:
        by_id.setdefault(rep.condition_id, []).append(rep)
    return by_id


def _pick(reports, verdict):
    """The strongest report with the given verdict, or None."""
    best = None
    for rep in reports:
        if rep.verdict != verdict:
            continue
        if rep.mode == _CERT:
            return rep
        if best is None:
            best = rep
    return best


def classify(reports, model: MarketModel | None = None) -> MarketVerdict:
    """Combine condition reports for one model into a MarketVerdict.

    model may be None when the reports came from the price-SDE route,
    which carries no coefficient-field model; the scalar-market and
    uniqueness rules that need the model's shape then stay silent.
    Pure and order-independent: rules fire in a fixed order regardless
    of the order of reports.
    """
    by_id = _index(reports)

    def holding(cid):
        return _pick(by_id.get(cid, ()), _HOLDS)

    def failing(cid):
        return _pick(by_id.get(cid, ()), _FAILS)

    state = _State()
    notes: list[str] = []

    # Market price of risk: an equivalence, so both directions fire.
    rep = holding("slmd")
    if rep is not None:
        state.set("slmd", EXISTS, "mpr_construction", ("slmd",), rep.mode)
    rep = failing("slmd")
    if rep is not None:
        state.set("slmd", NOT_EXISTS, "mpr_obstruction", ("slmd",), rep.mode)

    # Every existence construction below assumes the market price of
    # risk behind the deflator check.  When that check fails, growth
    # bounds may still hold formally, but the measures they would build
    # do not exist; those rules stay silent and a note records why.
    mpr_failed = (failing("slmd") is not None
                  or failing("mu_1d.slmd") is not None)
    suppressed: list[str] = []

    def conditional(cid):
        rep = holding(cid)
        if rep is None:
            return None
        if mpr_failed:
            if cid not in suppressed:
                suppressed.append(cid)
            return None
        return rep

    # Integral growth bounds give a local martingale density.
    elmm_inputs: list[tuple[str, str]] = []
    for cid in ("EL1", "EL3", "mckean"):
        rep = conditional(cid)
        if rep is not None:
            elmm_inputs.append((cid, rep.mode))
            state.set("elmm", EXISTS, "elmm_growth_bounds", (cid,), rep.mode)

    # Shifted growth bounds under the diagonal cap give a martingale
    # density; together with the unshifted group, a full martingale
    # measure (the same constructed measure serves all three flags).
    smd_inputs: list[tuple[tuple, str]] = []
    cap = conditional("growth_cap")
    if cap is not None:
        rep = holding("E3")
        if rep is not None:
            ids = ("growth_cap", "E3")
            grade = _min_grade(cap.mode, rep.mode)
            smd_inputs.append((ids, grade))
            state.set("smd", EXISTS, "smd_shifted_growth_bounds", ids, grade)
        if model is not None:
            per_asset = []
            for i in range(1, model.m + 1):
                found = None
                for r in by_id.get("E1", ()):
                    if r.verdict == _HOLDS and r.evidence.get("asset") == i:
                        if found is None or r.mode == _CERT:
                            found = r
                per_asset.append(found)
            if per_asset and all(r is not None for r in per_asset):
                ids = ("growth_cap",) + tuple(
                    f"E1(i={i})" for i in range(1, model.m + 1)
                )
                grade = _min_grade(cap.mode, *[r.mode for r in per_asset])
                smd_inputs.append((ids, grade))
                state.set("smd", EXISTS, "smd_shifted_growth_bounds", ids, grade)
    if elmm_inputs and smd_inputs:
        best_elmm = min(elmm_inputs, key=lambda p: p[1] == _EVIDENCE)
        best_smd = min(smd_inputs, key=lambda p: p[1] == _EVIDENCE)
        ids = (best_elmm[0],) + best_smd[0]
        state.set("emm", EXISTS, "emm_joint_growth_bounds", ids,
                  _min_grade(best_elmm[1], best_smd[1]))

    # Explosion comparisons rule densities out.
    rep = holding("NL1")
    if rep is not None:
        state.set("elmm", NOT_EXISTS, "elmm_explosion_obstruction",
                  ("NL1",), rep.mode)
    rep = holding("N1")
    if rep is not None:
        state.set("smd", NOT_EXISTS, "smd_explosion_obstruction",
                  ("N1",), rep.mode)

    # Price-SDE integral tests: each is an equivalence for its flag.
    for cid, flag, rule in (
        ("mu_1d.slmd", "slmd", "price_sde_local_integrability"),
        ("mu_1d.elmm", "elmm", "price_sde_zero_boundary"),
        ("mu_1d.emm", "emm", "price_sde_infinity_boundary"),
    ):
        rep = holding(cid)
        if rep is not None:
            state.set(flag, EXISTS, rule, (cid,), rep.mode)
        rep = failing(cid)
        if rep is not None:
            state.set(flag, NOT_EXISTS, rule, (cid,), rep.mode)

    # Scalar markets a = f * Id: shape re-probed here, never trusted.
    shape = radial_shape(model) if model is not None else None
    dichotomy_unique = False
    low_dim_unique = False
    if shape is not None:
        if model.d <= 2:
            if mpr_failed:
                if "scalar_low_dimension" not in suppressed:
                    suppressed.append("scalar_low_dimension")
            else:
                state.set("elmm", EXISTS, "scalar_low_dimension",
                          ("radial_shape",), _EVIDENCE)
                low_dim_unique = True
        if model.d >= 3:
            rep = conditional("radial_existence")
            if rep is not None:
                state.set("elmm", EXISTS, "scalar_tail_existence",
                          ("radial_existence", "radial_shape"), _EVIDENCE)
            rep = holding("radial_nonexistence")
            if rep is not None:
                state.set("elmm", NOT_EXISTS, "scalar_tail_nonexistence",
                          ("radial_nonexistence", "radial_shape"), _EVIDENCE)
        if model.d == 1:
            rep = conditional("1d_emm")
            if rep is not None:
                state.set("emm", EXISTS, "scalar_martingale_dichotomy",
                          ("1d_emm", "radial_shape"), _EVIDENCE)
                dichotomy_unique = True
            rep = failing("1d_emm")
            if rep is not None:
                state.set("emm", NOT_EXISTS, "scalar_martingale_dichotomy",
                          ("1d_emm", "radial_shape"), _EVIDENCE)
                state.set("smd", NOT_EXISTS, "scalar_martingale_dichotomy",
                          ("1d_emm", "radial_shape"), _EVIDENCE)

    if suppressed:
        notes.append(
            "the market price of risk check fails, so these existence "
            "rules were not applied despite holding inputs: "
            + ", ".join(suppressed)
        )

    _close(state)

    # Uniqueness: only ever Yes or Unknown, and only next to existence.
    uniq = {"elmm_unique": UNKNOWN, "emm_unique": UNKNOWN}
    uniq_grade = {"elmm_unique": None, "emm_unique": None}

    def set_unique(which, rule, conditions, grade):
        entry = Provenance(f"{which}={YES}", rule, tuple(conditions), grade)
        if uniq[which] == YES:
            if grade == _CERT and uniq_grade[which] == _EVIDENCE:
                uniq_grade[which] = _CERT
                state.provenance.append(entry)
            return
        uniq[which] = YES
        uniq_grade[which] = grade
        state.provenance.append(entry)

    if state.value["elmm"] == EXISTS:
        if model is not None and model.d == model.m:
            for cid in ("U1", "U2"):
                rep = holding(cid)
                if rep is not None:
                    set_unique("elmm_unique", "uniqueness_elliptic_root",
                               (cid,), _min_grade(rep.mode, state.grade["elmm"]))
        rep = holding("holder_1d")
        if rep is not None and (
            model is None or (model.d == 1 and model.m == 1)
        ):
            set_unique("elmm_unique", "uniqueness_holder_root",
                       ("holder_1d",), _min_grade(rep.mode, state.grade["elmm"]))
        if low_dim_unique:
            set_unique("elmm_unique", "scalar_low_dimension",
                       ("radial_shape",), _EVIDENCE)
    if state.value["emm"] == EXISTS:
        if dichotomy_unique:
            set_unique("emm_unique", "scalar_martingale_dichotomy",
                       ("1d_emm", "radial_shape"), _EVIDENCE)
        if uniq["elmm_unique"] == YES:
            set_unique("emm_unique", "uniqueness_inherited",
                       ("elmm_unique=Yes",),
                       _min_grade(uniq_grade["elmm_unique"],
                                  state.grade["emm"]))

    if failing("U1") is not None and failing("U2") is not None:
        notes.append(
            "neither ellipticity-continuity nor root-Lipschitz uniqueness "
            "holds; existence flags are relative to the constructed "
            "candidate measures and other solutions of the martingale "
            "problem may behave differently"
        )

    # Taxonomy mirrors the density flags one-for-one.
    taxonomy = {}
    for name, flag in _TAXONOMY:
        value = state.value[flag]
        taxonomy[name] = (
            _HOLDS if value == EXISTS
            else _FAILS if value == NOT_EXISTS
            else UNKNOWN
        )
        if value != UNKNOWN:
            state.provenance.append(Provenance(
                f"{name}={taxonomy[name]}", "taxonomy_equivalence",
                (f"{flag}={value}",), state.grade[flag],
            ))

    # Bubble: a local martingale measure with no true martingale measure.
    bubble_grade = None
    if state.value["elmm"] == EXISTS and state.value["emm"] == NOT_EXISTS:
        bubble = YES
        bubble_grade = _min_grade(state.grade["elmm"], state.grade["emm"])
        state.provenance.append(Provenance(
            "bubble=Yes", "bubble_definition",
            ("elmm=Exists", "emm=NotExists"), bubble_grade,
        ))
    elif state.value["emm"] == EXISTS:
        bubble = "No"
        bubble_grade = state.grade["emm"]
        state.provenance.append(Provenance(
            "bubble=No", "bubble_definition", ("emm=Exists",), bubble_grade,
        ))
    elif state.value["elmm"] == NOT_EXISTS:
        bubble = "No"
        bubble_grade = state.grade["elmm"]
        state.provenance.append(Provenance(
            "bubble=No", "bubble_definition", ("elmm=NotExists",), bubble_grade,
        ))
    else:
        bubble = UNKNOWN

    grades = {flag: state.grade[flag] for flag in _FLAGS}
    grades["elmm_unique"] = uniq_grade["elmm_unique"]
    grades["emm_unique"] = uniq_grade["emm_unique"]
    grades["bubble"] = bubble_grade

    return MarketVerdict(
        slmd=state.value["slmd"],
        smd=state.value["smd"],
        elmm=state.value["elmm"],
        emm=state.value["emm"],
        elmm_unique=uniq["elmm_unique"],
        emm_unique=uniq["emm_unique"],
        taxonomy=taxonomy,
        bubble=bubble,
        provenance=tuple(state.provenance),
        grades=grades,
        notes=tuple(notes),
    )


__all__ = ["EXISTS", "NOT_EXISTS", "UNKNOWN", "YES",
           "MarketVerdict", "Provenance", "classify"]
