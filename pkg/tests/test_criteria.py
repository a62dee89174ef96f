"""Condition checkers: verdicts, modes, witnesses, and cross-checker laws."""

import json

import numpy as np
import pytest

from diffarb.criteria import (
    ConditionReport,
    check_1d_emm,
    check_E1,
    check_E3,
    check_EL1,
    check_EL3,
    check_N1,
    check_NL1,
    check_U1,
    check_U2,
    check_growth_cap,
    check_holder_1d,
    check_mckean,
    check_mu_1d,
    check_radial_market,
    check_slmd,
    radial_shape,
)
from diffarb.errors import DimensionMismatch, MissingCertificate
from diffarb.model import CertificateBundle, MarketModel


def scalar_model(a_expr, b_expr="0", d=1, T=1.0, x0=None):
    """d = m market with a = a_expr * Id and the same drift in every row."""
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    return MarketModel(
        d=d, m=d, T=T, x0=x0, S0=np.ones(d),
        b=tuple([b_expr] * d),
        a=tuple(
            tuple(a_expr if i == j else "0" for j in range(d)) for i in range(d)
        ),
        mu=(),
    )


def radial_power(delta, d=1):
    """a = (max(|x|, 1))^delta * Id started at e1."""
    x0 = np.zeros(d)
    x0[0] = 1.0
    return scalar_model(f"(max(norm,1))^{delta}", d=d, x0=x0)


IDENTITY_1 = scalar_model("1", d=1)
IDENTITY_2 = scalar_model("1", d=2)
GIRSANOV = scalar_model("min(sqrt(abs(x1)),1)", d=1)
NOVIKOV = MarketModel(
    d=2, m=2, T=1.0, x0=[0.0, 0.0], S0=[1.0, 1.0],
    b=("5*x2", "0"), a=(("1", "0"), ("0", "1")), mu=(),
)
BESSEL_CUBED = scalar_model("9*abs(x1)^(4/3)", b_expr="3*x1/abs(x1)^(2/3)", d=1)
CUBIC_3 = radial_power(3, d=3)
TIME_SINGULAR = scalar_model("1/sqrt(t)", d=1)


def assert_fails_with_witness(report):
    assert report.verdict == "Fails"
    assert report.evidence.get("witness") is not None


# ---------------------------------------------------------------------------
# ConditionReport


def test_report_rejects_unknown_verdict():
    with pytest.raises(ValueError):
        ConditionReport("EL3", "Maybe", "evidence", {}, ())


def test_report_rejects_unknown_mode():
    with pytest.raises(ValueError):
        ConditionReport("EL3", "Holds", "oracle", {}, ())


def test_report_to_dict_is_plain_json():
    rep = ConditionReport(
        "EL3", "Holds", "evidence",
        {"x": np.float64(1.5), "n": np.int32(3), "arr": np.arange(2.0)},
        ("note",),
    )
    blob = json.dumps(rep.to_dict())
    back = json.loads(blob)
    assert back["evidence"]["arr"] == [0.0, 1.0]
    assert back["verdict"] == "Holds"


# ---------------------------------------------------------------------------
# check_slmd


def test_slmd_bounded_linear_drift_holds():
    rep = check_slmd(NOVIKOV)
    assert rep.verdict == "Holds"
    assert "sup_by_box" in rep.evidence


def test_slmd_zero_drift_holds():
    assert check_slmd(GIRSANOV).verdict == "Holds"


def test_slmd_degenerate_pole_fails_with_witness():
    rep = check_slmd(BESSEL_CUBED)
    assert_fails_with_witness(rep)
    w = rep.evidence["witness"]
    assert abs(w["x"][0]) < 0.25


# ---------------------------------------------------------------------------
# check_EL1 / check_E1


EL1_IDENTITY = CertificateBundle(r=0.5, zeta="1", A="2*z", B="1/(2*z)")
EL1_CUBIC = CertificateBundle(r=0.5, zeta="1", A="2*z*(sqrt(2*z))^3", B="3/(2*z)")


def test_el1_identity_certificate_holds():
    rep = check_EL1(IDENTITY_1, EL1_IDENTITY)
    assert rep.verdict == "Holds"
    assert rep.mode == "certificate"
    assert rep.evidence["nested_tail"]["verdict"] == "Diverges"


def test_el1_cubic_certificate_fails_on_convergent_tail():
    rep = check_EL1(CUBIC_3, EL1_CUBIC)
    assert_fails_with_witness(rep)
    assert rep.evidence["nested_tail"]["verdict"] == "Converges"


def test_el1_partial_certificate_is_rejected():
    with pytest.raises(MissingCertificate):
        check_EL1(IDENTITY_1, CertificateBundle(r=0.5, zeta="1"))


def test_el1_autonomous_identity_holds_as_evidence():
    rep = check_EL1(IDENTITY_1)
    assert rep.verdict == "Holds"
    assert rep.mode == "evidence"


def test_e1_identity_certificate_holds():
    certs = CertificateBundle(
        r=0.5, zeta="1", A="2*z", B="(1+2*sqrt(2*z)+2*z)/(2*z)"
    )
    rep = check_E1(IDENTITY_1, certs, i=1)
    assert rep.verdict == "Holds"
    assert rep.evidence["asset"] == 1


def test_e1_per_asset_certificates_are_read():
    certs = CertificateBundle(per_asset={
        1: {"r": 0.5, "zeta": "1", "A": "2*z", "B": "(1+2*sqrt(2*z)+2*z)/(2*z)"},
    })
    assert check_E1(IDENTITY_1, certs, i=1).verdict == "Holds"


def test_e1_quadratic_growth_fails():
    certs = CertificateBundle(
        r=0.5, zeta="1", A="2*z*(sqrt(2*z))^2", B="(1+2*sqrt(2*z)+2*z)/(2*z)"
    )
    rep = check_E1(radial_power(2), certs, i=1)
    assert_fails_with_witness(rep)


def test_e1_asset_out_of_range():
    with pytest.raises(DimensionMismatch):
        check_E1(IDENTITY_1, EL1_IDENTITY, i=2)


# ---------------------------------------------------------------------------
# check_EL3 / check_E3


def test_el3_identity_holds():
    assert check_EL3(IDENTITY_1).verdict == "Holds"


def test_el3_bounded_coefficients_hold():
    assert check_EL3(GIRSANOV).verdict == "Holds"


def test_el3_cubic_fails_with_witness():
    assert_fails_with_witness(check_EL3(radial_power(3)))


def test_el3_time_singular_but_integrable_holds():
    rep = check_EL3(TIME_SINGULAR)
    assert rep.verdict == "Holds"


def test_e3_identity_holds():
    assert check_E3(IDENTITY_1).verdict == "Holds"


@pytest.mark.parametrize("delta, expected", [
    (0.5, "Holds"),
    (1, "Holds"),
    (2, "Fails"),
])
def test_e3_power_family_threshold(delta, expected):
    rep = check_E3(radial_power(delta))
    assert rep.verdict == expected
    if expected == "Fails":
        assert rep.evidence.get("witness") is not None


def test_e3_linear_extra_drift_holds():
    model = MarketModel(
        d=2, m=1, T=1.0, x0=[0.0, 0.0], S0=[1.0],
        b=("0", "0"), a=(("1", "0"), ("0", "1")), mu=("5*x2",),
    )
    assert check_E3(model).verdict == "Holds"


def test_e3_holds_implies_el3_holds_on_radial_markets():
    models = [
        IDENTITY_1,
        IDENTITY_2,
        radial_power(0.5),
        radial_power(1),
        radial_power(2),
        radial_power(2, d=2),
        CUBIC_3,
    ]
    fired = 0
    for model in models:
        if check_E3(model).verdict == "Holds":
            fired += 1
            assert check_EL3(model).verdict == "Holds"
    assert fired >= 3


# ---------------------------------------------------------------------------
# check_mckean


def test_mckean_identity_holds():
    rep = check_mckean(IDENTITY_2)
    assert rep.verdict == "Holds"


def test_mckean_quadratic_certificate_holds():
    rep = check_mckean(radial_power(2), CertificateBundle(xi="(max(z,1))^2"))
    assert rep.verdict == "Holds"
    assert rep.mode == "certificate"
    assert rep.evidence["xi_tail"]["verdict"] == "Diverges"


def test_mckean_cubic_certificate_fails():
    rep = check_mckean(radial_power(3), CertificateBundle(xi="(max(z,1))^3"))
    assert_fails_with_witness(rep)


def test_mckean_nonzero_extra_drift_fails():
    model = MarketModel(
        d=2, m=1, T=1.0, x0=[0.0, 0.0], S0=[1.0],
        b=("0", "0"), a=(("1", "0"), ("0", "1")), mu=("1",),
    )
    assert_fails_with_witness(check_mckean(model))


# ---------------------------------------------------------------------------
# check_U1 / check_U2 / check_holder_1d


def test_u1_identity_holds():
    assert check_U1(IDENTITY_2).verdict == "Holds"


def test_u1_smooth_positive_field_holds():
    assert check_U1(scalar_model("1+x1^2", d=2)).verdict == "Holds"


def test_u1_degenerate_at_origin_fails():
    rep = check_U1(GIRSANOV)
    assert_fails_with_witness(rep)
    assert abs(rep.evidence["witness"]["x"][0]) < 1e-6


def test_u2_identity_holds():
    assert check_U2(IDENTITY_1).verdict == "Holds"


def test_u2_smooth_quadratic_holds():
    assert check_U2(scalar_model("1+x1^2", d=1)).verdict == "Holds"


def test_u2_sqrt_kink_fails():
    assert_fails_with_witness(check_U2(scalar_model("abs(x1)", d=1)))


def test_holder_power_family_holds():
    rep = check_holder_1d(radial_power(2))
    assert rep.verdict == "Holds"
    assert "h_constant" in rep.evidence


def test_holder_identity_holds():
    assert check_holder_1d(IDENTITY_1).verdict == "Holds"


def test_holder_requires_one_dimension():
    with pytest.raises(DimensionMismatch):
        check_holder_1d(NOVIKOV)


# ---------------------------------------------------------------------------
# check_NL1 / check_N1


NL1_CUBIC = CertificateBundle(A="2*z*(sqrt(2*z))^3", B="3/(2*z)")


def test_nl1_cubic_three_dimensions_holds():
    rep = check_NL1(CUBIC_3, NL1_CUBIC)
    assert rep.verdict == "Holds"
    assert rep.evidence["tail_to_infinity"]["verdict"] == "Converges"
    assert rep.evidence["tail_to_zero"]["verdict"] == "Diverges"


def test_nl1_cubic_two_dimensions_fails():
    certs = CertificateBundle(A="2*z*(sqrt(2*z))^3", B="1/z")
    rep = check_NL1(radial_power(3, d=2), certs)
    assert_fails_with_witness(rep)


def test_nl1_requires_certificates():
    with pytest.raises(MissingCertificate):
        check_NL1(CUBIC_3, CertificateBundle(A="2*z"))


def test_nl1_requires_square_market():
    model = MarketModel(
        d=2, m=1, T=1.0, x0=[1.0, 0.0], S0=[1.0],
        b=("0", "0"), a=(("1", "0"), ("0", "1")), mu=("0",),
    )
    with pytest.raises(DimensionMismatch):
        check_NL1(model, NL1_CUBIC)


def test_n1_identity_fails():
    rep = check_N1(IDENTITY_1, CertificateBundle(A="2*z", B="1/(2*z)"))
    assert_fails_with_witness(rep)


def test_n1_even_power_fails_at_negative_probes():
    # The shifted trace goes negative left of the origin, so no positive
    # envelope B can sit below it there; the report must say so.
    certs = CertificateBundle(A="2*z*(sqrt(2*z))^2", B="1/(2*z)")
    rep = check_N1(radial_power(2), certs)
    assert_fails_with_witness(rep)
    assert rep.evidence["witness"]["x"][0] < 0


# ---------------------------------------------------------------------------
# check_growth_cap


def test_growth_cap_bounded_field_holds():
    assert check_growth_cap(GIRSANOV).verdict == "Holds"


def test_growth_cap_scalar_field_holds_as_evidence():
    rep = check_growth_cap(CUBIC_3)
    assert rep.verdict == "Holds"
    assert rep.mode == "evidence"


def test_growth_cap_time_singular_certificate_holds():
    rep = check_growth_cap(
        TIME_SINGULAR, CertificateBundle(zeta="1/sqrt(t)", a_hat="1")
    )
    assert rep.verdict == "Holds"
    assert rep.mode == "certificate"


# ---------------------------------------------------------------------------
# radial markets


def test_radial_shape_detects_scalar_field():
    shape = radial_shape(CUBIC_3)
    assert shape is not None
    assert shape["f_min"] > 0


def test_radial_shape_rejects_off_diagonal():
    model = MarketModel(
        d=2, m=2, T=1.0, x0=[1.0, 0.0], S0=[1.0, 1.0],
        b=("0", "0"), a=(("2", "1"), ("1", "2")), mu=(),
    )
    assert radial_shape(model) is None


def test_radial_shape_rejects_unequal_diagonal():
    model = MarketModel(
        d=2, m=2, T=1.0, x0=[1.0, 0.0], S0=[1.0, 1.0],
        b=("0", "0"), a=(("1", "0"), ("0", "1+x1^2")), mu=(),
    )
    assert radial_shape(model) is None


def test_radial_shape_rejects_time_dependence():
    assert radial_shape(TIME_SINGULAR) is None


def test_radial_cubic_certificates_split():
    certs = CertificateBundle(xi="(max(z,1))^3", alpha="rho^3")
    exist, nonexist = check_radial_market(CUBIC_3, certs)
    assert exist.condition_id == "radial_existence"
    assert nonexist.condition_id == "radial_nonexistence"
    assert_fails_with_witness(exist)
    assert nonexist.verdict == "Holds"
    assert nonexist.mode == "certificate"


def test_radial_bounded_field_existence_holds():
    exist, nonexist = check_radial_market(IDENTITY_2, CertificateBundle(xi="1"))
    assert exist.verdict == "Holds"
    assert nonexist.verdict == "Fails"


def test_radial_quadratic_existence_holds():
    certs = CertificateBundle(xi="(max(z,1))^2")
    exist, _ = check_radial_market(radial_power(2, d=2), certs)
    assert exist.verdict == "Holds"


def test_radial_nonscalar_market_is_inconclusive():
    model = MarketModel(
        d=2, m=2, T=1.0, x0=[1.0, 0.0], S0=[1.0, 1.0],
        b=("0", "0"), a=(("2", "1"), ("1", "2")), mu=(),
    )
    exist, nonexist = check_radial_market(model)
    assert exist.verdict == "Inconclusive"
    assert nonexist.verdict == "Inconclusive"


# ---------------------------------------------------------------------------
# check_1d_emm


@pytest.mark.parametrize("f, expected", [
    ("(max(abs(x1),1))^0.5", "Holds"),
    ("(max(abs(x1),1))^1.5", "Fails"),
    ("1", "Holds"),
])
def test_1d_emm_reciprocal_tail(f, expected):
    rep = check_1d_emm(f)
    assert rep.verdict == expected
    if expected == "Fails":
        assert rep.evidence.get("witness") is not None


def test_1d_emm_accepts_callables():
    assert check_1d_emm(lambda y: np.maximum(np.abs(y), 1.0) ** 3).verdict == "Fails"


def test_nonexistence_implies_no_martingale_measure_on_power_family():
    fired = 0
    for delta in (0.5, 1.5, 2.5, 3):
        model = radial_power(delta)
        certs = CertificateBundle(alpha=f"rho^{delta}")
        _, nonexist = check_radial_market(model, certs)
        emm = check_1d_emm(f"(max(abs(x1),1))^{delta}")
        if nonexist.verdict == "Holds":
            fired += 1
            assert emm.verdict == "Fails"
    assert fired >= 2


# ---------------------------------------------------------------------------
# check_mu_1d


def test_mu_1d_black_scholes_all_hold():
    out = check_mu_1d("0", "x1")
    assert set(out) == {"slmd", "elmm", "emm"}
    assert out["slmd"].condition_id == "mu_1d.slmd"
    assert all(rep.verdict == "Holds" for rep in out.values())


def test_mu_1d_superlinear_volatility_is_a_bubble():
    out = check_mu_1d("0", "x1^1.5")
    assert out["slmd"].verdict == "Holds"
    assert out["elmm"].verdict == "Holds"
    assert_fails_with_witness(out["emm"])


def test_mu_1d_nonintegrable_spike_fails_slmd():
    out = check_mu_1d("1", "sqrt(abs(x1-1))")
    rep = out["slmd"]
    assert_fails_with_witness(rep)
    assert abs(rep.evidence["witness"]["x"] - 1.0) < 0.5
    assert out["elmm"].verdict == "Fails"
    assert out["emm"].verdict == "Fails"


def test_mu_1d_integrable_spike_keeps_slmd():
    out = check_mu_1d("1", "abs(x1-1)^0.125")
    assert out["slmd"].verdict == "Holds"


# ---------------------------------------------------------------------------
# determinism


def test_reports_are_deterministic():
    pairs = [
        (check_EL3(radial_power(2)), check_EL3(radial_power(2))),
        (check_U2(scalar_model("abs(x1)", d=1)),
         check_U2(scalar_model("abs(x1)", d=1))),
        (check_mu_1d("1", "sqrt(abs(x1-1))")["slmd"],
         check_mu_1d("1", "sqrt(abs(x1-1))")["slmd"]),
    ]
    for first, second in pairs:
        assert json.dumps(first.to_dict(), sort_keys=True) == \
            json.dumps(second.to_dict(), sort_keys=True)
