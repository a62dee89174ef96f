import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffarb import dsl
from diffarb.errors import DimensionMismatch, BindError, NotPSD, NotSymmetric
from diffarb.model import (
    MarketModel,
    MPRField,
    NotConstructible,
    SamplePlan,
    asset_path,
    embed_zero,
    good_mpr_markov,
    sqrt_psd,
    sqrt_psd_batch,
    validate_model,
)

SMALL_PLAN = SamplePlan.default(n_radii=12, samples_per_sphere=16, time_points=5)


def bm_1d(**kw):
    base = dict(d=1, m=1, T=1.0, x0=[0.0], S0=[1.0], b=("0",), a=(("1",),), mu=())
    base.update(kw)
    return MarketModel(**base)


def test_constructor_validation():
    with pytest.raises(DimensionMismatch):
        bm_1d(m=2)
    with pytest.raises(DimensionMismatch):
        bm_1d(x0=[0.0, 0.0])
    with pytest.raises(ValueError):
        bm_1d(S0=[0.0])
    with pytest.raises(ValueError):
        bm_1d(T=0.0)
    with pytest.raises(DimensionMismatch):
        bm_1d(mu=("1",))          # d == m leaves no free coordinates
    with pytest.raises(BindError):
        bm_1d(b=("x2",))          # index out of range for d = 1


def test_structure_detection():
    assert bm_1d().a_structure() == "scalar"
    m = MarketModel(d=2, m=1, T=1.0, x0=[0.0, 0.0], S0=[1.0],
                    b=("0", "0"), a=(("1", "0"), ("0", "2")), mu=("0",))
    assert m.a_structure() == "diagonal"
    m2 = MarketModel(d=2, m=2, T=1.0, x0=[0.0, 0.0], S0=[1.0, 1.0],
                     b=("0", "0"), a=(("1", "x1"), ("x1", "1")), mu=())
    assert m2.a_structure() == "general"
    assert bm_1d(a=(("1 + t",),)).a_time_only()
    assert not bm_1d(a=(("x1",),)).a_time_only()


def test_eval_coefficients_batched():
    m = MarketModel(d=2, m=1, T=1.0, x0=[0.0, 0.0], S0=[1.0],
                    b=("x2", "-x1"), a=(("1", "0"), ("0", "1 + x1^2")), mu=("t",))
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_allclose(m.eval_b(0.0, X), [[2.0, -1.0], [4.0, -3.0]])
    A = m.eval_a(0.0, X)
    assert A.shape == (2, 2, 2)
    assert_allclose(A[1], [[1.0, 0.0], [0.0, 10.0]])
    assert_allclose(m.eval_mu(0.5, X), [[0.5], [0.5]])
    # single-point evaluation drops the batch axis
    assert m.eval_b(0.0, np.array([1.0, 2.0])).shape == (2,)


def test_validate_model_accepts_psd_field():
    rep = validate_model(bm_1d(a=(("min(abs(x1), 1)",),)), SMALL_PLAN)
    assert rep.passed
    assert rep.min_eigenvalue >= 0.0
    assert rep.witness is None


def test_validate_model_flags_negative_eigenvalue():
    rep = validate_model(bm_1d(a=(("x1",),)), SMALL_PLAN)   # negative on x1 < 0
    assert not rep.passed
    assert rep.min_eigenvalue < 0
    t, x = rep.witness
    assert x[0] < 0


def test_validate_model_flags_asymmetry():
    m = MarketModel(d=2, m=2, T=1.0, x0=[0.0, 0.0], S0=[1.0, 1.0],
                    b=("0", "0"), a=(("1", "abs(x1)"), ("0", "1")), mu=())
    rep = validate_model(m, SMALL_PLAN)
    assert not rep.passed
    assert rep.max_symmetry_defect > 1.0


def test_sqrt_psd_reconstructs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        G = rng.standard_normal((4, 4))
        A = G @ G.T
        R = sqrt_psd(A)
        assert_allclose(R @ R, A, atol=1e-10 * (1 + np.linalg.norm(A)))
        assert_allclose(R, R.T, atol=1e-12 * (1 + np.linalg.norm(A)))


def test_sqrt_psd_clamps_roundoff_negatives():
    A = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-13]])
    R = sqrt_psd(A)
    assert np.all(np.isfinite(R))
    assert_allclose(R @ R, A, atol=1e-6)


def test_sqrt_psd_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPSD) as exc:
        sqrt_psd(np.diag([1.0, -1.0]))
    assert exc.value.min_eigenvalue == pytest.approx(-1.0)
    with pytest.raises(NotSymmetric):
        sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_sqrt_psd_batch_marks_bad_matrices():
    A = np.stack([np.eye(2), np.diag([1.0, -1.0])])
    R, bad = sqrt_psd_batch(A)
    assert list(bad) == [False, True]
    assert_allclose(R[0], np.eye(2))
    assert_allclose(R[1], 0.0)


def test_embed_zero_shapes():
    assert_allclose(embed_zero(np.array([5.0, 6.0]), 3), [0.0, 5.0, 6.0])
    assert_allclose(embed_zero(np.zeros(0), 2), [0.0, 0.0])
    batch = embed_zero(np.array([[1.0], [2.0]]), 3)
    assert_allclose(batch, [[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]])


def test_good_mpr_zero_drift_short_circuit():
    # with zero drift the field must be exactly the embedded mu, even when
    # the diffusion degenerates somewhere
    m = MarketModel(d=2, m=1, T=1.0, x0=[0.0, 0.0], S0=[1.0],
                    b=("0", "0"), a=(("abs(x1)", "0"), ("0", "abs(x1)")), mu=("x2",))
    field = good_mpr_markov(m, SMALL_PLAN)
    assert isinstance(field, MPRField)
    assert field.zero_drift
    X = np.array([[1.0, 2.0], [0.0, -3.0]])
    assert_allclose(field.eval(0.0, X), embed_zero(m.eval_mu(0.0, X), 2))


def test_good_mpr_solves_linear_system():
    m = MarketModel(d=2, m=2, T=1.0, x0=[0.0, 0.0], S0=[1.0, 1.0],
                    b=("5*x2", "0"), a=(("1", "0"), ("0", "1")), mu=())
    field = good_mpr_markov(m, SMALL_PLAN)
    assert isinstance(field, MPRField)
    assert_allclose(field.eval(0.0, np.array([0.0, 1.0])), [-5.0, 0.0])
    assert max(field.boundedness.values()) > 0


def test_good_mpr_reports_singular_diffusion():
    # b vanishes fast enough that a^-1 b = -x1^2 stays bounded, so the
    # exact singularity at the origin is the headline, not a blowup.
    m = bm_1d(b=("x1^4",), a=(("x1^2",),))
    res = good_mpr_markov(m, SMALL_PLAN)
    assert isinstance(res, NotConstructible)
    assert res.kind == "singular"
    t, x = res.witness
    assert_allclose(x, 0.0)


def test_good_mpr_blowup_near_origin_has_tiny_witness():
    # |a^-1 b| = 1/x1^2 explodes approaching the origin; the probe ladder
    # must find it far below the envelope radii and report it as interior
    # unboundedness with a witness next to 0.
    m = bm_1d(b=("1",), a=(("x1^2",),))
    res = good_mpr_markov(m, SMALL_PLAN)
    assert isinstance(res, NotConstructible)
    assert res.kind == "interior_unbounded"
    t, x = res.witness
    assert abs(x[0]) < 1e-3


def test_good_mpr_reports_interior_blowup():
    # strictly positive diffusion that collapses fast near the origin:
    # |a^-1 b| ~ 1e12 at the innermost probe radius
    m = bm_1d(b=("1",), a=(("max(x1^6, 1e-30)",),))
    res = good_mpr_markov(m, SMALL_PLAN)
    assert isinstance(res, NotConstructible)
    assert res.kind == "interior_unbounded"
    assert "a^-1 b" in res.detail


def test_sample_plan_nesting():
    plan = SamplePlan.default()
    small = plan.sphere(3, 2.0, 5, count=64)
    big = plan.sphere(3, 2.0, 5, count=128)
    assert_allclose(big[:64], small)
    ball_small = plan.ball(3, 2.0, 5, count=64)
    ball_big = plan.ball(3, 2.0, 5, count=128)
    assert_allclose(ball_big[:64], ball_small)
    # boundary point included exactly
    assert_allclose(np.linalg.norm(ball_small[0]), 2.0)
    assert np.all(np.linalg.norm(ball_small, axis=1) <= 2.0 + 1e-12)


def test_sample_plan_sphere_radii():
    plan = SamplePlan.default()
    pts = plan.sphere(4, 3.0, 0, count=32)
    assert_allclose(np.linalg.norm(pts, axis=1), 3.0)
    # 1-D sphere is just the two endpoints
    assert_allclose(plan.sphere(1, 2.0, 0), [[2.0], [-2.0]])


def test_asset_path_constant_volatility():
    m = bm_1d(a=(("0.04",),), S0=[2.0])
    t = np.linspace(0.0, 1.0, 9)
    X = 0.2 * np.sin(t)[:, None]
    times, S = asset_path(m, (t, X), 1)
    assert_allclose(S, 2.0 * np.exp(X[:, 0] - 0.02 * t))
    assert S[0] == 2.0


def test_asset_path_left_point_rule():
    m = bm_1d(a=(("1 + t",),))
    t = np.array([0.0, 0.5, 1.0])
    X = np.zeros((3, 1))
    _, S = asset_path(m, (t, X), 1)
    # integral of a along the grid, left endpoints: 1*0.5 then 1.5*0.5
    assert_allclose(S, np.exp(-0.5 * np.array([0.0, 0.5, 1.25])))


def test_asset_path_index_checked():
    with pytest.raises(DimensionMismatch):
        asset_path(bm_1d(), (np.zeros(2), np.zeros((2, 1))), 2)
