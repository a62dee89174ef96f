"""Exit-probability engine: calibration, determinism, trends, CSV output."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import diffarb.simulate as sim
from diffarb import (
    MarketModel,
    SimConfig,
    asset_defect,
    emit_paths,
    martingale_defect,
    simulate_exit,
    wilson_interval,
)
from diffarb.errors import DimensionMismatch, NotPSD

SEED = 2024


def scalar_model(a_expr, b_expr="0", d=1, T=1.0, x0=None):
    x0 = tuple(x0) if x0 is not None else (0.0,) * d
    a = tuple(tuple(a_expr if i == j else "0" for j in range(d)) for i in range(d))
    return MarketModel(d=d, m=d, T=T, x0=x0, S0=(1.0,) * d,
                       b=(b_expr,) * d, a=a, mu=())


BROWNIAN = scalar_model("1")

# A drifted path hits x1 < 0 where a = x1 stops being PSD; with the
# fixed seed exactly some (not all) of 400 paths go invalid by T = 0.25.
SOMETIMES_BAD = MarketModel(d=1, m=1, T=0.25, x0=(1.0,), S0=(1.0,),
                            b=("-1",), a=(("x1",),), mu=())
SOMETIMES_BAD_CFG = SimConfig(steps_per_unit_time=64, paths=400,
                              radii=(4.0,), master_seed=1, drift_mode="P")


def two_sided_exit(radius, total_variance, terms=40):
    """P(sup_{t<=V} |W_t| >= r) by the alternating reflection series."""
    z = radius / math.sqrt(total_variance)
    total = 0.0
    for k in range(terms):
        total += (-1) ** k * 2.0 * math.erfc((2 * k + 1) * z / math.sqrt(2.0))
    return total


def discrete_exit(radius, total_variance, h, sigma=1.0):
    """Same, with the discrete-monitoring barrier shift 0.5826*sigma*sqrt(h)."""
    return two_sided_exit(radius + 0.5826 * sigma * math.sqrt(h), total_variance)


def test_reflection_series_matches_frozen_values():
    assert two_sided_exit(2.0, 1.0) == pytest.approx(0.0910005238, abs=1e-9)
    assert two_sided_exit(4.0, 1.0) == pytest.approx(1.2668496733e-4, rel=1e-8)


# -- SimConfig validation ----------------------------------------------------


@pytest.mark.parametrize("bad", [
    dict(radii=()),
    dict(radii=(2.0, 2.0)),
    dict(radii=(3.0, 2.0)),
    dict(radii=(-1.0, 2.0)),
    dict(paths=0),
    dict(steps_per_unit_time=0),
    dict(scheme="milstein"),
    dict(drift_mode="R"),
    dict(drift_mode="Q_shift"),
    dict(drift_mode="Q_shift", shift_asset=0),
    dict(drift_mode="Q", shift_asset=1),
    dict(master_seed=-1),
    dict(master_seed=2 ** 64),
])
def test_config_rejects_bad_settings(bad):
    kw = dict(steps_per_unit_time=8, paths=10, radii=(1.0, 2.0), master_seed=7)
    kw.update(bad)
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_config_to_dict_is_plain_json():
    cfg = SimConfig(steps_per_unit_time=8, paths=10, radii=(1.0, 2.0),
                    master_seed=7, drift_mode="Q_shift", shift_asset=1)
    blob = json.dumps(cfg.to_dict(), sort_keys=True)
    assert json.loads(blob)["radii"] == [1.0, 2.0]


# -- Wilson intervals ---------------------------------------------------------


def test_wilson_zero_count_upper_bound():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0
    z2 = 1.96 ** 2
    assert hi == pytest.approx(z2 / (100 + z2))


def test_wilson_full_count_mirrors_zero():
    lo0, hi0 = wilson_interval(0, 57)
    lo1, hi1 = wilson_interval(57, 57)
    assert hi1 == 1.0
    assert lo1 == pytest.approx(1.0 - hi0)


@settings(max_examples=80, deadline=None)
@given(n=st.integers(1, 10_000), frac=st.floats(0, 1))
def test_wilson_contains_the_point_estimate(n, frac):
    k = int(round(frac * n))
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


# -- simulate_exit ------------------------------------------------------------


def test_brownian_exit_probability_matches_oracle():
    cfg = SimConfig(steps_per_unit_time=1024, paths=20_000,
                    radii=(2.0, 4.0), master_seed=SEED)
    est = simulate_exit(BROWNIAN, cfg)
    r2 = est.per_radius[0]
    oracle = discrete_exit(2.0, 1.0, h=1.0 / 1024)
    sigma = math.sqrt(oracle * (1 - oracle) / r2.paths)
    assert abs(r2.p_hat - oracle) < 3 * sigma
    assert r2.ci_lo <= r2.p_hat <= r2.ci_hi
    assert est.defect == est.per_radius[-1].p_hat


def test_exit_counts_are_exactly_monotone():
    cfg = SimConfig(steps_per_unit_time=256, paths=5_000,
                    radii=(0.5, 1.0, 1.5, 2.0, 3.0), master_seed=3)
    est = simulate_exit(BROWNIAN, cfg)
    counts = [r.exit_count for r in est.per_radius]
    assert counts == sorted(counts, reverse=True)
    assert counts[0] > counts[-1]  # ladder actually separates the levels


def test_frozen_model_never_exits():
    frozen = scalar_model("0")
    cfg = SimConfig(steps_per_unit_time=8, paths=500, radii=(1.0, 2.0),
                    master_seed=7)
    est = simulate_exit(frozen, cfg)
    assert [r.exit_count for r in est.per_radius] == [0, 0]
    assert est.trend == "vanishing"


def test_results_identical_across_worker_counts():
    cfg = SimConfig(steps_per_unit_time=256, paths=6_000, radii=(1.0, 2.0),
                    master_seed=SEED)
    serial = simulate_exit(BROWNIAN, cfg)
    threaded = simulate_exit(BROWNIAN, cfg, workers=4)
    assert serial.to_dict() == threaded.to_dict()


def test_state_dependent_model_identical_across_workers():
    girsanov = scalar_model("min(sqrt(abs(x1)),1)")
    cfg = SimConfig(steps_per_unit_time=128, paths=3_000, radii=(4.0, 6.0),
                    master_seed=11)
    serial = simulate_exit(girsanov, cfg)
    threaded = simulate_exit(girsanov, cfg, workers=3)
    assert serial.to_dict() == threaded.to_dict()


def test_results_identical_across_chunk_sizes(monkeypatch):
    cfg = SimConfig(steps_per_unit_time=64, paths=333, radii=(1.0, 2.0),
                    master_seed=5)
    whole = simulate_exit(BROWNIAN, cfg)
    monkeypatch.setattr(sim, "_CHUNK_FLOAT_BUDGET", 64 * 2)
    shredded = simulate_exit(BROWNIAN, cfg)
    assert whole.to_dict() == shredded.to_dict()


def test_drift_modes_change_the_dynamics():
    # d=2, one traded coordinate; mu drives x2 only under Q.
    model = MarketModel(d=2, m=1, T=1.0, x0=(0.0, 0.0), S0=(1.0,),
                        b=("0", "0"), a=(("1", "0"), ("0", "1")),
                        mu=("-6",))
    base = dict(steps_per_unit_time=128, paths=2_000, radii=(3.0,),
                master_seed=9)
    p_mode = simulate_exit(model, SimConfig(drift_mode="P", **base))
    q_mode = simulate_exit(model, SimConfig(drift_mode="Q", **base))
    assert q_mode.per_radius[0].p_hat > p_mode.per_radius[0].p_hat + 0.3


def test_shift_mode_adds_the_asset_column():
    cfg = dict(steps_per_unit_time=128, paths=4_000, radii=(2.5,),
               master_seed=9)
    plain = simulate_exit(BROWNIAN, SimConfig(drift_mode="Q", **cfg))
    shifted = simulate_exit(
        BROWNIAN, SimConfig(drift_mode="Q_shift", shift_asset=1, **cfg))
    # Unit drift pushes the path outward, so exits become more likely.
    assert shifted.per_radius[0].p_hat > plain.per_radius[0].p_hat


def test_time_dependent_diffusion_matches_time_change_oracle():
    # a = 1 + t turns X into W run at clock t + t^2/2, so the exit
    # probability at T = 1 is the reflection series at total variance 1.5.
    model = scalar_model("1 + t")
    cfg = SimConfig(steps_per_unit_time=2048, paths=20_000, radii=(2.0,),
                    master_seed=SEED)
    est = simulate_exit(model, cfg)
    lo = discrete_exit(2.0, 1.5, h=1.5 / 2048, sigma=math.sqrt(1.5))
    hi = two_sided_exit(2.0, 1.5)
    margin = 3 * math.sqrt(hi * (1 - hi) / 20_000)
    assert lo - margin < est.per_radius[0].p_hat < hi + margin


def test_cached_and_general_stepping_agree(monkeypatch):
    model = scalar_model("1 + t")
    cfg = SimConfig(steps_per_unit_time=64, paths=500, radii=(1.0, 2.0),
                    master_seed=13)
    cached = simulate_exit(model, cfg)
    monkeypatch.setattr(sim, "_cached_roots", lambda m, ts: (None, None))
    general = simulate_exit(model, cfg)
    assert cached.to_dict() == general.to_dict()


def test_too_many_invalid_paths_is_a_hard_error():
    with pytest.raises(NotPSD, match="paths"):
        simulate_exit(SOMETIMES_BAD, SOMETIMES_BAD_CFG)


def test_few_invalid_paths_warn_and_are_excluded(monkeypatch):
    monkeypatch.setattr(sim, "_INVALID_FRACTION_LIMIT", 0.9)
    with pytest.warns(RuntimeWarning, match="excluded"):
        est = simulate_exit(SOMETIMES_BAD, SOMETIMES_BAD_CFG)
    assert est.invalid_paths >= 1
    assert est.per_radius[0].paths == 400 - est.invalid_paths


def test_state_independent_negative_diffusion_fails_at_setup():
    model = scalar_model("0.25 - t")
    cfg = SimConfig(steps_per_unit_time=16, paths=10, radii=(1.0,),
                    master_seed=1)
    with pytest.raises(NotPSD):
        simulate_exit(model, cfg)


def test_estimate_to_dict_is_plain_json():
    cfg = SimConfig(steps_per_unit_time=16, paths=200, radii=(1.0, 2.0),
                    master_seed=2)
    est = simulate_exit(BROWNIAN, cfg)
    blob = json.loads(json.dumps(est.to_dict()))
    assert blob["steps"] == 16
    assert len(blob["per_radius"]) == 2
    assert blob["per_radius"][0]["ci"][0] <= blob["per_radius"][0]["p_hat"]


# -- CLT and discretization sanity -------------------------------------------


def test_doubling_paths_shrinks_ci_like_root_two():
    widths = []
    for paths in (10_000, 20_000):
        cfg = SimConfig(steps_per_unit_time=256, paths=paths, radii=(2.0,),
                        master_seed=9)
        widths.append(simulate_exit(BROWNIAN, cfg).per_radius[0].ci_width)
    ratio = widths[1] / widths[0]
    assert 0.8 / math.sqrt(2) < ratio < 1.2 / math.sqrt(2)


def test_halving_h_moves_p_hat_by_less_than_three_ci_widths():
    coarse = simulate_exit(BROWNIAN, SimConfig(
        steps_per_unit_time=512, paths=20_000, radii=(2.0,), master_seed=12))
    fine = simulate_exit(BROWNIAN, SimConfig(
        steps_per_unit_time=1024, paths=20_000, radii=(2.0,), master_seed=12))
    diff = abs(coarse.per_radius[0].p_hat - fine.per_radius[0].p_hat)
    assert diff < 3 * coarse.per_radius[0].ci_width


def test_bridge_correction_recovers_coarse_grid_bias():
    base = dict(steps_per_unit_time=64, paths=20_000, radii=(2.0,),
                master_seed=SEED)
    plain = simulate_exit(BROWNIAN, SimConfig(**base))
    bridged = simulate_exit(
        BROWNIAN, SimConfig(bridge_correction=True, **base))
    oracle = two_sided_exit(2.0, 1.0)
    assert bridged.per_radius[0].exit_count >= plain.per_radius[0].exit_count
    assert (abs(bridged.per_radius[0].p_hat - oracle)
            < abs(plain.per_radius[0].p_hat - oracle))


def test_bridge_correction_keeps_monotonicity_and_determinism():
    cfg = SimConfig(steps_per_unit_time=32, paths=4_000, radii=(1.0, 1.5, 2.0),
                    master_seed=4, bridge_correction=True)
    est = simulate_exit(BROWNIAN, cfg)
    counts = [r.exit_count for r in est.per_radius]
    assert counts == sorted(counts, reverse=True)
    again = simulate_exit(BROWNIAN, cfg, workers=3)
    assert est.to_dict() == again.to_dict()


# -- trend classification ----------------------------------------------------


def _radius_row(radius, p_hat, width, paths=10_000):
    k = int(round(p_hat * paths))
    return sim.RadiusEstimate(radius=radius, exit_count=k, paths=paths,
                              p_hat=p_hat, ci_lo=p_hat - width / 2,
                              ci_hi=p_hat + width / 2)


@pytest.mark.parametrize("rows, want", [
    ([(4.0, 0.30, 0.02), (8.0, 0.28, 0.02)], "plateau"),
    ([(4.0, 0.30, 0.02), (8.0, 0.10, 0.02)], "undetermined"),
    ([(4.0, 0.0, 0.001), (8.0, 0.0, 0.001)], "vanishing"),
    ([(4.0, 1e-4, 0.001), (8.0, 0.0, 0.001)], "vanishing"),
    # Levels agree but sit only ~1.5 widths above zero: not a plateau call.
    ([(4.0, 0.03, 0.02), (8.0, 0.029, 0.02)], "undetermined"),
    ([(4.0, 0.30, 0.02)], "undetermined"),
])
def test_trend_classification(rows, want):
    per = tuple(_radius_row(*row) for row in rows)
    assert sim._classify_trend(per) == want


# -- defect reports -----------------------------------------------------------


def test_bounded_diffusion_defect_vanishes():
    girsanov = scalar_model("min(sqrt(abs(x1)),1)")
    cfg = SimConfig(steps_per_unit_time=256, paths=4_000,
                    radii=(4.0, 6.0, 8.0), master_seed=11, drift_mode="P")
    report = martingale_defect(girsanov, cfg)
    assert report.trend == "vanishing"
    assert report.drift_mode == "Q"  # pinned regardless of the input config
    assert "true martingale" in report.interpretation
    assert report.defect == report.estimate.per_radius[-1].p_hat


def test_brownian_defect_ci_covers_zero_by_radius_six():
    cfg = SimConfig(steps_per_unit_time=256, paths=10_000, radii=(4.0, 6.0),
                    master_seed=SEED)
    report = martingale_defect(BROWNIAN, cfg)
    assert report.trend == "vanishing"
    assert report.estimate.per_radius[-1].exit_count == 0


def test_cubic_growth_defect_plateaus():
    cubic = MarketModel(
        d=3, m=3, T=1.0, x0=(1.0, 0.0, 0.0), S0=(1.0,) * 3, b=("0",) * 3,
        a=tuple(tuple("(max(norm,1))^3" if i == j else "0" for j in range(3))
                for i in range(3)),
        mu=())
    cfg = SimConfig(steps_per_unit_time=512, paths=4_000,
                    radii=(4.0, 8.0, 16.0, 32.0), master_seed=5)
    report = martingale_defect(cubic, cfg)
    assert report.trend == "plateau"
    assert report.defect > 0.1
    assert "strict" in report.interpretation


def test_asset_defect_flags_the_bubble_regime():
    bubble = MarketModel(d=1, m=1, T=1.0, x0=(1.0,), S0=(1.0,), b=("0",),
                         a=(("(max(abs(x1),1))^2",),), mu=())
    cfg = SimConfig(steps_per_unit_time=512, paths=4_000,
                    radii=(4.0, 8.0, 24.0, 32.0), master_seed=3)
    report = asset_defect(bubble, 1, cfg)
    assert report.trend == "plateau"
    assert report.asset == 1
    assert report.drift_mode == "Q_shift"
    assert "bubble" in report.interpretation


def test_asset_defect_vanishes_for_slow_growth():
    mild = MarketModel(d=1, m=1, T=1.0, x0=(1.0,), S0=(1.0,), b=("0",),
                       a=(("(max(abs(x1),1))^0.5",),), mu=())
    cfg = SimConfig(steps_per_unit_time=512, paths=4_000,
                    radii=(4.0, 8.0, 24.0, 32.0), master_seed=3)
    report = asset_defect(mild, 1, cfg)
    assert report.trend == "vanishing"


def test_asset_defect_for_driven_brownian_vanishes():
    cfg = SimConfig(steps_per_unit_time=128, paths=5_000, radii=(6.0, 8.0),
                    master_seed=2)
    report = asset_defect(BROWNIAN, 1, cfg)
    assert report.trend == "vanishing"


def test_asset_defect_checks_the_asset_index():
    cfg = SimConfig(steps_per_unit_time=8, paths=10, radii=(1.0,),
                    master_seed=1)
    with pytest.raises(DimensionMismatch):
        asset_defect(BROWNIAN, 2, cfg)
    with pytest.raises(DimensionMismatch):
        asset_defect(BROWNIAN, 0, cfg)


def test_defect_report_to_dict_round_trips():
    cfg = SimConfig(steps_per_unit_time=64, paths=500, radii=(4.0, 6.0),
                    master_seed=8)
    report = martingale_defect(BROWNIAN, cfg)
    blob = json.loads(json.dumps(report.to_dict()))
    assert blob["drift_mode"] == "Q"
    assert blob["asset"] is None
    assert blob["estimate"]["per_radius"][0]["radius"] == 4.0


# -- emit_paths ----------------------------------------------------------------


def test_emit_paths_header_only_when_count_zero():
    cfg = SimConfig(steps_per_unit_time=16, paths=10, radii=(4.0,),
                    master_seed=SEED)
    assert emit_paths(BROWNIAN, cfg, count=0) == "path_id,t,x1,S1\n"


def test_emit_paths_rows_and_endpoints():
    cfg = SimConfig(steps_per_unit_time=16, paths=10, radii=(4.0,),
                    master_seed=SEED)
    text = emit_paths(BROWNIAN, cfg, count=3, thin=5)
    lines = text.splitlines()
    # keep steps 0, 5, 10, 15 and the endpoint 16, per path
    assert len(lines) == 1 + 3 * 5
    assert lines[0] == "path_id,t,x1,S1"
    assert "\r" not in text and text.endswith("\n")
    first = lines[1].split(",")
    assert first == ["0", "0", "0", "1"]
    last = lines[5].split(",")
    assert last[0] == "0" and float(last[1]) == 1.0
    assert {row.split(",")[0] for row in lines[1:]} == {"0", "1", "2"}


def test_emit_paths_values_round_trip_at_full_precision():
    cfg = SimConfig(steps_per_unit_time=16, paths=4, radii=(4.0,),
                    master_seed=SEED)
    text = emit_paths(BROWNIAN, cfg, count=4)
    for row in text.splitlines()[1:]:
        for cell in row.split(",")[1:]:
            value = float(cell)
            assert format(value, ".17g") == cell


def test_emit_paths_frozen_model_constant_rows():
    frozen = MarketModel(d=1, m=1, T=1.0, x0=(0.5,), S0=(2.0,), b=("0",),
                         a=(("0",),), mu=())
    cfg = SimConfig(steps_per_unit_time=8, paths=2, radii=(4.0,),
                    master_seed=1)
    for row in emit_paths(frozen, cfg, count=2).splitlines()[1:]:
        cells = row.split(",")
        assert float(cells[2]) == 0.5
        assert float(cells[3]) == 2.0


def test_emit_paths_deterministic_and_seed_sensitive():
    base = dict(steps_per_unit_time=16, paths=10, radii=(4.0,))
    cfg = SimConfig(master_seed=SEED, **base)
    other = SimConfig(master_seed=SEED + 1, **base)
    one = emit_paths(BROWNIAN, cfg, count=2)
    assert one == emit_paths(BROWNIAN, cfg, count=2)
    assert one != emit_paths(BROWNIAN, other, count=2)


def test_emit_paths_validates_arguments():
    cfg = SimConfig(steps_per_unit_time=16, paths=2, radii=(4.0,),
                    master_seed=1)
    with pytest.raises(ValueError):
        emit_paths(BROWNIAN, cfg, count=3)
    with pytest.raises(ValueError):
        emit_paths(BROWNIAN, cfg, count=1, thin=0)
    with pytest.raises(ValueError):
        emit_paths(BROWNIAN, cfg, count=-1)


def test_emit_paths_multi_asset_columns():
    model = MarketModel(d=2, m=2, T=1.0, x0=(0.0, 0.0), S0=(1.0, 3.0),
                        b=("0", "0"), a=(("1", "0"), ("0", "1")), mu=())
    cfg = SimConfig(steps_per_unit_time=8, paths=2, radii=(4.0,),
                    master_seed=6)
    lines = emit_paths(model, cfg, count=1).splitlines()
    assert lines[0] == "path_id,t,x1,x2,S1,S2"
    start = lines[1].split(",")
    assert start[-2:] == ["1", "3"]
