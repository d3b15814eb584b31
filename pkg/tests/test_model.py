import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udn_handover.model import (
    ConfigError,
    ScenarioConfig,
    TierParams,
    biased_rss_metric,
    db_to_linear,
    dbm_to_watts,
    dumps_config,
    loads_config,
    normalize_units,
    pair_geometry,
    table_one,
    watts_to_dbm,
)


def raw_config(**user):
    return {
        "tiers": {
            "0": {"id": "m", "lambda_per_km2": 3, "power_dbm": 46, "bias_db": 0, "height_m": 40},
            "1": {"id": "s", "lambda_per_km2": 10, "power_dbm": 24, "bias_db": 0, "height_m": 25},
        },
        "user": {"height_m": 1.5, "velocity_kmh": 30, "eta": 4, **user},
    }


def test_unit_conversions():
    assert dbm_to_watts(46) == pytest.approx(39.810717055349734, rel=1e-12)
    assert db_to_linear(0) == 1.0
    cfg = normalize_units(raw_config())
    assert cfg.velocity == pytest.approx(30 / 3.6)
    assert cfg.tiers[0].power == pytest.approx(39.8107, abs=1e-4)
    assert cfg.tiers[1].lam == pytest.approx(10e-6)


@pytest.mark.parametrize("field,value,name", [
    ("eta", 2.0, "user.eta"),
    ("eta", 1.5, "user.eta"),
    ("height_m", -1.0, "user.height_m"),
])
def test_rejects_bad_user_values(field, value, name):
    with pytest.raises(ConfigError) as exc:
        normalize_units(raw_config(**{field: value}))
    assert exc.value.field == name


@pytest.mark.parametrize("key,value", [
    ("lambda_per_km2", 0), ("lambda_per_km2", -2), ("height_m", -3), ("bias", 0), ("power_w", -1),
])
def test_rejects_bad_tier_values(key, value):
    raw = raw_config()
    tier = raw["tiers"]["1"]
    if key == "power_w":
        del tier["power_dbm"]
    if key == "bias":
        del tier["bias_db"]
    tier[key] = value
    with pytest.raises(ConfigError) as exc:
        normalize_units(raw)
    assert exc.value.field == f"tiers.1.{key}"


def test_rejects_non_finite():
    raw = raw_config()
    raw["tiers"]["0"]["power_dbm"] = float("nan")
    with pytest.raises(ConfigError, match="tiers.0.power_dbm"):
        normalize_units(raw)


@given(st.floats(-50, 80))
def test_dbm_round_trip(dbm):
    assert abs(watts_to_dbm(dbm_to_watts(dbm)) - dbm) < 1e-10


def test_config_text_round_trip():
    cfg = table_one(7.0)
    again = loads_config(dumps_config(cfg))
    assert again.user_height == cfg.user_height
    for a, b in zip(again.tiers, cfg.tiers):
        assert a.id == b.id
        assert a.lam == pytest.approx(b.lam, rel=1e-12)
        assert a.power == pytest.approx(b.power, rel=1e-10)
        assert a.bias == pytest.approx(b.bias, rel=1e-10)
    assert again.sim == cfg.sim
    assert again.seed == cfg.seed


def test_shipped_defaults_are_table_one():
    cfg = table_one()
    m, s = cfg.tiers
    assert (m.id, s.id) == ("m", "s")
    assert watts_to_dbm(m.power) == pytest.approx(46)
    assert watts_to_dbm(s.power) == pytest.approx(24)
    assert m.lam * 1e6 == pytest.approx(3) and s.lam * 1e6 == pytest.approx(10)
    assert (m.height, s.height) == (40, 25)
    assert cfg.velocity * 3.6 == pytest.approx(30)
    assert cfg.eta == 4


def test_pair_geometry_table_one(table1):
    g = pair_geometry(table1, 1, 0)
    assert g.beta_kj == pytest.approx(0.07943282347242814, rel=1e-12)
    assert g.h_uj == pytest.approx(38.5)
    assert g.h_uk == pytest.approx(23.5)
    g = pair_geometry(table1, 0, 1)
    # macro threshold is positive here even though h_um > h_us
    assert g.L_k == pytest.approx(math.sqrt(23.5**2 * 10**1.1 - 38.5**2))
    assert g.L_j == 0.0
    assert g.lambda_kj == pytest.approx(3 / (3 + 10 * 10**-1.1))


def test_pair_geometry_same_tier(table1):
    g = pair_geometry(table1, 0, 0)
    assert g.beta_kj == 1.0 and g.L_k == 0.0 and g.L_j == 0.0


def test_threshold_matches_height_rule_when_macro_closer():
    cfg = table_one(35.0)  # h_um = 5 <= h_us = 10
    g = pair_geometry(cfg, 0, 1)
    assert g.L_k == pytest.approx(math.sqrt(10**2 * g.beta_kj - 5**2))
    assert g.L_j == 0.0


@given(
    st.floats(20, 50), st.floats(20, 50), st.floats(-10, 10), st.floats(-10, 10),
    st.floats(2.01, 6), st.floats(0, 100), st.floats(0, 100), st.floats(0, 100),
)
def test_beta_reciprocity(p1, p2, b1, b2, eta, h1, h2, hu):
    cfg = ScenarioConfig(
        (TierParams("a", 1e-6, dbm_to_watts(p1), db_to_linear(b1), h1),
         TierParams("b", 1e-6, dbm_to_watts(p2), db_to_linear(b2), h2)),
        user_height=hu, eta=eta)
    g1, g2 = pair_geometry(cfg, 0, 1), pair_geometry(cfg, 1, 0)
    assert abs(g1.beta_kj * g2.beta_kj - 1) < 1e-12
    assert g1.L_k == 0.0 or g1.L_j == 0.0


def test_metric_examples(table1):
    m, s = table1.tiers
    user = (0.0, 0.0, 1.5)
    macro = biased_rss_metric(user, (100.0, 0.0, 40.0), m, 4)
    small = biased_rss_metric(user, (30.0, 0.0, 25.0), s, 4)
    assert (30**2 + 23.5**2) >= 10**-1.1 * (100**2 + 38.5**2)
    assert macro < small  # macro wins
    near = biased_rss_metric(user, (10, 0, 25), s, 4)
    far = biased_rss_metric(user, (20, 0, 25), s, 4)
    assert near < far
    assert biased_rss_metric(user, (0, 0, 1.5), s, 4) == 0.0


def test_metric_order_matches_received_power():
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        p = dbm_to_watts(rng.uniform(20, 50, 2))
        b = db_to_linear(rng.uniform(-10, 10, 2))
        eta = rng.uniform(2.05, 6)
        h = rng.uniform(0, 100, 2)
        tiers = [TierParams(str(i), 1e-6, p[i], b[i], h[i]) for i in range(2)]
        user = (*rng.uniform(-500, 500, 2), rng.uniform(0, 50))
        bss = [(*rng.uniform(-500, 500, 2), t.height) for t in tiers]
        metric = [biased_rss_metric(user, bs, t, eta) for bs, t in zip(bss, tiers)]
        power = [t.weight * math.dist(user, bs) ** -eta for bs, t in zip(bss, tiers)]
        if not math.isclose(power[0], power[1], rel_tol=1e-9):
            assert (metric[0] < metric[1]) == (power[0] > power[1])


def test_config_rejects_wrong_tier_ids():
    t = TierParams("a", 1e-6, 1.0)
    with pytest.raises(ConfigError):
        ScenarioConfig((t, t))


def test_flattened(table1):
    flat = table1.flattened()
    assert flat.user_height == 0 and all(t.height == 0 for t in flat.tiers)
    assert replace(flat, user_height=1.0).user_height == 1.0
