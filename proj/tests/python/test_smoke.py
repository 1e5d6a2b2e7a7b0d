import json
import math

import pytest

import arena_sim


def test_version():
    assert arena_sim.__version__.count(".") == 2


def test_ads_and_pdms():
    assert arena_sim.ads(0.1684, 0.7615) == pytest.approx(0.1282, abs=5e-5)
    assert arena_sim.pdms_frame(1, 1, 1.0, 1, 1) == pytest.approx(1.0)
    assert arena_sim.pdms_frame(0, 1, 1.0, 1, 1) == 0.0
    assert arena_sim.pdms_frame(1, 1, 0.5, 1, 1) == pytest.approx(9.5 / 12.0)
    with pytest.raises(arena_sim.ValidationError):
        arena_sim.ads(1.5, 0.5)


def test_fourier_embed_layout():
    emb = arena_sim.fourier_embed([0.0, 1.0], 4)
    assert len(emb) == 16
    assert emb[:2] == [0.0, 1.0]


def test_projection():
    K = [[500.0, 0.0, 200.0], [0.0, 500.0, 112.0], [0.0, 0.0, 1.0]]
    I = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    u, v = arena_sim.project_point([1.0, 0.5, 10.0], K, I, [0.0, 0.0, 0.0])
    assert (u, v) == pytest.approx((250.0, 137.0), abs=1e-9)
    assert arena_sim.project_point([0.0, 0.0, -2.0], K, I, [0.0, 0.0, 0.0]) is None


def test_sat_separation():
    a = (0.0, 0.0, 0.0, 4.0, 2.0)
    assert arena_sim.sat_separation(a, (10.0, 0.0, 0.0, 4.0, 2.0)) == pytest.approx(6.0)
    assert arena_sim.sat_separation(a, (1.0, 0.0, 0.0, 4.0, 2.0)) < 0.0


def test_interpolate():
    waypoints = [(float(k + 1), 0.0, 0.0) for k in range(6)]
    samples = arena_sim.interpolate(waypoints)
    assert len(samples) == 31
    assert samples[5] == (1.0, 0.0, 0.0)
    assert samples[7][0] == pytest.approx(1.4)
    with pytest.raises(arena_sim.ValidationError):
        arena_sim.interpolate(waypoints[:5])


def test_config_round_trip():
    text = arena_sim.default_config()
    assert json.loads(arena_sim.validate_config(text)) == json.loads(text)
    assert len(arena_sim.config_hash(text)) == 64
    bad = json.loads(text)
    bad["time_limit"] = -1
    with pytest.raises(arena_sim.ValidationError, match="time_limit"):
        arena_sim.validate_config(json.dumps(bad))


def test_short_episode():
    cfg = json.loads(arena_sim.default_config())
    cfg["time_limit"] = 3.0
    result = arena_sim.run_episode(json.dumps(cfg))
    report = json.loads(result["report"])
    assert report["termination"]["kind"] == "TIME_LIMIT"
    assert result["exit_code"] == 14
    assert 0.0 <= report["route_completion"] <= 1.0
    assert not math.isnan(report["ads"])
    assert result["log"].count("\n") > 10
