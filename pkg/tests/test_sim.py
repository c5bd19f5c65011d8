import hashlib

import numpy as np
import pytest

from sitetracker.exceptions import InvalidConfig
from sitetracker.sim import generate_scenario
from sitetracker.sim.generate import SOURCE_CLUTTER
from sitetracker.sim.log import format_log, read_log, write_log
from sitetracker.sim.presets import PRESETS

QUIET = {"camera": {"sigma": 0.0, "clutter_rate": 0.0, "p_d": 1.0},
         "radio": {"sigma": 0.0}, "imu": {"step_error_rate": 0.0, "heading_jitter_deg": 0.0,
                                          "frequency_noise": 0.0}}


def scenario(**kw):
    base = {"n_scans": 60}
    base.update(kw)
    return generate_scenario(base)


def test_stationary_agent_seen_exactly():
    sc = scenario(agents={"n_agents": 1, "n_devices": 1, "paths": [[[5.0, 4.0]]]}, **QUIET)
    for s in sc.scans:
        np.testing.assert_array_equal(s.camera, [[5.0, 4.0]])


def test_seeded_logs_are_byte_identical():
    a = format_log(scenario(seed=4))
    b = format_log(scenario(seed=4))
    assert hashlib.sha256(a.encode()).hexdigest() == hashlib.sha256(b.encode()).hexdigest()
    assert format_log(scenario(seed=5)) != a


def test_default_radio_shape():
    sc = generate_scenario(PRESETS["default"](n_scans=1800))
    assert sc.truth.device_ids == [0, 1, 2, 3, 4]
    for s in sc.scans:
        assert sorted(s.radio) == [0, 1, 2, 3, 4]
        assert all(len(v) == 12 for v in s.radio.values())


def test_occluded_agent_is_invisible():
    sc = scenario(agents={"n_agents": 1, "n_devices": 1, "paths": [[[5.0, 4.0]]]},
                  occlusions=[{"rect": [4, 3, 6, 5], "start": 10, "end": 20}], **QUIET)
    counts = [len(s.camera) for s in sc.scans]
    assert counts[10:20] == [0] * 10 and counts[9] == 1 and counts[20] == 1


def test_detection_probability_concentrates():
    sc = scenario(n_scans=1250, camera={"p_d": 0.9, "clutter_rate": 0.0})
    inside = sum(len(s.camera) for s in sc.scans)
    assert abs(inside / (1250 * 8) - 0.9) < 0.01


def test_clutter_rate_concentrates():
    sc = scenario(n_scans=10_000, agents={"n_agents": 1, "n_devices": 1},
                  camera={"clutter_rate": 2.0})
    n = sum(int((src == SOURCE_CLUTTER).sum()) for src in sc.camera_sources)
    assert abs(n / 10_000 - 2.0) < 0.05


def test_noiseless_rss_matches_path_loss():
    sc = scenario(n_scans=3, agents={"n_agents": 1, "n_devices": 1, "paths": [[[10.0, 0.0]]]},
                  area=[0, 20, 0, 10],
                  radio={"layout": "explicit", "positions": [[0.0, 0.0]], "n_aps": 1,
                         "ref_power": [-40.0, -40.0], "exponent": [2.0, 2.0], "sigma": 0.0})
    assert sc.scans[0].radio[0][0] == pytest.approx(-60.0, abs=1e-12)


def test_radio_period_and_noise_level():
    sc = scenario(n_scans=10, radio={"period": 2})
    assert [bool(s.radio) for s in sc.scans] == [t % 2 == 0 for t in range(10)]
    sc = scenario(n_scans=850)
    res = np.concatenate([s.radio[d] - sc.radio_model.expected(sc.truth.positions[s.t, d])
                          for s in sc.scans for d in s.radio])
    assert len(res) >= 10_000 and abs(res.std() - 3.2) < 0.1


def test_imu_noiseless_and_flip_rate():
    sc = scenario(n_scans=200, **QUIET)
    tr = sc.truth
    for s in sc.scans:
        for d, ob in s.steps.items():
            assert ob.step == tr.stepped[s.t, d]
            if ob.step:
                assert ob.heading == pytest.approx(tr.heading[s.t, d], abs=1e-12)
                assert ob.frequency == pytest.approx(tr.frequency[s.t, d], abs=1e-12)
    sc = scenario(n_scans=2000, agents={"pause_prob": 0.0})
    flips = [ob.step != sc.truth.stepped[s.t, d] for s in sc.scans for d, ob in s.steps.items()]
    assert len(flips) >= 10_000 and abs(np.mean(flips) - 0.084) < 0.01


def test_constant_heading_bias():
    sc = scenario(n_scans=80, imu={"heading_bias_deg": [30.0, 30.0], "heading_jitter_deg": 0.0,
                                   "step_error_rate": 0.0})
    for s in sc.scans:
        for d, ob in s.steps.items():
            diff = np.angle(np.exp(1j * (ob.heading - sc.truth.heading[s.t, d] - np.deg2rad(30))))
            assert abs(diff) < 1e-9


def test_truth_integrates_from_step_vectors():
    tr = scenario(n_scans=300).truth
    u = np.stack([np.cos(tr.heading), np.sin(tr.heading)], -1)
    delta = (tr.stepped * tr.step_length)[..., None] * u
    rebuilt = tr.positions[0] + np.cumsum(delta[1:], axis=0)
    np.testing.assert_allclose(rebuilt, tr.positions[1:], atol=1e-9)


def test_log_round_trip(tmp_path):
    sc = scenario(n_scans=20)
    path = tmp_path / "s.log"
    write_log(sc, path)
    lg = read_log(path)
    assert len(lg.scans) == 20
    for a, b in zip(sc.scans, lg.scans):
        np.testing.assert_allclose(np.sort(a.camera, 0), np.sort(b.camera, 0), atol=1e-9)
        for d in a.radio:
            np.testing.assert_allclose(a.radio[d], b.radio[d], atol=1e-9)
        for d in a.steps:
            assert a.steps[d].step == b.steps[d].step
    np.testing.assert_allclose(lg.truth_positions, sc.truth.positions, atol=1e-9)
    assert lg.device_ids == sc.truth.device_ids
    np.testing.assert_allclose(lg.ap_positions, sc.radio_model.positions, atol=1e-9)
    path.write_text(path.read_text() + "3 BOGUS 1\n")
    with pytest.raises(InvalidConfig):
        read_log(path)


def test_invalid_scenarios():
    with pytest.raises(InvalidConfig):
        generate_scenario({"agents": {"n_agents": 2, "n_devices": 3}})
    with pytest.raises(InvalidConfig):
        generate_scenario({"no_such_key": 1})
    with pytest.raises(InvalidConfig):
        generate_scenario({"agents": {"n_agents": 1, "n_devices": 1, "paths": [[[50.0, 1.0]]]}})
