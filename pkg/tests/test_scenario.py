import numpy as np
import pytest

from ismkit.errors import FileFormatError
from ismkit.scenario import Impact, SyntheticScenario, Waypoint, load_scenario, simulate


def _write(tmp_path, text):
    path = tmp_path / "scenario.txt"
    path.write_text(text)
    return path


BASIC = """\
duration_s 1.0
roughness 0.5
waypoint 0 0 0 0
waypoint 0.05 0 0 0.05
"""


class TestLoadScenario:
    def test_basic(self, tmp_path):
        scenario = load_scenario(_write(tmp_path, BASIC))
        assert scenario.duration_s == 1.0
        assert scenario.roughness == 0.5
        assert len(scenario.waypoints) == 2

    def test_unknown_key_reports_line(self, tmp_path):
        path = _write(tmp_path, "duration_s 1\nwhatever 3\nwaypoint 0 0 0 0\n")
        with pytest.raises(FileFormatError, match=r":2:"):
            load_scenario(path)

    def test_bad_impact_reports_line(self, tmp_path):
        path = _write(tmp_path, "duration_s 1\nimpact 0.5\nwaypoint 0 0 0 0\n")
        with pytest.raises(FileFormatError, match=r":2:"):
            load_scenario(path)

    def test_missing_waypoints_rejected(self, tmp_path):
        with pytest.raises(FileFormatError):
            load_scenario(_write(tmp_path, "duration_s 1\n"))

    def test_zero_speed_segment_rejected(self, tmp_path):
        path = _write(tmp_path, "duration_s 1\nwaypoint 0 0 0 0\nwaypoint 1 0 0 0\n")
        with pytest.raises(FileFormatError):
            load_scenario(path)


class TestSimulate:
    def test_zero_speed_silent_and_stationary(self):
        scenario = SyntheticScenario(
            duration_s=0.5,
            waypoints=(Waypoint(np.zeros(3), 0.0),),
            roughness=1.0)
        vibration, poses = simulate(scenario, seed=1)
        for ch in vibration.channels:
            assert np.max(np.abs(ch.samples)) == 0.0
        positions = np.array([p.position for p in poses])
        assert np.all(positions == positions[0])

    def test_doubling_speed_doubles_rms(self):
        def scenario_with(speed):
            # path long enough that motion spans the whole duration either way
            return SyntheticScenario(
                duration_s=1.0,
                waypoints=(Waypoint(np.zeros(3), 0.0),
                           Waypoint(np.array([10.0, 0.0, 0.0]), speed)),
                roughness=1.0)

        slow, _ = simulate(scenario_with(0.05), seed=3)
        fast, _ = simulate(scenario_with(0.10), seed=3)
        rms_slow = np.sqrt(np.mean(slow.channels[0].samples ** 2))
        rms_fast = np.sqrt(np.mean(fast.channels[0].samples ** 2))
        assert rms_fast == pytest.approx(2 * rms_slow, rel=1e-9)

    def test_seed_determinism(self):
        scenario = SyntheticScenario(
            duration_s=0.5,
            waypoints=(Waypoint(np.zeros(3), 0.0),
                       Waypoint(np.array([0.1, 0.0, 0.0]), 0.05)),
            impacts=(Impact(0.1, 1.0, 0.02),))
        a, poses_a = simulate(scenario, seed=42)
        b, poses_b = simulate(scenario, seed=42)
        for ca, cb in zip(a.channels, b.channels):
            assert np.array_equal(ca.samples, cb.samples)
        assert [p.t_us for p in poses_a] == [p.t_us for p in poses_b]

    def test_different_seed_differs(self):
        scenario = SyntheticScenario(
            duration_s=0.5,
            waypoints=(Waypoint(np.zeros(3), 0.0),
                       Waypoint(np.array([0.1, 0.0, 0.0]), 0.05)))
        a, _ = simulate(scenario, seed=1)
        b, _ = simulate(scenario, seed=2)
        assert not np.array_equal(a.channels[0].samples, b.channels[0].samples)

    def test_impact_adds_energy_after_onset(self):
        scenario = SyntheticScenario(
            duration_s=0.5,
            waypoints=(Waypoint(np.zeros(3), 0.0),),
            impacts=(Impact(0.25, 2.0, 0.02),))
        vibration, _ = simulate(scenario, seed=0)
        x = vibration.channels[0].samples
        n = len(x)
        assert np.max(np.abs(x[:n // 2])) == 0.0
        assert np.max(np.abs(x[n // 2:])) > 0.5

    def test_pose_rate(self):
        scenario = SyntheticScenario(duration_s=1.0,
                                     waypoints=(Waypoint(np.zeros(3), 0.0),))
        _, poses = simulate(scenario, seed=0)
        assert len(poses) == 120
        dts = np.diff([p.t_us for p in poses])
        assert np.all(np.abs(dts - 1e6 / 120) <= 1)
