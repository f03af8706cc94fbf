"""Energy budget arithmetic, presets, and profile file round-trips."""

import dataclasses

import pytest

from scgvitals import power
from scgvitals.errors import ParameterError, ValidationError


def test_idle_only():
    p = power.PowerProfile(idle_power_mw=0.77, tasks=())
    assert power.average_power(p) == 0.77


def test_single_task_arithmetic():
    # 100 uJ every second is 0.1 mW on top of a zero idle floor
    p = power.PowerProfile(0.0, (power.TaskSpec("t", 1.0, 100.0),))
    assert power.average_power(p) == pytest.approx(0.1)


def test_from_power_duration_form():
    # 5 mW for 20 ms is 100 uJ
    t = power.TaskSpec.from_power("t", 1.0, 5.0, 20.0)
    assert t.energy_uj == pytest.approx(100.0)


def test_wearable_preset_average_power():
    # sum of the task-table terms, frozen by hand:
    # 0.77 + 144.6/2000 + 108/120000 + 18.8/2000 + 18.8/30000
    #      + 1290/1800000 + 14/1000 + 20.9/120000
    expected = 0.8681175
    avg = power.average_power(power.wearable_profile())
    assert avg == pytest.approx(expected, abs=1e-7)


def test_wearable_lifetime():
    life = power.battery_lifetime(power.wearable_profile())
    assert life == pytest.approx(370.0 / 0.8681175, abs=1e-6)
    assert abs(life - 432.0) / 432.0 < 0.02


def test_lifetime_identity_and_linearity():
    p = power.wearable_profile()
    assert power.battery_lifetime(p) * power.average_power(p) == pytest.approx(370.0)
    doubled = dataclasses.replace(p, battery_capacity_mah=200.0)
    assert power.battery_lifetime(doubled) == pytest.approx(
        2 * power.battery_lifetime(p)
    )


def test_sleep_components():
    assert power.sleep_power_mw() == pytest.approx(0.152)
    assert set(power.SLEEP_COMPONENTS_MW) == {"radio_mcu", "pmic", "accelerometer"}


def test_curve_monotone_and_consistent():
    p = power.wearable_profile()
    curve = power.lifetime_curve(p, [2, 10, 30, 60])
    hours = [h for _, h in curve]
    assert hours == sorted(hours)
    assert curve[2][1] == pytest.approx(power.battery_lifetime(p))
    # frozen endpoints of the pure task-table model
    assert curve[0][1] == pytest.approx(421.34, abs=0.01)
    assert curve[3][1] == pytest.approx(426.39, abs=0.01)


def test_curve_limit_is_profile_without_nn():
    p = power.wearable_profile()
    no_nn = dataclasses.replace(
        p, tasks=tuple(t for t in p.tasks if t.name != power.NN_TASK)
    )
    limit = power.battery_lifetime(no_nn)
    far = power.lifetime_curve(p, [10_000_000])[0][1]
    assert far == pytest.approx(limit, rel=1e-6)
    assert far < limit


def test_average_power_additive_and_monotone():
    base = power.PowerProfile(0.5, (power.TaskSpec("a", 4.0, 80.0),))
    more = power.PowerProfile(
        0.5, (power.TaskSpec("a", 4.0, 80.0), power.TaskSpec("b", 2.0, 10.0))
    )
    assert power.average_power(more) == pytest.approx(
        power.average_power(base) + 10.0 / 2000.0
    )
    slower = power.PowerProfile(0.5, (power.TaskSpec("a", 8.0, 80.0),))
    assert power.average_power(slower) < power.average_power(base)


def test_validation():
    with pytest.raises(ValidationError):
        power.TaskSpec("t", 0.0, 1.0)
    with pytest.raises(ValidationError):
        power.TaskSpec("t", 1.0, -1.0)
    with pytest.raises(ValidationError):
        power.PowerProfile(-0.1, ())
    with pytest.raises(ValidationError):
        power.PowerProfile(0.1, (), battery_capacity_mah=0.0)
    with pytest.raises(ValidationError):
        power.PowerProfile(
            0.1, (power.TaskSpec("x", 1.0, 1.0), power.TaskSpec("x", 2.0, 1.0))
        )
    with pytest.raises(ParameterError):
        power.battery_lifetime(power.PowerProfile(0.0, ()))
    with pytest.raises(ValidationError):
        power.with_nn_stride(power.PowerProfile(0.1, ()), 30.0)
    with pytest.raises(ValidationError):
        power.lifetime_curve(power.wearable_profile(), [])


def test_profile_file_roundtrip(tmp_path):
    p = power.wearable_profile(stride_min=10.0)
    path = tmp_path / "p.toml"
    power.write_profile(path, p)
    assert power.read_profile(path) == p


def test_profile_file_schema_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("idle_power_mw = 0.5\nmystery = 1\n")
    with pytest.raises(ValidationError):
        power.read_profile(bad)
    bad.write_text("battery_voltage_v = 3.7\n")
    with pytest.raises(ValidationError):
        power.read_profile(bad)
    bad.write_text("idle_power_mw = [not toml\n")
    with pytest.raises(ValidationError):
        power.read_profile(bad)
    bad.write_text('idle_power_mw = 0.5\n[[task]]\nname = "x"\nperiod_s = 1.0\n')
    with pytest.raises(ValidationError):
        power.read_profile(bad)
