import math

import pytest

from articnav.control import (TARGET_SPEED, Drivetrain, FirstOrderDelayPlant, IntegratorLagDelayPlant, PidController,
                              SpeedPlant, ZieglerNicholsError, ziegler_nichols_tune)
from articnav.envmdp import ZN_GAINS


def test_first_call_has_no_derivative_kick():
    pid = PidController(1.0, 0.0, 100.0, target_speed=1.0)
    assert pid(0.5, 0.1) == pytest.approx(0.5)


def test_output_is_clamped_and_integrator_frozen_while_saturated():
    pid = PidController(10.0, 5.0, 0.0, target_speed=8.0, output_limit=2.0)
    for _ in range(50):
        assert pid(0.0, 0.05) == 2.0
    assert pid.integral == 0.0


def test_integrator_clamped_to_limit():
    pid = PidController(0.0, 1.0, 0.0, target_speed=1.0, output_limit=100.0, integral_limit=0.3)
    for _ in range(100):
        pid(0.0, 0.1)
    assert pid.integral == pytest.approx(0.3)


def test_non_positive_dt_rejected():
    with pytest.raises(ValueError):
        PidController(1, 0, 0)(0.0, 0.0)


def test_drivetrain_delays_then_lags():
    d = Drivetrain(lag=0.15, delay=0.1)
    out = [d.step(1.0, 0.05) for _ in range(4)]
    assert out[0] == 0.0 and out[1] == 0.0
    assert out[2] == pytest.approx(1 - math.exp(-0.05 / 0.15))


def test_zn_recovers_first_order_delay_plant():
    plant = FirstOrderDelayPlant(1.0, 2.0, 0.5)
    ku, tu = plant.ultimate()
    res = ziegler_nichols_tune(plant, dt=0.002, window=40)
    assert res.ku == pytest.approx(ku, rel=0.05)
    assert res.tu == pytest.approx(tu, rel=0.05)
    assert res.kp == pytest.approx(0.6 * res.ku)
    assert res.ki == pytest.approx(2 * res.kp / res.tu)
    assert res.kd == pytest.approx(res.kp * res.tu / 8)


def test_zn_recovers_linear_speed_plant():
    plant = IntegratorLagDelayPlant()
    ku, tu = plant.ultimate()
    res = ziegler_nichols_tune(plant, dt=0.005, window=20)
    assert res.ku == pytest.approx(ku, rel=0.05)
    assert res.tu == pytest.approx(tu, rel=0.05)


def test_zn_fails_without_oscillation():
    with pytest.raises(ZieglerNicholsError):
        ziegler_nichols_tune(FirstOrderDelayPlant(1.0, 1.0, 0.0), dt=0.05, window=20)


def test_frozen_gains_match_tuning_of_default_drivetrain():
    res = ziegler_nichols_tune(SpeedPlant(), dt=0.05, setpoint=TARGET_SPEED, y0=TARGET_SPEED - 0.01)
    assert (res.kp, res.ki, res.kd) == pytest.approx(ZN_GAINS, rel=1e-9)


def test_speed_loop_settles_without_leaving_band():
    pid = PidController(*ZN_GAINS, TARGET_SPEED)
    plant = SpeedPlant()
    v, first_in = 0.0, None
    for i in range(600):
        v = plant.step(pid(v, 0.05), 0.05)
        inside = abs(v - TARGET_SPEED) <= 0.02 * TARGET_SPEED
        if inside and first_in is None:
            first_in = i
        if first_in is not None:
            assert inside
    assert first_in is not None and first_in * 0.05 <= 10.0
