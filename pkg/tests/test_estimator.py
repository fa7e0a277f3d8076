import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magpitch.estimator import (
    EkfNoiseConfig,
    accel_jacobian,
    accel_model,
    estimate,
    initial_estimate,
    predict,
    update_accel,
    update_camera,
)
from magpitch.params import GRAVITY

CFG = EkfNoiseConfig()
DT = 0.02


def _truth(t):
    """Smooth scripted pitch motion and its rate."""
    return 0.5 + 0.2 * np.sin(0.5 * t), 0.1 * np.cos(0.5 * t)


def _scripted_run(seed, camera_every=50, bias=0.05, duration=30.0, cfg=CFG):
    """Gyro propagation at 50 Hz with optional camera updates; returns errors and bias history."""
    rng = np.random.default_rng(seed)
    est = initial_estimate(_truth(0.0)[0], cfg)
    errors, biases = [], []
    for k in range(1, int(round(duration / DT)) + 1):
        _, omega = _truth((k - 1) * DT)
        est = predict(est, omega + bias + rng.normal(0, 0.02), DT, cfg)
        theta, _ = _truth(k * DT)
        if camera_every and k % camera_every == 0:
            est = update_camera(est, theta + rng.normal(0, np.deg2rad(0.5)), cfg)
        errors.append(est.theta_hat - theta)
        biases.append(est.bias_hat)
    return np.array(errors), np.array(biases)


def _min_eig(P):
    return np.linalg.eigvalsh(P).min()


def test_config_rejects_negative():
    with pytest.raises(ValueError):
        EkfNoiseConfig(accel_meas_std=-0.1)


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def test_predict_arithmetic():
    est = predict(initial_estimate(0.0, CFG), 0.1, 0.02, CFG)
    assert est.theta_hat == pytest.approx(0.002, abs=1e-15)
    assert est.bias_hat == 0.0


def test_predict_bias_cancelled_input():
    est = initial_estimate(0.4, CFG, bias0=0.03)
    assert predict(est, 0.03, DT, CFG).theta_hat == 0.4


def test_predict_covariance_propagation():
    est = initial_estimate(0.0, CFG)
    F = np.array([[1.0, -DT], [0.0, 1.0]])
    Q = np.diag([CFG.process_theta_std**2, CFG.process_bias_std**2])
    np.testing.assert_allclose(predict(est, 0.0, DT, CFG).covariance, F @ est.covariance @ F.T + Q, rtol=1e-14)


@given(y=st.floats(-5, 5), dt=st.floats(1e-4, 0.1))
def test_predict_trace_grows(y, dt):
    est = initial_estimate(0.2, CFG)
    assert np.trace(predict(est, y, dt, CFG).covariance) > np.trace(est.covariance)


def test_predict_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        predict(initial_estimate(0.0, CFG), 0.0, 0.0, CFG)


# ---------------------------------------------------------------------------
# accelerometer update
# ---------------------------------------------------------------------------


def test_accel_zero_innovation():
    est = initial_estimate(0.3, CFG)
    ax, az = accel_model(0.3)
    new = update_accel(est, ax, az, CFG)
    assert new.theta_hat == pytest.approx(0.3, abs=1e-15)
    assert new.bias_hat == pytest.approx(0.0, abs=1e-15)
    assert np.trace(new.covariance) < np.trace(est.covariance)
    assert new.status == "accel"


def test_accel_jacobian_fd_at_random_angles():
    rng = np.random.default_rng(17)
    h = 1e-6
    for theta in rng.uniform(0, np.pi / 2, size=100):
        fd = (accel_model(theta + h) - accel_model(theta - h)) / (2 * h)
        H = accel_jacobian(theta)
        assert np.linalg.norm(H[:, 0] - fd) <= 1e-6 * np.linalg.norm(fd)
        np.testing.assert_array_equal(H[:, 1], 0.0)


def test_accel_jacobian_example():
    fd = (accel_model(0.3 + 1e-6) - accel_model(0.3 - 1e-6)) / 2e-6
    np.testing.assert_allclose(accel_jacobian(0.3)[:, 0], fd, rtol=1e-6)


def test_accel_outlier_gated():
    est = initial_estimate(0.3, CFG)
    ax, az = 3 * accel_model(0.3)
    new = update_accel(est, ax, az, CFG)
    assert new.status == "gated"
    assert (new.theta_hat, new.bias_hat) == (est.theta_hat, est.bias_hat)
    np.testing.assert_array_equal(new.covariance, est.covariance)


def test_accel_gate_disabled():
    est = initial_estimate(0.3, CFG)
    new = update_accel(est, *(3 * accel_model(0.3)), CFG, gate=None)
    assert new.status == "accel"


def test_accel_pulls_toward_measurement():
    est = initial_estimate(0.3, CFG)
    new = update_accel(est, *accel_model(0.35), CFG)
    assert 0.3 < new.theta_hat < 0.35


# ---------------------------------------------------------------------------
# camera update
# ---------------------------------------------------------------------------


def test_camera_zero_innovation():
    est = initial_estimate(0.3, CFG)
    new = update_camera(est, 0.3, CFG)
    assert new.theta_hat == 0.3
    assert np.trace(new.covariance) < np.trace(est.covariance)


def test_camera_convergence_noiseless():
    cfg = EkfNoiseConfig(camera_meas_std=np.deg2rad(0.5))
    est = initial_estimate(0.0, cfg)
    truth = 0.4
    for _ in range(10):
        est = update_camera(est, truth, cfg)
    assert abs(est.theta_hat - truth) < 1e-4


def test_drift_then_correct():
    rng = np.random.default_rng(4)
    theta, bias = 0.5, 0.08
    est = initial_estimate(theta, CFG)
    for _ in range(50):  # 1 s of a stationary capsule with a biased gyro
        est = predict(est, bias + rng.normal(0, 0.02), DT, CFG)
    before = abs(est.theta_hat - theta)
    est = update_camera(est, theta, CFG)
    assert abs(est.theta_hat - theta) < before


def test_estimate_accessor():
    est = initial_estimate(0.25, CFG, bias0=0.01)
    assert estimate(est) == (0.25, 0.01)
    assert estimate(predict(est, 0.01, DT, CFG)) == (0.25, 0.01)


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------


def test_covariance_psd_random_interleavings():
    rng = np.random.default_rng(99)
    est = initial_estimate(0.5, CFG)
    worst = np.inf
    for _ in range(100_000):
        r = rng.random()
        if r < 0.6:
            est = predict(est, rng.normal(0, 1), rng.uniform(1e-4, 0.1), CFG)
        elif r < 0.9:
            th = rng.uniform(0, np.pi / 2)
            est = update_accel(est, *(accel_model(th) + rng.normal(0, 0.3, size=2)), CFG)
        else:
            est = update_camera(est, rng.uniform(0, np.pi / 2), CFG)
        P = est.covariance
        assert np.array_equal(P, P.T)
        worst = min(worst, _min_eig(P))
        assert np.isfinite(est.theta_hat)
    assert worst >= -1e-12


def test_bias_observability():
    _, biases = _scripted_run(seed=1, bias=0.05)
    assert abs(biases[-1] - 0.05) < 0.2 * 0.05


def test_drift_contrast():
    gyro_only, _ = _scripted_run(seed=2, camera_every=0)
    fused, _ = _scripted_run(seed=2, camera_every=50)
    # dead reckoning: error keeps growing at least linearly in time
    e = np.abs(gyro_only)
    t10, t20, t30 = 499, 999, 1499
    assert e[t20] >= 1.8 * e[t10] and e[t30] >= 2.7 * e[t10]
    # 1 Hz camera updates keep the error bounded
    rms = np.sqrt(np.mean(fused[t10:] ** 2))
    assert rms < np.deg2rad(2.0)
    assert np.max(np.abs(fused[t10:])) < np.deg2rad(5.0)


@given(
    theta=st.floats(0.05, 1.5),
    d_cam=st.floats(-1e-3, 1e-3),
    d_acc=st.floats(-1e-3, 1e-3),
)
def test_update_order_robustness(theta, d_cam, d_acc):
    est = predict(initial_estimate(theta, CFG), 0.0, DT, CFG)
    for _ in range(200):
        est = predict(est, 0.0, DT, CFG)
    a = accel_model(theta + d_acc)
    one = update_camera(update_accel(est, *a, CFG), theta + d_cam, CFG)
    two = update_accel(update_camera(est, theta + d_cam, CFG), *a, CFG)
    assert abs(one.theta_hat - two.theta_hat) < 1e-6
