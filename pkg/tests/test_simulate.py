"""Tests for the delayed reaction-diffusion simulator and pattern classification."""

import logging
import math

import numpy as np
import pytest

from turing_hopf.amplitude import predict_attractor
from turing_hopf.errors import BlowUp, ConfigError, WorkerError
from turing_hopf.model import load_model
from turing_hopf.simulate import (
    PatternKind,
    Perturbation,
    SimConfig,
    Trajectory,
    analyze_pattern,
    commensurate,
    mirror_mismatch,
    mirrored_pair,
    mode_coefficients,
    run,
    sweep,
)

_LOGGER = logging.getLogger(__name__)

LENGTH = 5.0

_BARE_MODEL = """
[model]
f = "{f}"
g = "{g}"
d1 = "0.1"
d2 = "1.0"
l = 5.0

[parameters]
p = 1.0
q = 1.0
"""


def _bare(f: str = "0", g: str = "0"):
    return load_model(_BARE_MODEL.format(f=f, g=g))


def _synthetic(u, t_end: float = 800.0, spacing: float = 0.5, points: int = 65) -> Trajectory:
    """Trajectory whose u deviation is u(t, x) and v stays at rest."""
    times = np.arange(0.0, t_end + spacing / 2, spacing)
    x = np.linspace(0.0, LENGTH * math.pi, points)
    values = np.zeros((times.size, 2, points))
    values[:, 0, :] = u(times[:, None], x[None, :])
    return Trajectory(times=times, x=x, values=values, dt=spacing, stride=1)


def test_config_from_model(model) -> None:
    """Test the step divides the delay and the model's perturbations are read."""
    mu = model.base
    cfg = SimConfig.from_model(model, mu)
    assert cfg.delay == pytest.approx(0.45)
    assert cfg.dt == pytest.approx(0.01)
    assert cfg.lag * cfg.dt == pytest.approx(cfg.delay, rel=1e-12)
    assert cfg.n_points == 256
    assert cfg.stride == 25
    assert [p.species for p in cfg.perturbations] == ["u", "v"]
    assert cfg.perturbations[0].k == 5.0

    cfg = SimConfig.from_model(model, mu, n_points=64, t_end=None, perturbation=[])
    assert cfg.n_points == 64
    assert cfg.t_end == 2000.0
    assert cfg.perturbations == ()
    assert cfg.to_dict()["perturbation"] == []


@pytest.mark.parametrize(
    "overrides",
    [
        {"n_pts": 64},
        {"perturbation": [{"species": "w"}]},
        {"perturbation": [{"shape": "tan"}]},
        {"perturbation": [{"k": 1.0, "phase": 0.5}]},
        {"dt_max": 0.0},
    ],
)
def test_config_errors(model, overrides) -> None:
    """Test invalid settings are input errors."""
    with pytest.raises(ConfigError) as info:
        SimConfig.from_model(model, model.base, **overrides)
    assert info.value.exit_code == 1


def test_step_must_divide_delay() -> None:
    """Test a step that does not divide the delay is rejected."""
    with pytest.raises(ConfigError):
        _ = SimConfig(dt=0.3, delay=1.0).lag


@pytest.mark.parametrize(("overrides"), [{"n_points": 32}, {"dt": 0.225}, {"stride": 0}])
def test_run_rejects_bad_grid(model, overrides) -> None:
    """Test coarse grids, oversized steps and empty strides are rejected before stepping."""
    cfg = SimConfig.from_model(model, model.base, t_end=1.0, **overrides)
    with pytest.raises(ConfigError):
        run(model, model.base, cfg)


def test_equilibrium_does_not_drift(model, point) -> None:
    """Test an unperturbed run stays at the equilibrium."""
    cfg = SimConfig.from_model(model, point.mu, n_points=64, t_end=20.0, stride=10, perturbation=[])
    tr = run(model, point.mu, cfg)
    assert tr.values.shape == (tr.times.size, 2, 64)
    assert np.abs(tr.deviations).max() < 1e-10
    np.testing.assert_allclose(tr.values[-1, 0], model.equilibrium[0])
    assert analyze_pattern(tr).kind is PatternKind.CONSTANT_STEADY


def test_pure_diffusion_decay() -> None:
    """Test a cosine mode decays at d1 (k/l)^2 without reactions."""
    m = _bare()
    cfg = SimConfig.from_model(
        m, m.base, n_points=64, t_end=50.0, stride=100, perturbation=[{"species": "u", "k": 1.0, "amplitude": 0.1}]
    )
    tr = run(m, m.base, cfg)
    a = mode_coefficients(tr.deviations[:, 0], 1)[:, 1]
    expected = 0.1 * np.exp(-0.1 / LENGTH**2 * tr.times)
    np.testing.assert_allclose(a, expected, rtol=1e-3)
    assert np.abs(tr.deviations[:, 1]).max() == 0.0


def _final_state(m, mu, dt: float, t_end: float, **overrides) -> np.ndarray:
    cfg = SimConfig.from_model(m, mu, dt=dt, t_end=t_end, stride=round(t_end / dt), **overrides)
    return run(m, mu, cfg).values[-1]


def _observed_orders(m, mu, steps: list[float], reference: float, t_end: float, **overrides) -> list[float]:
    exact = _final_state(m, mu, reference, t_end, **overrides)
    errors = [np.abs(_final_state(m, mu, dt, t_end, **overrides) - exact).max() for dt in steps]
    return [math.log2(coarse / fine) for coarse, fine in zip(errors, errors[1:])]


@pytest.mark.integration
def test_diffusion_step_is_second_order() -> None:
    """Test halving dt cuts the Crank-Nicolson error about fourfold."""
    m = _bare()
    perturbation = [{"species": "u", "k": 4.0, "amplitude": 0.1}, {"species": "v", "k": 2.0, "amplitude": 0.1}]
    orders = _observed_orders(m, m.base, [0.5, 0.25, 0.125], 1 / 128, 10.0, n_points=64, perturbation=perturbation)
    _LOGGER.debug("Crank-Nicolson orders: %s", orders)
    assert min(orders) >= 1.8, orders


@pytest.mark.integration
def test_delayed_run_is_first_order(model) -> None:
    """Test explicit delayed reactions converge at first order in dt."""
    mu = (0.45, 2.8)
    orders = _observed_orders(model, mu, [0.45 / 10, 0.45 / 20, 0.45 / 40], 0.45 / 640, 9.0, n_points=64)
    _LOGGER.debug("IMEX orders: %s", orders)
    assert all(0.8 <= order <= 1.5 for order in orders), orders


def test_blow_up() -> None:
    """Test a finite-time singularity is reported."""
    m = _bare(f="u^2")
    cfg = SimConfig.from_model(
        m, m.base, n_points=64, t_end=5.0, dt=0.01, perturbation=[{"species": "u", "k": 0.0, "amplitude": 1.0}]
    )
    with pytest.raises(BlowUp) as info:
        run(m, m.base, cfg)
    assert info.value.exit_code == 2
    assert 0.5 < info.value.details["t"] < 1.5


def test_mode_coefficients() -> None:
    """Test cosine coefficients of sampled modes."""
    x = np.linspace(0.0, LENGTH * math.pi, 129)
    values = 0.3 + 0.02 * np.cos(5 * x / LENGTH) - 0.01 * np.cos(2 * x / LENGTH)
    a = mode_coefficients(values, 6)
    np.testing.assert_allclose(a, [0.3, 0.0, -0.01, 0.0, 0.0, 0.02, 0.0], atol=1e-14)


def test_constant_steady() -> None:
    """Test a tail at rest is a constant steady state."""
    report = analyze_pattern(_synthetic(lambda t, x: 0.0 * t * x))
    assert report.kind is PatternKind.CONSTANT_STEADY
    assert report.frequencies == ()


def test_nonconstant_steady() -> None:
    """Test a frozen cosine profile is a nonconstant steady state."""
    report = analyze_pattern(_synthetic(lambda t, x: 0.01 * np.cos(5 * x / LENGTH) + 0.0 * t))
    assert report.kind is PatternKind.NONCONSTANT_STEADY
    assert report.dominant_mode == 5
    assert report.dominant_amplitude == pytest.approx(0.01)
    assert report.dominant_coefficient == pytest.approx(0.01)


def test_homogeneous_periodic() -> None:
    """Test a uniform oscillation is homogeneous periodic with its frequency."""
    report = analyze_pattern(_synthetic(lambda t, x: 0.01 * np.sin(1.3 * t) + 0.0 * x))
    assert report.kind is PatternKind.HOMOGENEOUS_PERIODIC
    assert report.frequencies[0] == pytest.approx(1.3, rel=0.02)
    assert report.periods[0] == pytest.approx(2 * math.pi / report.frequencies[0])


def test_inhomogeneous_periodic() -> None:
    """Test a steady Turing profile under a uniform oscillation is inhomogeneous periodic."""
    report = analyze_pattern(
        _synthetic(lambda t, x: 0.01 * np.sin(1.3 * t) + 0.01 * np.cos(5 * x / LENGTH))
    )
    assert report.kind is PatternKind.INHOMOGENEOUS_PERIODIC
    assert report.dominant_mode == 5
    assert report.frequencies[0] == pytest.approx(1.3, rel=0.02)


def test_quasi_periodic() -> None:
    """Test two incommensurate frequencies make a quasi-periodic pattern."""
    report = analyze_pattern(
        _synthetic(lambda t, x: 0.01 * np.sin(t) + 0.006 * np.sin(math.sqrt(5) * t) + 0.01 * np.cos(5 * x / LENGTH))
    )
    assert report.kind is PatternKind.QUASI_PERIODIC
    assert report.frequencies == pytest.approx((1.0, math.sqrt(5)), rel=0.02)


def test_commensurate() -> None:
    """Test small rational frequency ratios."""
    assert commensurate(1.0, 1.5)
    assert commensurate(2.0, 2.0 * 7 / 3)
    assert not commensurate(1.0, math.sqrt(5))
    assert not commensurate(1.0, math.pi)


def test_straddling_amplitude_is_undecided(caplog) -> None:
    """Test an amplitude at the inhomogeneity threshold is left undecided."""
    with caplog.at_level(logging.WARNING):
        report = analyze_pattern(_synthetic(lambda t, x: 1e-4 * np.cos(5 * x / LENGTH) + 0.0 * t))
    assert report.kind is PatternKind.UNDECIDED
    assert report.notes
    assert "Pattern undecided" in caplog.text


def test_short_tail() -> None:
    """Test a tail with too few samples is rejected."""
    with pytest.raises(ConfigError):
        analyze_pattern(_synthetic(lambda t, x: 0.0 * t * x, t_end=20.0))


def test_mirrored_config(model) -> None:
    """Test the mirror negates perturbations and reflects initial data through the equilibrium."""
    initial = np.full((2, 64), 0.3)
    cfg = SimConfig.from_model(model, model.base, n_points=64, initial=initial)
    mirror = cfg.mirrored(model.equilibrium)
    assert [p.amplitude for p in mirror.perturbations] == [-p.amplitude for p in cfg.perturbations]
    np.testing.assert_allclose(mirror.initial, 2 * np.asarray(model.equilibrium)[:, None] - initial)
    assert Perturbation(amplitude=0.1).negated().amplitude == -0.1


def test_mirrored_pair(model, point) -> None:
    """Test the mirror run carries the sign-flipped Turing mode."""
    cfg = SimConfig.from_model(
        model,
        point.mu,
        n_points=64,
        t_end=30.0,
        stride=10,
        perturbation=[{"species": "u", "shape": "cos", "k": 5.0, "amplitude": 0.005}],
    )
    primary, mirror = mirrored_pair(model, point.mu, cfg)
    assert mirror_mismatch(primary, mirror, point.n2) < 1e-8
    np.testing.assert_allclose(primary.deviations[:, :, ::-1], mirror.deviations, atol=1e-12)


def test_sweep_in_process(model, point) -> None:
    """Test a single-worker sweep keeps job order."""
    short = SimConfig.from_model(model, point.mu, n_points=64, t_end=2.0, stride=10, perturbation=[])
    other = SimConfig.from_model(model, point.mu, n_points=64, t_end=3.0, stride=10, perturbation=[])
    first, second = sweep(model, [(point.mu, short), (point.mu, other)], workers=1)
    assert first.times[-1] < second.times[-1]


@pytest.mark.integration
def test_sweep_on_workers(model, point) -> None:
    """Test spawned workers return the same trajectories as in-process runs."""
    cfg = SimConfig.from_model(model, point.mu, n_points=64, t_end=5.0, stride=10)
    jobs = [(point.mu, cfg), (point.mu, cfg.mirrored(model.equilibrium))]
    remote = sweep(model, jobs, workers=2)
    local = sweep(model, jobs, workers=1)
    for r, loc in zip(remote, local):
        np.testing.assert_array_equal(r.values, loc.values)


@pytest.mark.integration
@pytest.mark.parametrize(
    ("alpha", "kind"),
    [((0.05, -0.33), PatternKind.INHOMOGENEOUS_PERIODIC), ((-0.1, -0.4), PatternKind.NONCONSTANT_STEADY)],
)
def test_predicted_patterns(model, point, amp, coeffs, basis, alpha, kind) -> None:
    """Test long runs near the point settle on the predicted pattern."""
    mu = (point.mu[0] + alpha[0], point.mu[1] + alpha[1])
    primary, mirror = mirrored_pair(model, mu, SimConfig.from_model(model, mu), workers=2)
    report = analyze_pattern(primary)
    _LOGGER.info("alpha=%s: %s", alpha, report)
    assert report.kind is kind
    assert report.dominant_mode == point.n2
    assert mirror_mismatch(primary, mirror, point.n2) < 1e-6
    if kind is PatternKind.INHOMOGENEOUS_PERIODIC:
        predicted = predict_attractor(amp, coeffs, basis, point, alpha).attractors[0]
        assert report.frequencies[0] == pytest.approx(predicted.params["omega_original"], rel=0.1)


@pytest.mark.integration
def test_worker_failure_is_reported(model, point) -> None:
    """Test a job rejected inside a worker surfaces as a worker error."""
    good = SimConfig.from_model(model, point.mu, n_points=64, t_end=1.0, stride=10)
    bad = SimConfig.from_model(model, point.mu, n_points=32, t_end=1.0, stride=10)
    with pytest.raises(WorkerError) as info:
        sweep(model, [(point.mu, good), (point.mu, bad)], workers=2)
    assert info.value.details["worker_code"] == "config"
