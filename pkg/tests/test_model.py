"""Tests for model files, linearization and the delay rescaling."""

import numpy as np
import pytest

from turing_hopf.errors import (
    EquilibriumViolation,
    ModelParseError,
    NonPositiveDiffusion,
    NotApplicable,
    UnknownSymbol,
)
from turing_hopf.model import (
    DelayMode,
    derivative_bundle,
    embedded_model_text,
    linear_part,
    load_model,
    load_model_file,
    rescale_delay,
    unit_delay,
)
from turing_hopf.simulate import SimConfig, run

EQUILIBRIUM = 0.270156


def _edited(old: str, new: str) -> str:
    text = embedded_model_text()
    assert old in text, old
    return text.replace(old, new, 1)


def test_embedded_model(model) -> None:
    """Test the bundled model loads with its equilibrium shifted to the origin."""
    assert model.parameters == ("tau", "r")
    assert model.base == (0.45, 2.8)
    assert model.delay is DelayMode.PARAMETER
    assert model.equilibrium == pytest.approx((EQUILIBRIUM, EQUILIBRIUM), abs=1e-6)
    assert model.length == 5.0


def test_linear_part(model) -> None:
    """Test A does not depend on the parameters and B carries r."""
    for mu in [(0.45, 2.8), (0.2, 4.0)]:
        lp = linear_part(model, mu)
        np.testing.assert_allclose(lp.A, [[0.262515, -0.729846], [0.0, 0.0]], atol=1e-5)
        np.testing.assert_allclose(lp.B, [[0.0, 0.0], [mu[1], -mu[1]]], atol=1e-12)
        np.testing.assert_allclose(lp.D, np.diag([0.1, 10.0]))
        np.testing.assert_allclose(lp.dB[1], [[0.0, 0.0], [1.0, -1.0]], atol=1e-12)
        np.testing.assert_allclose(lp.dA, 0.0, atol=1e-12)


def test_linear_part_on_grid(model) -> None:
    """Test array parameters broadcast to a stack of matrices."""
    tau, r = np.meshgrid(np.linspace(0.2, 0.8, 3), np.linspace(1.0, 4.0, 4))
    lp = linear_part(unit_delay(model), (tau, r))
    assert lp.A.shape == (4, 3, 2, 2)
    np.testing.assert_allclose(lp.B[..., 1, 0], tau * r)


def test_rescale_delay(model) -> None:
    """Test time rescaling multiplies reactions and diffusions by the delay."""
    um = rescale_delay(model)
    assert um.delay is DelayMode.UNIT
    assert um.time_scale == "tau"
    mu = (0.45, 2.8)
    original, rescaled = linear_part(model, mu), linear_part(um, mu)
    np.testing.assert_allclose(rescaled.A, 0.45 * original.A)
    np.testing.assert_allclose(rescaled.B, 0.45 * original.B)
    np.testing.assert_allclose(rescaled.D, 0.45 * original.D)
    assert um.time_scale_value(mu) == 0.45

    with pytest.raises(NotApplicable):
        rescale_delay(um)
    assert unit_delay(um) is um


def test_rescaled_trajectory_matches(model) -> None:
    """Test the unit-delay model traces the same solution on the stretched clock."""
    mu = (0.45, 2.8)
    original = run(model, mu, SimConfig.from_model(model, mu, n_points=64, dt=0.01, t_end=9.0, stride=45))
    um = rescale_delay(model)
    cfg = SimConfig.from_model(um, mu, n_points=64, dt=1 / 45, t_end=20.0, stride=45)
    assert cfg.lag == 45
    rescaled = run(um, mu, cfg)
    np.testing.assert_allclose(rescaled.times * 0.45, original.times, atol=1e-12)
    np.testing.assert_allclose(rescaled.values, original.values, rtol=0, atol=1e-10)
    assert np.abs(original.deviations).max() > 1e-4


def test_derivative_bundle(model) -> None:
    """Test the jet is symmetric and its first order matches the linear part."""
    bundle = derivative_bundle(model, model.base)
    np.testing.assert_allclose(bundle.first[:, :2], bundle.linear.A)
    np.testing.assert_allclose(bundle.first[:, 2:], bundle.linear.B)
    np.testing.assert_allclose(bundle.second, np.swapaxes(bundle.second, 1, 2))
    np.testing.assert_allclose(bundle.third, np.swapaxes(bundle.third, 1, 3))
    np.testing.assert_allclose(bundle.third, np.swapaxes(bundle.third, 2, 3))
    # f has no delayed terms
    assert not np.any(bundle.second[0, 2:, :])


def test_missing_file() -> None:
    """Test an unreadable model file is an input error."""
    with pytest.raises(ModelParseError) as info:
        load_model_file("/nonexistent/model.toml")
    assert info.value.exit_code == 1


@pytest.mark.parametrize(
    ("old", "new"),
    [
        ("[model]", "[modle]"),
        ("r = 2.8", "r = 2.8\nk = 1.0"),
        ('mode = "parameter"', 'mode = "distributed"'),
        ("l = 5.0", "l = -5.0"),
        ('d1 = "0.1"', 'd1 = "0.1*u"'),
        ("l = 5.0", "l = 5.0 ="),
    ],
)
def test_parse_errors(old: str, new: str) -> None:
    """Test malformed model files raise ModelParseError."""
    with pytest.raises(ModelParseError):
        load_model(_edited(old, new))


def test_unknown_symbol() -> None:
    """Test undeclared names in a reaction are reported."""
    with pytest.raises(UnknownSymbol) as info:
        load_model(_edited('g = "r*v*', 'g = "s*v*'))
    assert info.value.name == "s"


def test_non_positive_diffusion() -> None:
    """Test negative diffusion is rejected as a model error."""
    with pytest.raises(NonPositiveDiffusion) as info:
        load_model(_edited('d1 = "0.1"', 'd1 = "-0.1"'))
    assert info.value.exit_code == 2


def test_origin_not_equilibrium() -> None:
    """Test reactions that do not vanish at the origin are rejected."""
    with pytest.raises(EquilibriumViolation):
        load_model(_edited('f = "u*(1 - u)', 'f = "0.01 + u*(1 - u)'))


def test_shift_depends_on_parameter() -> None:
    """Test an equilibrium shift that moves with a bifurcation parameter is rejected."""
    with pytest.raises(EquilibriumViolation):
        load_model(_edited('v = "(1 - a - b', 'v = "r*(1 - a - b'))
