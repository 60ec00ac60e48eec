"""Tests for characteristic functions, root counting and the Turing-Hopf search."""

import math

import numpy as np
import pytest

from turing_hopf.errors import (
    CertificationFailed,
    ConfigError,
    ContourThroughZero,
    InconclusiveTailBound,
    NoBifurcationFound,
    TransversalityFailed,
)
from turing_hopf.model import LinearPart, embedded_model_text, linear_part, load_model, unit_delay
from turing_hopf.spectrum import (
    CharContext,
    SearchConfig,
    certified,
    certify_spectrum,
    char_derivatives,
    char_function,
    char_value,
    count_roots,
    locate_turing_hopf,
    polish_roots,
    refine_point,
    tail_mode,
    transversality,
)

MU = (0.4567, 2.8646)
OMEGA_ORIGINAL = 2.8899
DELTA = 1e-3


def _roots_with_margin(lp: LinearPart, n: int, length: float, seeds: int = 256) -> tuple[int, list[complex]]:
    k = (n / length) ** 2
    count, (right, height) = count_roots(lp, n, length, DELTA, 1.0)
    fn = char_function(lp, n, length)

    def derivative(z):
        identity = np.eye(2)
        decay = np.exp(-z)
        m = z * identity + k * lp.D - lp.A - lp.B * decay
        adjugate = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        return complex(np.trace(adjugate @ (identity + lp.B * decay)))

    roots = polish_roots(lambda z: complex(fn(z)), derivative, (-DELTA, right, -height, height), seeds=seeds)
    return count, roots


def test_golden_point(point) -> None:
    """Test the located point against published values."""
    assert point.mu == pytest.approx(MU, abs=1e-3)
    assert point.n2 == 5
    assert point.n1 == 0
    assert point.omega_original == pytest.approx(OMEGA_ORIGINAL, abs=1e-3)
    assert point.time_scale == pytest.approx(point.mu[0], rel=1e-12)
    assert point.omega == pytest.approx(point.omega_original * point.time_scale, rel=1e-9)
    assert point.omega == pytest.approx(OMEGA_ORIGINAL * MU[0], rel=2e-4)
    assert point.time_scale_parameter == "tau"
    assert max(point.residuals) < 1e-9


def test_point_is_root(model, point) -> None:
    """Test i*omega is a root of mode 0 and zero is a root of mode n2."""
    hopf = CharContext.for_model(model, 0)
    turing = CharContext.for_model(model, point.n2)
    assert abs(char_value(hopf, 1j * point.omega, point.mu)) < 1e-8
    assert abs(char_value(turing, 0.0, point.mu)) < 1e-8
    assert abs(char_value(hopf, 0.0, point.mu)) > 1e-3


def test_certification(point) -> None:
    """Test every inspected mode carries the expected number of roots."""
    cert = point.certification
    assert cert is not None
    assert certified(cert, point.n2)
    assert cert.counts[0] == 2
    assert cert.counts[point.n2] == 1
    assert sum(cert.counts.values()) == 3
    assert cert.n_tail <= cert.n_max + 1


def test_transversality(model, point) -> None:
    """Test the crossing speeds are non-zero and agree with the stored ones."""
    d_alpha, d_gamma = transversality(model, point)
    assert abs(d_alpha) > 1e-6
    assert abs(d_gamma) > 1e-6
    assert (d_alpha, d_gamma) == pytest.approx((point.d_alpha, point.d_gamma), rel=1e-9)


def test_char_derivatives_match_finite_differences(model, point) -> None:
    """Test the adjugate derivatives against central differences."""
    ctx = CharContext.for_model(model, 3)
    lam = 0.3 + 1.1j
    d_lam, d_mu1, d_mu2 = char_derivatives(ctx, lam, point.mu)
    h = 1e-6
    assert d_lam == pytest.approx((char_value(ctx, lam + h, point.mu) - char_value(ctx, lam - h, point.mu)) / (2 * h))
    mu_up, mu_down = (point.mu[0] + h, point.mu[1]), (point.mu[0] - h, point.mu[1])
    assert d_mu1 == pytest.approx((char_value(ctx, lam, mu_up) - char_value(ctx, lam, mu_down)) / (2 * h), rel=1e-6)
    mu_up, mu_down = (point.mu[0], point.mu[1] + h), (point.mu[0], point.mu[1] - h)
    assert d_mu2 == pytest.approx((char_value(ctx, lam, mu_up) - char_value(ctx, lam, mu_down)) / (2 * h), rel=1e-6)


def test_char_context_rejects_negative_mode(model) -> None:
    """Test mode indices are non-negative integers."""
    with pytest.raises(ValueError):
        CharContext.for_model(model, -1)


def test_count_matches_polished_roots(model, point) -> None:
    """Test the argument-principle count against multi-start Newton at the point."""
    lp = linear_part(unit_delay(model), point.mu)
    for n in range(8):
        count, roots = _roots_with_margin(lp, n, point.length)
        assert count == len(roots), (n, count, roots)
    _, roots = _roots_with_margin(lp, 0, point.length)
    assert sorted(r.imag for r in roots) == pytest.approx([-point.omega, point.omega], abs=1e-8)


@pytest.mark.integration
def test_count_on_random_linear_parts() -> None:
    """Test root counts against polished roots on 50 random linearizations."""
    rng = np.random.default_rng(2024)
    for case in range(50):
        lp = LinearPart(
            A=rng.normal(0.0, 0.6, (2, 2)),
            B=rng.normal(0.0, 0.6, (2, 2)),
            D=np.diag(rng.uniform(0.05, 2.0, 2)),
            dA=np.zeros((2, 2, 2)),
            dB=np.zeros((2, 2, 2)),
            dD=np.zeros((2, 2, 2)),
        )
        n = case % 3
        count, roots = _roots_with_margin(lp, n, 2.0, seeds=512)
        assert count == len(roots), (case, count, roots)


def test_tail_mode_bounds_unstable_modes(model, point) -> None:
    """Test no mode at or beyond the tail bound carries a root with Re >= -delta."""
    lp = linear_part(unit_delay(model), point.mu)
    n_tail = tail_mode(lp, point.length, DELTA)
    for n in range(n_tail, n_tail + 3):
        count, _ = count_roots(lp, n, point.length, DELTA, 50.0)
        assert count == 0


def test_refine_from_nearby_guess(model, point) -> None:
    """Test Newton refinement converges back to the point from a perturbed guess."""
    guess = (point.omega * 1.05, point.mu[0] * 0.97, point.mu[1] * 1.03)
    c = refine_point(model, point.n2, guess)
    assert c is not None
    assert c.mu == pytest.approx(point.mu, abs=1e-7)
    assert c.omega == pytest.approx(point.omega, abs=1e-7)


def test_search_config_overrides(model) -> None:
    """Test search configuration layering and validation."""
    cfg = SearchConfig.from_model(model, n_max=6, tolerance=None)
    assert cfg.n_max == 6
    assert cfg.tolerance == 1e-9
    assert cfg.box == ((0.1, 1.0), (1.0, 5.0))
    assert cfg.modes == tuple(range(1, 7))
    with pytest.raises(ConfigError):
        SearchConfig(box=((1.0, 0.5), (1.0, 5.0)))


def test_no_bifurcation_in_small_box(model) -> None:
    """Test a box far from the point reports that nothing was found."""
    cfg = SearchConfig.from_model(model, box=((0.1, 0.15), (1.0, 1.2)))
    with pytest.raises(NoBifurcationFound) as info:
        locate_turing_hopf(model, cfg)
    assert info.value.exit_code == 2


def test_point_independent_of_time_unit(model, point) -> None:
    """Test the unit-delay model finds the same point."""
    p = locate_turing_hopf(unit_delay(model), SearchConfig.from_model(model))
    assert p.mu == pytest.approx(point.mu, abs=1e-9)
    assert p.omega == pytest.approx(point.omega, abs=1e-9)
    assert math.isclose(p.omega_original, point.omega_original, rel_tol=1e-9)


def _edited(edits: dict[str, str]):
    text = embedded_model_text()
    for old, new in edits.items():
        assert old in text, old
        text = text.replace(old, new, 1)
    return load_model(text)


def test_strict_transversality_rejects(model, point) -> None:
    """Test a crossing-speed threshold above the actual speeds rejects the point."""
    cfg = SearchConfig.from_model(model, n_values=(point.n2,), transversality_tolerance=1e6)
    with pytest.raises(TransversalityFailed) as info:
        locate_turing_hopf(model, cfg)
    assert info.value.details["candidates"][0][-1] == "transversality_failed"


def test_wide_margin_fails_certification(model, point) -> None:
    """Test near-critical Turing modes spoil certification once delta exceeds their decay rate."""
    cfg = SearchConfig.from_model(model, n_values=(point.n2,), delta=0.1)
    with pytest.raises(CertificationFailed) as info:
        locate_turing_hopf(model, cfg)
    assert info.value.details["n2"] == point.n2


def test_contour_through_zero() -> None:
    """Test a root on the left edge of the contour that no nudge can move is reported."""
    lp = LinearPart(
        A=np.diag([0.0, -1.0]),
        B=np.zeros((2, 2)),
        D=np.eye(2),
        dA=np.zeros((2, 2, 2)),
        dB=np.zeros((2, 2, 2)),
        dD=np.zeros((2, 2, 2)),
    )
    with pytest.raises(ContourThroughZero) as info:
        count_roots(lp, 0, 1.0, 0.0, 1.0)
    assert info.value.details["mode"] == 0


def test_short_certification_is_inconclusive(model, point) -> None:
    """Test certifying fewer modes than the tail bound requires raises."""
    with pytest.raises(InconclusiveTailBound) as info:
        certify_spectrum(model, point, n_max=1)
    assert info.value.details["n_tail"] > 2


def test_mode_order_does_not_matter(model, point) -> None:
    """Test listing candidate modes in reverse finds the same point."""
    p = locate_turing_hopf(model, SearchConfig.from_model(model, n_values=tuple(range(10, 0, -1))))
    assert p.n2 == point.n2
    assert p.mu == pytest.approx(point.mu, abs=1e-9)


@pytest.mark.parametrize(
    "edits",
    [
        {'d1 = "0.1"': 'd1 = "1"', 'd2 = "10"': 'd2 = "1"'},
        {'g = "r*v*(1 - v_tau/u_tau)"': 'g = "r*v*(1 - v/u)"'},
    ],
    ids=["equal-diffusion", "no-delay"],
)
def test_degenerate_models(edits: dict[str, str]) -> None:
    """Test models without a Turing or a Hopf mechanism report no bifurcation."""
    m = _edited(edits)
    with pytest.raises(NoBifurcationFound):
        locate_turing_hopf(m, SearchConfig.from_model(m))
