"""Tests for the center-manifold normal form."""

from dataclasses import replace

import numpy as np
import pytest

from turing_hopf.amplitude import to_amplitude
from turing_hopf.eigenbasis import compute_basis
from turing_hopf.errors import ResonanceError, ValidationFailed
from turing_hopf.expoly import ExpPoly
from turing_hopf.model import derivative_bundle, embedded_model_text, load_model, unit_delay
from turing_hopf.normalform import (
    CONDITION_LIMIT,
    SECOND_ORDER,
    assemble,
    check_resonance,
    coeff_vectors,
    h_functions,
    normal_form,
    validate_h,
)
from turing_hopf.spectrum import SearchConfig, locate_turing_hopf

# Published values carry four decimals.
PRINTED = 5e-5

GOLDEN = {
    "f_a1z1": 3.5526 + 2.0355j,
    "f_a2z1": 0.4523 + 0.4291j,
    "f_a1z2": 0.0,
    "f_a2z2": -0.0433,
    "g210": -25.8208 - 41.9428j,
    "g102": -0.8398 + 0.1637j,
    "g111": -0.2315,
    "g003": -0.6018,
}


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_golden_coefficients(coeffs, name: str) -> None:
    """Test each coefficient against the worked example."""
    actual = coeffs.coefficients[name]
    expected = GOLDEN[name]
    assert abs(actual - expected) <= PRINTED + 2e-3 * abs(expected), (name, actual)


def test_turing_coefficients_are_real(coeffs) -> None:
    """Test coefficients of the steady mode have no imaginary part."""
    for name in ("f_a1z2", "f_a2z2", "g111", "g003"):
        assert abs(coeffs.coefficients[name].imag) < 1e-10, name
    # The delay direction leaves the Turing root at zero.
    assert abs(coeffs.f_a1z2) < 1e-10


def test_validation_report(coeffs) -> None:
    """Test the center-manifold corrections satisfy their defining relations."""
    report = coeffs.validation
    assert report is not None
    assert report.max_residual < 1e-7
    assert max(report.interior, report.boundary) <= report.max_residual
    assert len(report.orthogonality) == 3 * len(SECOND_ORDER)


def test_conventions(coeffs) -> None:
    """Test the settled inverse of the 2i*omega0 block is recorded."""
    assert "h200_inverse" in coeffs.conventions
    assert "2i*omega0" in coeffs.conventions["h200_inverse"]


def test_resonance_conditions(bundle, basis) -> None:
    """Test every inverted matrix is well conditioned at the point."""
    conditions = check_resonance(bundle.linear, basis)
    assert len(conditions) >= 4
    assert all(1.0 <= value < CONDITION_LIMIT for value in conditions.values())


def test_stepwise_matches_normal_form(bundle, basis, point, coeffs) -> None:
    """Test the staged pipeline agrees with the one-call form."""
    cv = coeff_vectors(bundle, basis, point)
    h = h_functions(cv, basis, bundle.linear, point)
    report = validate_h(h, cv, basis, bundle.linear, point)
    assert report.max_residual == pytest.approx(coeffs.validation.max_residual)
    assert set(h.projections()) >= {"h200_11", "h101_21", "h002_22"}
    for monomial in SECOND_ORDER:
        assert cv.second[monomial].shape == (2,)


def test_intermediate_selection_rules(coeffs) -> None:
    """Test terms forbidden by the cosine basis vanish."""
    for name in ("f11_101", "f11_011", "f13_200", "f13_110", "f13_020", "f13_002"):
        assert coeffs.intermediates[name] == 0


def test_corrupted_h_fails_validation(bundle, basis, point) -> None:
    """Test a stray exponential in h_200 is caught by the validator."""
    cv = coeff_vectors(bundle, basis, point)
    h = h_functions(cv, basis, bundle.linear, point)
    term = h.terms[("200", 0)]
    stray = ExpPoly.exponential(np.array([1e-2, 0.0]), 1j * basis.omega)
    corrupted = replace(h, terms={**h.terms, ("200", 0): replace(term, w=term.w + stray)})
    with pytest.raises(ValidationFailed) as info:
        validate_h(corrupted, cv, basis, bundle.linear, point)
    assert info.value.details["residual"] > 1e-5


def test_singular_homogeneous_block(bundle, basis) -> None:
    """Test a singular A + B makes the zero-frequency block resonant."""
    singular = np.array([[1.0, 2.0], [2.0, 4.0]])
    lp = replace(bundle.linear, A=singular - bundle.linear.B)
    with pytest.raises(ResonanceError) as info:
        check_resonance(lp, basis)
    assert info.value.matrix == "[-L0(I)]"
    assert info.value.details["condition"] > CONDITION_LIMIT


def test_conjugate_basis_conjugates_coefficients(bundle, basis, point, coeffs) -> None:
    """Test reducing along the conjugate Hopf pair yields conjugate coefficients."""
    mirror = basis.conjugate()
    cv = coeff_vectors(bundle, basis, point)
    cvc = coeff_vectors(bundle, mirror, point)
    assert cv.second["020"] == pytest.approx(np.conj(cv.second["200"]))
    assert cv.second["011"] == pytest.approx(np.conj(cv.second["101"]))
    assert cv.y["zbar1"] == pytest.approx(np.conj(cv.y["z1"]))
    assert cvc.second["200"] == pytest.approx(np.conj(cv.second["200"]))
    assert cvc.third["210"] == pytest.approx(np.conj(cv.third["210"]))

    h = h_functions(cvc, mirror, bundle.linear, point)
    nf = assemble(cvc, h, mirror, point)
    for name, value in coeffs.coefficients.items():
        assert nf.coefficients[name] == pytest.approx(np.conj(value), rel=1e-8, abs=1e-12), name


def _perturbed_model(rng: np.random.Generator):
    a = 1.0 + rng.uniform(-0.03, 0.03)
    b = 0.1 * (1.0 + rng.uniform(-0.03, 0.03))
    text = embedded_model_text().replace("a = 1.0", f"a = {a!r}", 1).replace("b = 0.1", f"b = {b!r}", 1)
    return load_model(text)


@pytest.mark.integration
def test_perturbed_models_validate() -> None:
    """Test 20 nearby models reduce with validated corrections and real Turing coefficients."""
    rng = np.random.default_rng(17)
    for case in range(20):
        m = _perturbed_model(rng)
        p = locate_turing_hopf(m, SearchConfig.from_model(m))
        bundle = derivative_bundle(unit_delay(m), p.mu)
        eb = compute_basis(bundle.linear, p)
        nf = normal_form(bundle, eb, p)
        assert nf.validation.max_residual < 1e-7, case
        for name in ("f_a2z2", "g111", "g003"):
            assert abs(nf.coefficients[name].imag) < 1e-9, (case, name)
        amp = to_amplitude(nf)
        assert amp.d_minus_bc == pytest.approx(amp.d - amp.b * amp.c)
