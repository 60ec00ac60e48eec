"""Fixtures for tests."""

import pytest
from dotenv import load_dotenv

from turing_hopf.amplitude import to_amplitude
from turing_hopf.eigenbasis import compute_basis
from turing_hopf.model import derivative_bundle, load_model_file, unit_delay
from turing_hopf.normalform import normal_form
from turing_hopf.spectrum import SearchConfig, locate_turing_hopf

load_dotenv()


@pytest.fixture(scope="session")
def model():
    """Return the embedded Holling-Tanner model."""
    return load_model_file(None)


@pytest.fixture(scope="session")
def point(model):
    """Return the located and certified Turing-Hopf point."""
    return locate_turing_hopf(model, SearchConfig.from_model(model))


@pytest.fixture(scope="session")
def bundle(model, point):
    """Return reaction derivatives of the unit-delay model at the point."""
    return derivative_bundle(unit_delay(model), point.mu)


@pytest.fixture(scope="session")
def basis(bundle, point):
    """Return the center eigenbasis at the point."""
    return compute_basis(bundle.linear, point)


@pytest.fixture(scope="session")
def coeffs(bundle, basis, point):
    """Return the validated normal form coefficients."""
    return normal_form(bundle, basis, point)


@pytest.fixture(scope="session")
def amp(coeffs):
    """Return the planar amplitude system."""
    return to_amplitude(coeffs)
