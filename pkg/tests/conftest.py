"""This module contains pytest configuration, hooks and shared fixtures.

It sets up a global logger, logs the start and finish of a test session and
provides small analytic inputs used across the test modules.

Functions:
    pytest_configure(config): Applies global test configuration.
    pytest_sessionstart(session): Logs the start of a test session.
    pytest_sessionfinish(session, exitstatus): Logs the end of a test session.
"""

# pylint: disable=redefined-outer-name

import logging

import numpy as np
import pytest

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.data_access.file_access import load_baseline_airfoil
from airfoil_inverse_design.geometry.airfoil import AirfoilCoords, cosine_x_grid, surface_abscissae
from airfoil_inverse_design.geometry.cst import airfoil_from_cst, cst_fit
from airfoil_inverse_design.utils.constants import AIRFOIL_POINT_COUNT

# Configure a global logger
logger = logging.getLogger(__name__)
logging.basicConfig(
    format="%(asctime)s - %(levelname)s - %(message)s",
    level=logging.INFO,
)


def pytest_configure(config):  # pylint: disable=unused-argument
    """Hook called once command-line options are parsed and plugins are set up.

    Args:
        config (pytest.Config): The pytest configuration object.
    """
    logger.info("=== Global Test Configuration Applied ===")


@pytest.hookimpl(tryfirst=True)
def pytest_sessionstart(session):  # pylint: disable=unused-argument
    """Log the start of the test session."""
    logger.info("=== Test Session Started ===")


@pytest.hookimpl(trylast=True)
def pytest_sessionfinish(session, exitstatus):  # pylint: disable=unused-argument
    """Log the end of the test session.

    Args:
        session (Session): The pytest session object.
        exitstatus (int): The exit status code of the test session.
    """
    logger.info("=== Test Session Finished ===")


def naca_symmetric(thickness: float = 0.12) -> AirfoilCoords:
    """Closed-trailing-edge NACA 00xx section on the shared grid."""
    x = cosine_x_grid(AIRFOIL_POINT_COUNT)
    half = (
        5.0
        * thickness
        * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x**2 + 0.2843 * x**3 - 0.1036 * x**4)
    )
    le = AIRFOIL_POINT_COUNT // 2
    y = np.where(np.arange(x.size) <= le, half, -half)
    y[le] = 0.0
    return AirfoilCoords(x=x, y=y, name=f"NACA 00{round(thickness * 100):02d}")


def shocked_cp(shock_x: float = 0.5, rise: float = 0.7) -> CpDistribution:
    """Rooftop upper curve with a sharp recovery at ``shock_x``; smooth lower curve."""
    xs = surface_abscissae()
    step = 0.5 * (1.0 + np.tanh((xs - shock_x) / 0.01))
    upper = -1.0 + 0.4 * xs + rise * step
    lower = 0.4 - 0.3 * np.sin(np.pi * xs)
    return CpDistribution(xs=xs, cp_upper=upper, cp_lower=lower)


@pytest.fixture(scope="session")
def baseline_fit():
    return cst_fit(load_baseline_airfoil())


@pytest.fixture(scope="session")
def baseline_airfoil(baseline_fit):
    return airfoil_from_cst(baseline_fit.params, name="RAE 2822")


@pytest.fixture
def synthetic_cp():
    return shocked_cp()


@pytest.fixture
def make_cp():
    return shocked_cp


@pytest.fixture(scope="session")
def naca0012():
    return naca_symmetric(0.12)
