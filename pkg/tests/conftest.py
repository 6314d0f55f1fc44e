"""Shared regression bundles.

The bifurcating set is constant-density (with and without a Bernoulli
function): the explicit eps0 of the admissibility theory pushes the laminar
family of any stratified bundle past its bifurcation window, so (L-B) can
only hold when rho' = 0.  Stratified bundles exercise the laminar family,
the Volterra diagnostics and the stratification operator.
"""

import pytest

from strataflow.profiles import (BernoulliProfile, DensityProfile,
                                 constant_density_bundle, make_bundle)


def linear_rho_bundle(a: float, g: float = 1.0, p0: float = -1.0,
                      beta_coeffs=(0.0,)):
    return make_bundle(g, 1.0, p0,
                       DensityProfile.from_poly([1.0, -a], p0),
                       BernoulliProfile.from_poly(list(beta_coeffs), p0))


def quadratic_rho_bundle(a: float, g: float = 1.0, p0: float = -1.0,
                         beta_coeffs=(0.0,)):
    # rho = 1 + (a/2) p^2 has rho_p = a p <= 0 and ||rho'||_inf = a |p0|
    return make_bundle(g, 1.0, p0,
                       DensityProfile.from_poly([1.0, 0.0, 0.5 * a], p0),
                       BernoulliProfile.from_poly(list(beta_coeffs), p0))


@pytest.fixture(scope="session")
def const_g1():
    return constant_density_bundle()


@pytest.fixture(scope="session")
def const_g100():
    return constant_density_bundle(g=100.0)


@pytest.fixture(scope="session")
def beta_bundle():
    """Constant density with a nonzero Bernoulli function (B_min = -0.1)."""
    return make_bundle(1.0, 1.0, -1.0,
                       DensityProfile.from_poly([1.0], -1.0),
                       BernoulliProfile.from_poly([0.2, -0.2], -1.0))


@pytest.fixture(scope="session")
def strat_lin02():
    return linear_rho_bundle(0.2)


@pytest.fixture(scope="session")
def gdot_sweep_bundles():
    """Five stratified bundles: linear and quadratic rho, varied slopes."""
    return [
        linear_rho_bundle(0.05),
        linear_rho_bundle(0.2, beta_coeffs=(0.1,)),
        linear_rho_bundle(0.5),
        quadratic_rho_bundle(0.2),
        quadratic_rho_bundle(0.5, beta_coeffs=(0.0, 0.1)),
    ]


@pytest.fixture(scope="session")
def lb_passing_bundles(const_g1, const_g100, beta_bundle):
    return [const_g1, const_g100, beta_bundle]
