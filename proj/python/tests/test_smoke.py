import math

import numpy as np
import pytest

import kinlub


@pytest.fixture(scope="module")
def setup():
    return kinlub.SlabSetup(order=6, z_nodes=32)


@pytest.fixture(scope="module")
def table(setup):
    return kinlub.tabulate(0.5, 2.5, 8, setup)


def test_transport_coefficient(setup):
    t = setup.transport(1.0)
    assert t["A"] > 0
    assert abs(t["A"] - t["A_energy"]) <= 1e-6 * t["A"]
    assert setup.A(1.0) == pytest.approx(t["A"], rel=1e-12)
    assert setup.spectral_gap() > 0
    (axx, axy), (ayx, ayy) = setup.cross_coefficients(1.0)
    assert abs(axy) <= 1e-10 * axx and abs(ayx) <= 1e-10 * axx
    assert axx == pytest.approx(ayy, rel=1e-10)


def test_table_inverse(table):
    assert table.rho_m == pytest.approx(0.5)
    for rho in (0.7, 1.3, 2.2):
        assert table.G_inverse(table.G(rho)) == pytest.approx(rho, rel=1e-10)
    with pytest.raises(kinlub.RangeError):
        table.A(10.0)


def test_reynolds_and_expansion(setup, table):
    density = kinlub.solve_reynolds_1d(17, 0.8, 2.2, table)
    rho = density.rho[:, 0]
    assert rho[0] == 0.8 and rho[-1] == 2.2
    assert np.all(np.diff(rho) > 0)
    expansion = kinlub.build_expansion(density, setup)
    assert expansion.has_g2
    assert expansion.residual(1) <= 1e-9
    div = expansion.mass_flux_divergence()
    assert np.nanmax(np.abs(div)) <= 1e-10


def test_constant_boundary_density(table):
    density = kinlub.solve_reynolds_rectangle(9, 9, lambda x, y: 1.3, table)
    assert np.all(density.rho == 1.3)


def test_convergence_study_constant_density(setup, table):
    density = kinlub.solve_reynolds_1d(9, 1.2, 1.2, table)
    expansion = kinlub.build_expansion(density, setup)
    study = kinlub.convergence_study(expansion, [0.2, 0.1, 0.05])
    assert study["all_ok"]
    assert all(row["deviation"] == 0.0 for row in study["rows"])


def test_invalid_arguments(setup, table):
    density = kinlub.solve_reynolds_1d(9, 1.0, 1.4, table)
    expansion = kinlub.build_expansion(density, setup)
    with pytest.raises(kinlub.InvalidArgument):
        kinlub.convergence_study(expansion, [0.1, 0.2, 0.05])
    assert isinstance(kinlub.__version__, str) and not math.isnan(float(kinlub.__version__.split(".")[0]))
