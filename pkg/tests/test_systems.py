import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relaxbl.systems import (
    SystemDefinitionError,
    build_system,
    elasticity_from_params,
    exact_solution_linear_reaction,
    fd_jacobian,
    make_combustion,
    make_elasticity,
    make_linear_reaction,
)

from conftest import BUILTIN, states_in_box


def unit_box_state(n):
    return st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).map(np.array)


@pytest.mark.parametrize("name", BUILTIN)
def test_zero_state_normalisation(name):
    s = build_system(name)
    z = np.zeros((1, s.n))
    assert abs(s.eta(z)[0]) < 1e-14
    assert np.max(np.abs(s.Deta(z))) < 1e-14
    assert np.max(np.abs(s.G(z))) < 1e-14


@pytest.mark.parametrize("name", BUILTIN)
def test_flux_jacobian_matches_finite_differences(name):
    s = build_system(name)
    U = states_in_box(s, 100, seed=1)
    err = np.abs(fd_jacobian(s.flux, U) - s.DF(U))
    assert err.max() < 1e-6


@pytest.mark.parametrize("name", BUILTIN)
def test_entropy_flux_compatibility(name):
    s = build_system(name)
    U = states_in_box(s, 100, seed=2)
    dq = fd_jacobian(s.entropy_flux, U)
    prod = np.einsum("mi,mij->mj", s.Deta(U), s.DF(U))
    assert np.abs(dq - prod).max() < 1e-6


@pytest.mark.parametrize("name", BUILTIN)
def test_entropy_gradient_and_hessian_consistent(name):
    s = build_system(name)
    U = states_in_box(s, 50, seed=3)
    assert np.abs(fd_jacobian(s.entropy, U) - s.Deta(U)).max() < 1e-6
    assert np.abs(fd_jacobian(s.Deta, U) - s.D2eta(U)).max() < 1e-5


@pytest.mark.parametrize("name", BUILTIN)
@given(r=st.data())
def test_hessian_bounds(name, r):
    s = build_system(name)
    lo, hi = s.box
    t = r.draw(unit_box_state(s.n))
    U = (lo + (hi - lo) * t)[None, :]
    ev = np.linalg.eigvalsh(s.D2eta(U))[0]
    c = s.constants
    assert ev[0] >= c.beta - 1e-12
    assert ev[-1] <= c.alpha / 2 + 1e-12


@pytest.mark.parametrize("name", ["linear_reaction", "elasticity"])
@given(r=st.data())
def test_potential_is_gradient_and_nonnegative(name, r):
    s = build_system(name)
    lo, hi = s.box
    U = (lo + (hi - lo) * r.draw(unit_box_state(s.n)))[None, :]
    assert s.R(U)[0] >= 0.0
    assert np.allclose(s.G(U), -s.DR(U), atol=1e-12)


def test_linear_reaction_examples():
    s = make_linear_reaction(1.0, 0.0)
    x = np.linspace(0, 1, 11)
    step = lambda y: (np.mod(y, 1.0) < 0.5).astype(float)
    assert np.array_equal(exact_solution_linear_reaction(s, step, x, 0.3), step(x - 0.3))

    s = make_linear_reaction(0.0, 1.0)
    u = exact_solution_linear_reaction(s, lambda y: np.full_like(y, 2.0), x, 0.7)
    assert np.allclose(u, 2.0 * np.exp(-0.7), rtol=1e-15)

    s = make_linear_reaction(1.0, 1.0)
    u0 = lambda y: np.sin(2 * np.pi * y)
    u = exact_solution_linear_reaction(s, u0, x, 0.4)
    assert np.allclose(u, np.exp(-0.4) * np.sin(2 * np.pi * (x - 0.4)), atol=1e-15)
    assert abs(exact_solution_linear_reaction(s, u0, 0.5, 0.0)) < 1e-15

    s = make_linear_reaction(0.0, 2.0)
    assert exact_solution_linear_reaction(s, lambda y: 3.0 + 0 * y, 0.3, 1.0) == pytest.approx(3 * np.exp(-2.0))


def test_exact_solution_rejects_other_systems():
    with pytest.raises(ValueError):
        exact_solution_linear_reaction(build_system("elasticity"), np.sin, [0.0], 0.0)


def test_linear_reaction_rejects_nonfinite():
    with pytest.raises(ValueError):
        make_linear_reaction(np.inf, 1.0)


def test_elasticity_constants_example():
    s = elasticity_from_params({"k": 2.0, "b": 0.1, "gamma": 1.9, "Gamma": 2.1})
    assert s.constants.alpha == pytest.approx(4.2)
    assert s.constants.beta == pytest.approx(1.0)


def test_elasticity_linear_damping_pairing_is_negative_square():
    s = build_system("elasticity")
    U = states_in_box(s, 200, seed=4)
    Ub = states_in_box(s, 200, seed=5)
    prod = np.sum((s.Deta(U) - s.Deta(Ub)) * (s.G(U) - s.G(Ub)), axis=1)
    assert np.allclose(prod, -(U[:, 1] - Ub[:, 1]) ** 2, atol=1e-12)


def test_elasticity_positive_part_is_c0_and_has_potential():
    s = elasticity_from_params({"damping": "positive_part"})
    assert "c0_source" in s.tags and "weakly_dissipative" in s.tags
    U = np.array([[0.3, -1.0], [0.0, 2.0]])
    assert np.allclose(s.R(U), [0.0, 2.0])


def test_elasticity_anti_damping_loses_potential():
    s = elasticity_from_params({"damping": "anti"})
    assert not s.has_potential
    assert "weakly_dissipative" not in s.tags


def test_elasticity_rejects_out_of_range_stress():
    with pytest.raises(SystemDefinitionError):
        make_elasticity(lambda u: 3 * u, lambda u: 3 + 0 * u, 0.5, 1.0)


def test_combustion_zero_rate_gives_zero_source():
    from relaxbl.systems import combustion_from_params

    s = combustion_from_params({"K": 0.0})
    U = states_in_box(s, 50, seed=6)
    assert np.all(s.G(U) == 0.0)


def test_combustion_lipschitz_bound():
    s = build_system("combustion")
    U = states_in_box(s, 1000, seed=7)
    Ub = states_in_box(s, 1000, seed=8)
    lhs = np.linalg.norm(s.G(U) - s.G(Ub), axis=1)
    rhs = s.constants.L * np.linalg.norm(U - Ub, axis=1)
    assert np.all(lhs <= rhs + 1e-12)


def test_combustion_rejects_weak_convexifier():
    with pytest.raises(SystemDefinitionError):
        make_combustion(
            P=lambda v, Z: -1.5 * v + 0.1 * Z, P_v=lambda v, Z: -1.5 + 0 * v * Z, P_Z=lambda v, Z: 0.1 + 0 * v * Z,
            Theta=lambda v, Z: v, phi=lambda th: np.maximum(0, np.tanh(th)),
            B=lambda Z: 0.1 * Z**2, dB=lambda Z: 0.2 * Z, d2B=lambda Z: 0.2 + 0 * Z,
            K=1.0, Cbar=0.2, gamma=1.4, Gamma=3.5,
        )


def test_unknown_system():
    with pytest.raises(ValueError, match="unknown system"):
        build_system("shallow_water")
