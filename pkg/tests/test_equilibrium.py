import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from relaxbl import equilibrium as eq
from relaxbl.solver import Grid1D
from relaxbl.systems import build_system, exact_solution_linear_reaction, make_linear_reaction


def test_reference_matches_characteristics_at_second_order():
    s = build_system("linear_reaction")
    u0 = lambda x: np.sin(2 * np.pi * x)[:, None]
    errs = []
    for n in (128, 256, 512):
        g = Grid1D(0.0, 1.0, n)
        tr = eq.solve_balance_law(s, g, u0, 0.5, refine=1)
        ex = exact_solution_linear_reaction(s, u0, g.centers, 0.5)
        errs.append(np.sqrt(g.dx * np.sum((tr.snapshots[-1].u - ex) ** 2)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.5)
    assert not tr.shock_flag


def test_reference_hits_requested_times():
    s = build_system("elasticity")
    g = Grid1D(0.0, 1.0, 32)
    times = [0.0, 0.013, 0.1, 0.25]
    tr = eq.solve_balance_law(s, g, lambda x: np.stack([0.1 * np.sin(2 * np.pi * x), 0 * x], -1), times=times)
    assert list(tr.times) == times
    with pytest.raises(ValueError):
        eq.solve_balance_law(s, g, lambda x: np.zeros((len(x), 2)), times=[0.2, 0.1])


def test_zero_source_keeps_constants():
    s = make_linear_reaction(1.0, 0.0)
    g = Grid1D(0.0, 1.0, 16)
    tr = eq.solve_balance_law(s, g, lambda x: np.full((len(x), 1), 0.4), 0.3)
    assert np.allclose(tr.snapshots[-1].u, 0.4, atol=1e-14)


def test_elasticity_energy_nonincreasing():
    s = build_system("elasticity")
    g = Grid1D(0.0, 1.0, 128)
    tr = eq.solve_balance_law(
        s, g, lambda x: np.stack([0.1 * np.sin(2 * np.pi * x), 0.1 * np.cos(2 * np.pi * x)], -1),
        times=np.linspace(0, 0.5, 6))
    assert np.all(np.diff(tr.energy) <= 1e-14)


def test_exact_flag_requires_callable():
    s = build_system("linear_reaction")
    with pytest.raises(ValueError):
        eq.solve_balance_law(s, Grid1D(0, 1, 8), np.zeros((8, 1)), 0.1, exact=True)


def test_restrict_block_average():
    u = np.arange(8.0)[:, None]
    assert np.allclose(eq.restrict(u, 4)[:, 0], [1.5, 5.5])


@pytest.mark.parametrize("eps, lam", [(0.1, 1.0), (1e-2, 1.0), (0.5, 2.0), (0.25, 1.0)])
def test_homogeneous_relaxation_closed_form(eps, lam):
    sol = solve_ivp(lambda t, y: [y[1], (-y[1] - lam * y[0]) / eps], (0, 1), [1.0, -lam], rtol=1e-12, atol=1e-14)
    assert eq.homogeneous_relaxation_exact(eps, lam, 1.0, 1.0) == pytest.approx(sol.y[0, -1], rel=1e-8)


@given(eps=st.floats(1e-3, 2.0), lam=st.floats(0.0, 3.0), t=st.floats(0.0, 2.0))
def test_homogeneous_relaxation_satisfies_ode(eps, lam, t):
    f = lambda s: eq.homogeneous_relaxation_exact(eps, lam, 1.0, s)
    h = 1e-4
    assert float(f(0.0)) == pytest.approx(1.0)
    d1 = (f(h) - f(-h)) / (2 * h) if t < h else (f(t + h) - f(t - h)) / (2 * h)
    tt = 0.0 if t < h else t
    d2 = (f(tt + h) - 2 * f(tt) + f(tt - h)) / h**2
    scale = 1.0 + abs(lam) + 1.0 / eps
    assert abs(eps * d2 + d1 + lam * f(tt)) < 1e-3 * scale


def test_manufactured_transport_has_zero_equilibrium_forcing():
    s = make_linear_reaction(1.0, 0.0)
    m = eq.travelling_sine(1.0, speed=1.0)
    mf = eq.manufactured_forcing(s, m, eps=0.1, A=[[4.0]])
    x = np.linspace(0, 1, 17)
    assert np.max(np.abs(mf.equilibrium(x, 0.3))) < 1e-12
    # f_rx = eps (u_tt - A u_xx) = eps (k^2 c^2 - 4 k^2)(-sin)
    k = 2 * np.pi
    expected = 0.1 * (-(k**2) + 4 * k**2) * np.sin(k * (x - 0.3))
    assert np.allclose(mf.relaxation(x, 0.3)[:, 0], expected, atol=1e-10)


@given(c=st.floats(-2, 2), d=st.floats(0, 1), t=st.floats(0, 1))
def test_travelling_sine_derivatives(c, d, t):
    m = eq.travelling_sine([0.3, 0.2], speed=c, decay=d, phase=[0.0, 1.0])
    x = np.linspace(0, 1, 9)
    h = 1e-5
    assert np.allclose((m.u(x, t + h) - m.u(x, t - h)) / (2 * h), m.ut(x, t), atol=1e-7)
    assert np.allclose((m.u(x + h, t) - m.u(x - h, t)) / (2 * h), m.ux(x, t), atol=1e-6)
    assert np.allclose((m.ut(x, t + h) - m.ut(x, t - h)) / (2 * h), m.utt(x, t), atol=1e-5)
    assert np.allclose((m.ux(x + h, t) - m.ux(x - h, t)) / (2 * h), m.uxx(x, t), atol=1e-5)


def test_from_exact_and_snapshot_derivatives():
    s = build_system("linear_reaction")
    g = Grid1D(0.0, 1.0, 256)
    u = lambda x, t: (np.exp(-t) * np.sin(2 * np.pi * (x - t)))[:, None]
    tr = eq.from_exact(s, g, u, [0.0, 0.1])
    snap = tr.at(0.1)
    ut = -2 * np.pi * np.exp(-0.1) * np.cos(2 * np.pi * (g.centers - 0.1)) - np.exp(-0.1) * np.sin(
        2 * np.pi * (g.centers - 0.1))
    assert np.max(np.abs(snap.ut[:, 0] - ut)) < 5e-3
    with pytest.raises(KeyError):
        tr.at(0.2)
