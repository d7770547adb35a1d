import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given
from hypothesis import strategies as st

from relaxbl import solver as sv
from relaxbl.equilibrium import homogeneous_relaxation_exact
from relaxbl.hypotheses import RelaxationMatrix, suggest_A
from relaxbl.systems import build_system, exact_solution_linear_reaction, make_linear_reaction


def cfg_for(sys, eps=1e-2, t_end=0.1, **kw):
    return sv.SolverConfig(eps=eps, t_end=t_end, A=suggest_A(sys), **kw)


def sine(n, amp=0.1):
    return lambda x: np.stack([amp * np.sin(2 * np.pi * x + k) for k in range(n)], axis=-1)


def test_grid_centres_and_validation():
    g = sv.Grid1D(0.0, 2.0, 4)
    assert g.dx == 0.5
    assert np.allclose(g.centers, [0.25, 0.75, 1.25, 1.75])
    for bad in [(0, 1, 0), (1, 0, 4)]:
        with pytest.raises(ValueError):
            sv.Grid1D(*bad)
    with pytest.raises(ValueError):
        sv.Grid1D(0, 1, 4, boundary="outflow")


@pytest.mark.parametrize("kw", [{"eps": 0.0}, {"t_end": -1.0}, {"cfl": 1.5}, {"order": 3}, {"model": "x"}])
def test_config_validation(kw):
    s = build_system("linear_reaction")
    base = dict(eps=1e-2, t_end=0.1, A=suggest_A(s))
    base.update(kw)
    with pytest.raises(ValueError):
        sv.SolverConfig(**base)


def test_global_term_examples():
    s = make_linear_reaction(0.0, -1.0)  # G(u) = u
    g = sv.Grid1D(0.0, 1.0, 4)
    R = sv.compute_global_term(s, np.ones((4, 1)), g)
    assert np.allclose(R[:, 0], [0.125, 0.375, 0.625, 0.875])
    assert R[0, 0] == pytest.approx(0.5 * g.dx * 1.0)

    assert np.all(sv.compute_global_term(make_linear_reaction(1.0, 0.0), np.ones((4, 1)), g) == 0.0)

    for n in (16, 32):
        g = sv.Grid1D(0.0, 1.0, n)
        R = sv.compute_global_term(s, g.centers[:, None], g)[:, 0]
        assert np.max(np.abs(R - 0.5 * g.centers**2)) <= g.dx**2


def test_init_well_prepared_examples():
    g = sv.Grid1D(0.0, 1.0, 8)
    s0 = make_linear_reaction(1.0, 0.0)
    f = sv.init_well_prepared(s0, g, lambda x: np.full((len(x), 1), 2.0))
    assert np.allclose(f.v, s0.F(f.u)) and np.all(f.global_term == 0)

    s = make_linear_reaction(1.0, 1.0)
    c = 0.7
    f = sv.init_well_prepared(s, g, lambda x: np.full((len(x), 1), c))
    xi = g.centers - g.x_min
    assert np.allclose(f.global_term[:, 0], -c * xi, atol=1e-15)
    assert np.allclose(f.v[:, 0], c + c * xi, atol=1e-15)
    assert np.allclose(sv.compute_global_term(s, f.u, g), f.global_term, atol=1e-14)

    e = build_system("elasticity")
    f = sv.init_well_prepared(e, g, lambda x: np.stack([0.1 * np.sin(2 * np.pi * x), 0 * x], -1))
    assert np.allclose(f.v, e.F(f.u), atol=1e-15)


def test_constant_equilibrium_is_fixed_point():
    s = make_linear_reaction(1.0, 0.0)
    g = sv.Grid1D(0.0, 1.0, 32)
    cfg = cfg_for(s, t_end=0.3)
    tr = sv.run(s, g, lambda x: np.full((len(x), 1), 1.5), cfg)
    assert np.max(np.abs(tr.final.u - 1.5)) < 1e-13
    assert np.max(np.abs(tr.final.v - 1.5)) < 1e-13


@pytest.mark.parametrize("order", [1, 2])
def test_homogeneous_ode_oracle(order):
    g = sv.Grid1D(0.0, 1.0, 8)
    s = make_linear_reaction(0.0, 1.0)
    eps = 0.1
    cfg = sv.SolverConfig(eps=eps, t_end=1.0, A=RelaxationMatrix.scaled_identity(1, 4.0), order=order, dt_max=1e-3)
    tr = sv.run(s, g, lambda x: np.ones((len(x), 1)), cfg)
    ex = homogeneous_relaxation_exact(eps, 1.0, 1.0, 1.0)
    err = np.max(np.abs(tr.final.u - ex)) / abs(ex)
    assert err < (5e-3 if order == 1 else 1e-5)


def test_stiff_limit_projects_onto_equilibrium():
    s = build_system("linear_reaction")
    g = sv.Grid1D(0.0, 1.0, 32)
    f = sv.init_well_prepared(s, g, sine(1))
    f = replace(f, v=f.v + 0.3)
    cfg = cfg_for(s, eps=1e-14, order=1)
    new = sv.step(s, f, cfg, dt=1e-3)
    assert sv.equilibrium_residual(s, new) < 1e-9


@pytest.mark.parametrize("order", [1, 2])
def test_conservation_without_source(order):
    s = build_system("elasticity", {"damping": "none"})
    g = sv.Grid1D(0.0, 1.0, 64)
    tr = sv.run(s, g, sine(2, 0.3), cfg_for(s, t_end=0.2, order=order))
    m0 = tr.snapshots[0].u.sum(axis=0) * g.dx
    m1 = tr.final.u.sum(axis=0) * g.dx
    assert np.all(np.abs(m1 - m0) <= 1e-12 * np.maximum(1.0, np.abs(m0)))


def test_mass_balance_with_source():
    # d/dt int u = int G(u) + seam jump contribution; for the linear system int u decays like exp(-lam t)
    s = build_system("linear_reaction")
    g = sv.Grid1D(0.0, 1.0, 128)
    tr = sv.run(s, g, lambda x: (1.0 + 0.2 * np.sin(2 * np.pi * x))[:, None], cfg_for(s, eps=1e-3, t_end=0.2))
    m = np.array([f.u.sum() * g.dx for f in tr.snapshots])
    assert m[-1] == pytest.approx(np.exp(-0.2), rel=2e-3)


@given(cfl=st.floats(0.05, 1.0), n=st.integers(8, 200))
def test_cfl_bound(cfl, n):
    s = build_system("elasticity")
    g = sv.Grid1D(0.0, 1.0, n)
    cfg = cfg_for(s, cfl=cfl, t_end=0.37)
    nsteps, dt = sv.uniform_schedule(g, cfg)
    assert dt <= cfl * g.dx / np.sqrt(cfg.A.mu.max()) * (1 + 1e-12)
    assert nsteps * dt == pytest.approx(0.37, rel=1e-14)


def test_t_end_zero_returns_initial_field():
    s = build_system("linear_reaction")
    g = sv.Grid1D(0.0, 1.0, 16)
    tr = sv.run(s, g, sine(1), cfg_for(s, t_end=0.0))
    assert len(tr.snapshots) == 1 and tr.final.time == 0.0
    assert len(tr.dts) == 0


def test_snapshot_schedule_includes_final_time():
    s = build_system("linear_reaction")
    g = sv.Grid1D(0.0, 1.0, 64)
    cfg = cfg_for(s, t_end=0.1, snapshot_every=7)
    tr = sv.run(s, g, sine(1), cfg)
    assert np.array_equal(tr.times, sv.snapshot_times(g, cfg))
    assert tr.times[-1] == pytest.approx(0.1, rel=1e-14)


def test_runs_are_bitwise_deterministic():
    s = build_system("combustion")
    g = sv.Grid1D(0.0, 1.0, 64)
    u0 = lambda x: np.stack([0.5 * np.sin(2 * np.pi * x), 0.5 * np.cos(2 * np.pi * x),
                             0.5 + 0.5 * np.sin(2 * np.pi * x + 2)], -1)
    a = sv.run(s, g, u0, cfg_for(s, t_end=0.1))
    b = sv.run(s, g, u0, cfg_for(s, t_end=0.1))
    for fa, fb in zip(a.snapshots, b.snapshots):
        assert np.array_equal(fa.u, fb.u) and np.array_equal(fa.v, fb.v)


@pytest.mark.parametrize("order", [1, 2])
def test_models_agree_without_source(order):
    s = build_system("elasticity", {"damping": "none"})
    g = sv.Grid1D(0.0, 1.0, 64)
    a = sv.run(s, g, sine(2), cfg_for(s, order=order))
    b = sv.run(s, g, sine(2), cfg_for(s, order=order, model="alternative"))
    assert np.array_equal(a.final.u, b.final.u) and np.array_equal(a.final.v, b.final.v)


def test_alternative_model_well_prepared_has_no_global_term():
    s = build_system("linear_reaction")
    g = sv.Grid1D(0.0, 1.0, 16)
    f = sv.init_well_prepared(s, g, sine(1), model="alternative")
    assert np.all(f.global_term == 0.0)
    assert np.allclose(f.v, s.F(f.u))
    assert np.allclose(f.u_source, s.G(f.u))


def test_chapman_enskog_residual_is_order_eps():
    s = build_system("elasticity")
    g = sv.Grid1D(0.0, 1.0, 256)
    res = []
    for eps in (4e-3, 2e-3, 1e-3):
        tr = sv.run(s, g, sine(2), cfg_for(s, eps=eps, t_end=0.3))
        res.append(sv.equilibrium_residual(s, tr.final))
    rates = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(rates > 0.8) and np.all(rates < 1.2)


def test_linear_reaction_converges_to_characteristics():
    s = build_system("linear_reaction")
    u0 = lambda x: np.sin(2 * np.pi * x)[:, None]
    errs = []
    for eps in (4e-3, 1e-3):
        g = sv.Grid1D(0.0, 1.0, 512)
        tr = sv.run(s, g, u0, cfg_for(s, eps=eps, t_end=0.5))
        ex = exact_solution_linear_reaction(s, u0, g.centers, 0.5)
        errs.append(np.sqrt(g.dx * np.sum((tr.final.u - ex) ** 2)))
    assert errs[1] < errs[0] / 3


def test_seam_jump_tracks_source_integral():
    s = build_system("linear_reaction")
    g = sv.Grid1D(0.0, 1.0, 64)
    u0 = lambda x: (1.0 + 0.5 * np.sin(2 * np.pi * x))[:, None]
    tr = sv.run(s, g, u0, cfg_for(s, eps=1e-4, t_end=0.05))
    f = tr.final
    J = g.dx * np.sum(s.G(f.u), axis=0)
    # relaxes to -J with an O(eps |dJ/dt|) lag
    assert np.allclose(f.seam_jump, -J, atol=3e-4)


def test_blow_up_is_reported():
    s = build_system("elasticity", {"damping": "anti", "damping_rate": 50.0})
    g = sv.Grid1D(0.0, 1.0, 32)
    with pytest.raises(sv.SolverError):
        sv.run(s, g, sine(2), cfg_for(s, t_end=1.0, box_inflation=2.0))


def test_bad_initial_profile():
    s = build_system("elasticity")
    g = sv.Grid1D(0.0, 1.0, 8)
    with pytest.raises(ValueError):
        sv.init_well_prepared(s, g, np.zeros((8, 3)))
    with pytest.raises(ValueError):
        sv.init_well_prepared(s, g, lambda x: np.full((len(x), 2), np.nan))
