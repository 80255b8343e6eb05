"""Linearization, unstable-root counting and the damping rescale."""

import math

import numpy as np
import pytest

from _oracles import count_unstable_oracle
from delaymorse import (
    ConstantDelay,
    ImplicitDelay,
    IntegratorConfig,
    Linearization,
    PhaseSpace,
    ThresholdDelay,
    Trajectory,
    affine_kernel,
    analyze,
    count_unstable,
    DelayedArgumentMap,
    integrate,
    lag_affine,
    lag_echo,
    linear_family,
    linearize,
    smallest_odd_above,
    tanh_family,
    transform,
)


def test_linearize_pure_delayed_constant():
    model = tanh_family(0.0, 1.6, 1.0, 2.5)
    lin = linearize(model, ConstantDelay(1.0))
    assert lin.A == 0.0
    assert lin.B == pytest.approx(-1.6, abs=1e-12)
    assert lin.tau == 1.0


def test_linearize_damped_constant():
    model = tanh_family(1.0, 2.0, 1.0, 2.0)
    lin = linearize(model, ConstantDelay(0.5))
    assert lin.A == pytest.approx(-1.0, abs=1e-12)
    assert lin.B == pytest.approx(-2.0, abs=1e-12)
    assert lin.tau == 0.5


def test_linearize_threshold_freezes_kernel_at_zero():
    model = tanh_family(0.0, 1.6, 1.0, 2.5)
    lin = linearize(model, ThresholdDelay(affine_kernel(1.0, 0.25), lip_a=0.25))
    assert lin.tau == pytest.approx(1.0, abs=1e-12)
    lin2 = linearize(model, ThresholdDelay(affine_kernel(2.0, 0.1), lip_a=0.1))
    assert lin2.tau == pytest.approx(0.5, abs=1e-12)


def test_linearize_implicit_freezes_lag_at_zero():
    model = tanh_family(0.0, 1.6, 1.0, 2.5)
    lin = linearize(model, ImplicitDelay(lag_affine(1.0, 0.1, 0.0), 0.1, 0.0))
    assert lin.tau == 1.0
    lin2 = linearize(model, ImplicitDelay(lag_echo(0.8, 0.05), 0.05, 0.05))
    assert lin2.tau == pytest.approx(0.8, abs=1e-12)


def test_linearization_rejects_nonpositive_lag():
    with pytest.raises(ValueError):
        Linearization(0.0, -1.0, 0.0)


def test_characteristic_function_closed_form():
    lin = Linearization(0.5, -2.0, 1.5)
    z = 0.3 + 0.7j
    expected = z - 0.5 + 2.0 * np.exp(-z * 1.5)
    assert lin.h(z) == pytest.approx(expected, abs=1e-15)
    assert lin.h_deriv(z) == pytest.approx(1.0 - 2.0 * 1.5 * np.exp(-z * 1.5),
                                           abs=1e-15)


def test_count_stable_point():
    assert count_unstable(Linearization(0.0, -1.0, 1.0)) == (0, True)


def test_count_one_unstable_pair():
    m, hyp = count_unstable(Linearization(0.0, -2.0, 1.0))
    assert m == 2
    assert hyp


def test_count_scaled_lag():
    m, hyp = count_unstable(Linearization(0.0, -3.0, 2.0))
    assert (m, hyp) == (2, True)


def test_count_real_unstable_root():
    # positive instantaneous feedback admits a single real unstable root
    m, hyp = count_unstable(Linearization(2.0, -0.1, 2.0))
    assert (m, hyp) == (1, True)


def test_nonhyperbolic_boundary_point():
    rep = analyze(Linearization(0.0, -math.pi / 2.0, 1.0))
    assert rep.m_star == 0
    assert not rep.hyperbolic
    assert rep.axis_min < 1e-6
    assert rep.n_star == 1
    assert any("axis root" in note for note in rep.notes)


def test_n_star_parity_rule():
    # hyperbolic negative feedback carries an even count, kept as is;
    # a boundary point bumps an even count to the next odd integer
    hyperbolic_pts = [(0.0, -1.0, 1.0), (0.0, -2.0, 1.0), (-1.0, -2.0, 0.5)]
    for A, B, tau in hyperbolic_pts:
        rep = analyze(Linearization(A, B, tau))
        assert rep.hyperbolic
        assert rep.m_star % 2 == 0
        assert rep.n_star == rep.m_star
    rep = analyze(Linearization(0.0, -math.pi / 2.0, 1.0))
    assert rep.n_star == rep.m_star + 1 == 1


def test_smallest_odd_above():
    assert [smallest_odd_above(n) for n in range(6)] == [1, 3, 3, 5, 5, 7]


def test_counts_match_winding_oracle():
    for A in (-2.0, 0.0, 1.0):
        for B in (-3.0, -1.2):
            for tau in (0.5, 2.0):
                lin = Linearization(A, B, tau)
                m, _ = count_unstable(lin)
                assert m == count_unstable_oracle(A, B, tau), (A, B, tau)


def test_hayes_transition_window():
    # pure delayed feedback loses stability in a single 0 -> 2 step at -pi/2
    grid = np.linspace(-1.4, -1.8, 41)
    counts = [count_unstable(Linearization(0.0, float(B), 1.0))[0] for B in grid]
    jumps = [i for i in range(1, len(counts)) if counts[i] != counts[i - 1]]
    assert len(jumps) == 1
    j = jumps[0]
    assert counts[: j] == [0] * j
    assert counts[j:] == [2] * (len(counts) - j)
    assert abs(float(grid[j - 1]) - (-math.pi / 2.0)) <= 0.01


def test_roots_reported_for_unstable_pair():
    rep = analyze(Linearization(0.0, -2.0, 1.0))
    assert len(rep.roots) == 2
    for z in rep.roots:
        assert z.real > 0.0
        assert abs(z - 0.0 - (-2.0) * np.exp(-z)) < 1e-7
    d = rep.as_dict()
    assert d["m_star"] == 2
    assert len(d["roots"]) == 2


def test_transform_zero_solution_is_degenerate(wright_run):
    ts = np.linspace(-1.0, 10.0, 1101)
    traj = Trajectory(ts, np.zeros(1101), np.zeros(1101), space=wright_run.space)
    dmap = DelayedArgumentMap(traj, wright_run.delay)
    path = transform(traj, wright_run.model, dmap)
    assert path.degenerate
    assert np.all(path.y == 0.0)


def test_transform_without_damping_is_identity(wright_run):
    run = wright_run
    path = transform(run.traj, run.model, run.dmap, t0=0.0)
    sel = run.traj.mesh >= 0.0
    np.testing.assert_array_equal(path.y, run.traj.values[sel])
    np.testing.assert_array_equal(path.ydot, run.traj.derivs[sel])
    assert path.a_sup == 0.0
    assert path.t_c == 1.0
    inside = ~np.isnan(path.c)
    np.testing.assert_array_equal(path.c[inside], path.b[inside])
    assert not path.degenerate


def test_transform_residual_damped(damped_run):
    run = damped_run
    path = transform(run.traj, run.model, run.dmap, t0=0.0)
    y_traj = path.y_trajectory()
    scale = float(np.max(np.abs(path.y)))
    inside = ~np.isnan(path.c)
    etas = np.array([run.dmap.eta(float(t)) for t in path.ts[inside]])
    ok = etas >= path.ts[0]
    res = path.ydot[inside][ok] - path.c[inside][ok] * y_traj.eval_many(etas[ok])
    assert float(np.max(np.abs(res))) <= 1e-5 * scale


def test_transform_coefficient_bounds(damped_run):
    run = damped_run
    path = transform(run.traj, run.model, run.dmap, t0=0.0)
    assert path.c_lo == path.b_lo * math.exp(-path.K * path.a_sup)
    assert path.c_hi == path.b_hi * math.exp(path.K * path.a_sup)
    assert 0.0 < path.c_lo <= path.c_hi
    c = path.c[~np.isnan(path.c)]
    slack = 1.0 + 1e-12
    assert np.all(-c >= path.c_lo / slack)
    assert np.all(-c <= path.c_hi * slack)
    assert np.all(c < 0.0)


def test_transform_sign_agreement(damped_run):
    run = damped_run
    path = transform(run.traj, run.model, run.dmap, t0=0.0)
    sel = run.traj.mesh >= 0.0
    x = run.traj.values[sel]
    big = np.abs(x) > 1e-9 * run.space.M
    np.testing.assert_array_equal(np.sign(path.y[big]), np.sign(x[big]))


def test_transform_decomposition_residual(damped_run):
    run = damped_run
    path = transform(run.traj, run.model, run.dmap, t0=0.0)
    sel = run.traj.mesh >= 0.0
    x = run.traj.values[sel]
    etas = np.array([run.dmap.eta(float(t)) for t in path.ts])
    x_eta = run.traj.eval_many(etas)
    f_vals = np.array([run.model.f(float(u), float(v)) for u, v in zip(x, x_eta)])
    recon = path.a * x + path.b * x_eta
    scale = max(1.0, float(np.max(np.abs(f_vals))))
    assert float(np.max(np.abs(f_vals - recon))) <= 1e-8 * scale


def test_transform_rejects_tiny_span(wright_run):
    with pytest.raises(ValueError):
        transform(wright_run.traj, wright_run.model, wright_run.dmap,
                  t0=10.0, t1=10.001)


def test_transform_overflow_guard():
    model = linear_family(-30.0, -1.0, 1.0)
    space = PhaseSpace(M=1.0, K=1.0, L0=model.L0)
    delay = ConstantDelay(1.0)
    cfg = IntegratorConfig(step=0.025, horizon=24.0)
    traj = integrate(model, delay, lambda s: 0.5, cfg, space)
    dmap = DelayedArgumentMap(traj, delay)
    with pytest.raises(OverflowError):
        transform(traj, model, dmap)


def test_transform_stride_subsamples_nodes(damped_run):
    run = damped_run
    full = transform(run.traj, run.model, run.dmap, t0=0.0)
    coarse = transform(run.traj, run.model, run.dmap, t0=0.0, stride=4)
    np.testing.assert_array_equal(coarse.ts, full.ts[::4])
    assert coarse.y.shape == coarse.ts.shape
    assert coarse.c_lo > 0.0
