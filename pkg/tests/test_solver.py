import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from degenwave import (BoundaryData, ConstantWeight, DiscreteOperators, DomainSpec, SymmetricPower,
                       analyze, build_mesh, cfl_dt, solve_backward, solve_forward, string_series)
from degenwave.cli import smooth_data
from degenwave.errors import SolverError, StabilityError
from degenwave.observability import trace_upper_bounds
from degenwave.oracle import one_sided_bump
from degenwave.solver import LEAPFROG, MIDPOINT, pcg

DOM = DomainSpec(0.0, 2.0)


def make_ops(w, N, **kw):
    return DiscreteOperators(build_mesh(DOM, N, w, **kw))


# -- time step bounds --------------------------------------------------------------

def test_cfl_nondegenerate():
    assert cfl_dt(build_mesh(DOM, 8, ConstantWeight(1.0)), 1.0) == pytest.approx(0.25)


def test_cfl_degenerate_set_by_outer_cells():
    # per-cell h / sqrt(a_mid): 0.25/sqrt(0.125) = 0.707 next to x = 1, but the
    # outermost cells (a_mid = 0.875) give the minimum 0.25/sqrt(0.875)
    mesh = build_mesh(DOM, 8, SymmetricPower(1.0))
    ratios = mesh.h / np.sqrt(mesh.a_mid)
    assert ratios[3] == pytest.approx(0.25 / math.sqrt(0.125))
    assert cfl_dt(mesh, 1.0) == pytest.approx(0.25 / math.sqrt(0.875))
    assert cfl_dt(mesh, 0.5) == pytest.approx(0.125 / math.sqrt(0.875))


def test_cfl_rejects_bad_safety():
    with pytest.raises(ValueError):
        cfl_dt(build_mesh(DOM, 8, SymmetricPower(1.0)), 1.5)


def test_leapfrog_refuses_unstable_step():
    ops = make_ops(SymmetricPower(0.5), 64)
    y0, y1 = smooth_data(ops.x, DOM)
    with pytest.raises(StabilityError):
        solve_forward(ops, y0, y1, 1.0, scheme=LEAPFROG, dt=0.5)


# -- trivial runs -----------------------------------------------------------------

@pytest.mark.parametrize("scheme", [MIDPOINT, LEAPFROG])
def test_zero_data_zero_trajectory(scheme):
    ops = make_ops(SymmetricPower(0.5), 32)
    z = np.zeros(ops.ndof)
    tr = solve_forward(ops, z, z, 1.0, scheme=scheme)
    assert not np.any(tr.energy)
    assert not np.any(tr.flux_c) and not np.any(tr.flux_d)
    assert not np.any(tr.y_final)


def test_zero_backward_run():
    ops = make_ops(SymmetricPower(1.5), 32)
    z = np.zeros(ops.ndof)
    tr = solve_backward(ops, z, z, 1.0)
    assert not np.any(tr.energy) and not np.any(tr.y_final)


def test_mismatched_boundary_data_rejected():
    ops = make_ops(SymmetricPower(0.5), 16)
    z = np.zeros(ops.ndof)
    with pytest.raises(ValueError):
        solve_forward(ops, z, z, 1.0, BoundaryData.zero(1.0, 0.3), nsteps=10)


def test_initial_jump_rejected_unless_allowed():
    ops = make_ops(SymmetricPower(0.5), 16)
    y0 = np.ones(ops.ndof)
    z = np.zeros(ops.ndof)
    with pytest.raises(ValueError):
        solve_forward(ops, y0, z, 1.0)
    tr = solve_forward(ops, y0, z, 1.0, allow_jump=True)
    assert tr.y_final[0] == 0.0 and tr.y_final[-1] == 0.0


# -- accuracy against closed forms ---------------------------------------------------

def _string_error(N, scheme):
    ops = make_ops(ConstantWeight(1.0), N)
    y0 = np.sin(np.pi * ops.x / 2)
    nsteps = N if scheme == MIDPOINT else 2 * N
    tr = solve_forward(ops, y0, np.zeros(ops.ndof), 1.0, scheme=scheme, nsteps=nsteps)
    exact = math.cos(np.pi / 2) * np.sin(np.pi * ops.x / 2)
    e = tr.y_final - exact
    return math.sqrt(ops.inner(e, e))


@pytest.mark.parametrize("scheme", [MIDPOINT, LEAPFROG])
def test_first_string_mode_second_order(scheme):
    errs = [_string_error(N, scheme) for N in (64, 128, 256)]
    assert errs[-1] < 1e-3
    assert math.log2(errs[1] / errs[2]) == pytest.approx(2.0, abs=0.2)


def test_series_oracle_agrees_with_mode_formula():
    s = string_series(DOM, 1.0, lambda x: np.sin(np.pi * x / 2), None, modes=8)
    x = np.linspace(0, 2, 33)
    np.testing.assert_allclose(s(0.7, x), math.cos(0.7 * np.pi / 2) * np.sin(np.pi * x / 2), atol=1e-12)


@pytest.mark.parametrize("scheme", [MIDPOINT, LEAPFROG])
def test_travelling_wave_with_dirichlet_data(scheme):
    def exact(t, x):
        return np.sin(2 * (x - t))

    errs = []
    for N in (64, 128, 256):
        ops = make_ops(ConstantWeight(1.0), N)
        n = N if scheme == MIDPOINT else 2 * N
        bd = BoundaryData.from_functions(lambda t: exact(t, 0.0), lambda t: exact(t, 2.0), 1.0, 1.0 / n)
        tr = solve_forward(ops, exact(0, ops.x), -2 * np.cos(2 * ops.x), 1.0, bd, scheme=scheme,
                           nsteps=n)
        e = tr.y_final - exact(1.0, ops.x)
        errs.append(math.sqrt(ops.inner(e, e)))
    assert errs[-1] < 1e-4
    assert math.log2(errs[1] / errs[2]) == pytest.approx(2.0, abs=0.1)


# -- conservation --------------------------------------------------------------------

@pytest.mark.parametrize("p", [0.5, 1.5])
def test_midpoint_conserves_energy_over_many_steps(p):
    ops = make_ops(SymmetricPower(p), 128)
    y0, y1 = smooth_data(ops.x, DOM)
    tr = solve_forward(ops, y0, y1, 5.0, nsteps=10_000)
    assert tr.energy_drift() <= 1e-8


def test_leapfrog_energy_oscillation_bounded():
    ops = make_ops(SymmetricPower(0.5), 256)
    y0, y1 = smooth_data(ops.x, DOM)
    tr = solve_forward(ops, y0, y1, 10.0, scheme=LEAPFROG)
    assert len(tr.times) > 1000
    assert tr.energy_drift() <= 1e-3


def test_pcg_matches_direct_solver():
    ops = make_ops(SymmetricPower(0.5), 128)
    y0, y1 = smooth_data(ops.x, DOM)
    a = solve_forward(ops, y0, y1, 1.0, nsteps=200)
    b = solve_forward(ops, y0, y1, 1.0, nsteps=200, linear_solver="pcg")
    np.testing.assert_allclose(b.y_final, a.y_final, atol=1e-10)


def test_pcg_reports_failure():
    A = np.diag(np.arange(1.0, 51.0))
    b = np.ones(50)
    with pytest.raises(SolverError) as info:
        pcg(lambda x: A @ x + 1e-3 * x[::-1], b, np.ones(50), tol=1e-14, maxiter=2)
    assert len(info.value.residuals) == 3


def test_backward_energy_constant_and_time_reversal():
    ops = make_ops(SymmetricPower(0.5), 128)
    w0, w1 = smooth_data(ops.x, DOM)
    bt = solve_backward(ops, w0, w1, 2.0, nsteps=400)
    assert bt.energy_drift() <= 1e-10
    # running forward from the backward result lands on the final data
    ft = solve_forward(ops, bt.y_final, bt.v_final, 2.0, nsteps=400)
    np.testing.assert_allclose(ft.y_final, w0, atol=1e-10)
    np.testing.assert_allclose(ft.v_final, w1, atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_solution_map_is_linear(seed, a, b):
    ops = make_ops(SymmetricPower(0.7), 32)
    rng = np.random.default_rng(seed)
    u0, u1, v0, v1 = (rng.standard_normal(ops.ndof) for _ in range(4))
    for u in (u0, v0):
        u[0] = u[-1] = 0.0
    ru = solve_forward(ops, u0, u1, 0.5, nsteps=40)
    rv = solve_forward(ops, v0, v1, 0.5, nsteps=40)
    rs = solve_forward(ops, a * u0 + b * v0, a * u1 + b * v1, 0.5, nsteps=40)
    np.testing.assert_allclose(rs.y_final, a * ru.y_final + b * rv.y_final, atol=1e-10)


def test_runs_are_deterministic():
    ops = make_ops(SymmetricPower(0.5), 64)
    y0, y1 = smooth_data(ops.x, DOM)
    a = solve_forward(ops, y0, y1, 1.0)
    b = solve_forward(ops, y0, y1, 1.0)
    assert np.array_equal(a.energy, b.energy) and np.array_equal(a.flux_c, b.flux_c)


# -- traces and transmission ------------------------------------------------------

@pytest.mark.parametrize("T", [3.0, 6.0])
def test_trace_upper_bounds(T):
    w = SymmetricPower(0.5)
    rep = analyze(w, DOM)
    ops = make_ops(w, 512)
    y0, y1 = smooth_data(ops.x, DOM)
    tr = solve_forward(ops, y0, y1, T)
    bc, bd = trace_upper_bounds(rep, DOM, T, tr.energy[0])
    assert rep.a_c * trapezoid(tr.flux_c ** 2, tr.times) <= 1.1 * bc
    assert rep.a_d * trapezoid(tr.flux_d ** 2, tr.times) <= 1.1 * bd


def _interface_fluxes(w, N, **kw):
    ops = make_ops(w, N, **kw)
    y0, y1 = smooth_data(ops.x, DOM)
    y = solve_forward(ops, y0, y1, 1.0, nsteps=2 * N).y_final
    j, r = ops.left_end, ops.right_start
    return ops.coupling[j - 1] * (y[j] - y[j - 1]), ops.coupling[r] * (y[r + 1] - y[r])


def test_weak_fluxes_meet_at_the_singularity():
    gaps = []
    for N in (128, 256, 512):
        left, right = _interface_fluxes(SymmetricPower(0.5), N)
        gaps.append(abs(left - right))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[1] / gaps[2] == pytest.approx(2.0, rel=0.1)


@pytest.mark.parametrize("interface", ["shared", "split"])
def test_strong_fluxes_vanish_at_the_singularity(interface):
    sizes = []
    for N in (128, 256, 512, 1024):
        sizes.append(max(abs(f) for f in _interface_fluxes(SymmetricPower(1.5), N, interface=interface)))
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    assert sizes[-1] < 1e-3


def test_strong_sides_decouple():
    ops = make_ops(SymmetricPower(1.5), 256)
    x = ops.x
    s = (x - 1.2) / 0.6
    y0 = np.where((s > 0) & (s < 1) & (np.arange(len(x)) >= ops.right_start),
                  np.sin(np.pi * s) ** 4, 0.0)
    tr = solve_forward(ops, y0, np.zeros(ops.ndof), 4.0, store_stride=16)
    left = tr.ys[:, :ops.left_end + 1]
    assert np.max(np.abs(left)) == 0.0
    assert np.max(np.abs(tr.ys[:, ops.right_start:])) > 0.1


def test_trajectory_files(tmp_path):
    ops = make_ops(SymmetricPower(0.5), 32)
    y0 = one_sided_bump(ops, "left")
    tr = solve_forward(ops, y0, np.zeros(ops.ndof), 1.0, nsteps=20, store_stride=5)
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,E,flux_c,flux_d" and len(lines) == 22
    tr.dump_snapshots(tmp_path / "s.npz")
    with np.load(tmp_path / "s.npz") as z:
        assert z["y"].shape == (5, ops.ndof)
