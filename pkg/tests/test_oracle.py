import math
import warnings

import numpy as np
import pytest

from degenwave import (ConstantWeight, DiscreteOperators, DomainSpec, SymmetricPower, build_mesh,
                       decoupling_check, self_convergence, solve_forward, string_series,
                       uniform_string_reference)
from degenwave.cli import smooth_data
from degenwave.errors import ClassificationError

DOM = DomainSpec(0.0, 2.0)


def test_single_mode_evolution():
    phi1 = lambda x: np.sin(np.pi * x / 2)  # noqa: E731
    x = np.linspace(0, 2, 41)
    vals, tail = uniform_string_reference(DOM, 1.0, phi1, None, t=1.3, x=x, modes=16)
    np.testing.assert_allclose(vals, math.cos(1.3 * np.pi / 2) * phi1(x), atol=1e-12)
    assert tail < 1e-12


def test_initial_time_reproduces_data():
    y0 = lambda x: x * (2 - x) * np.exp(x)  # noqa: E731
    x = np.linspace(0, 2, 17)
    vals, tail = uniform_string_reference(DOM, 1.0, y0, None, t=0.0, x=x, modes=256)
    assert np.max(np.abs(vals - y0(x))) <= max(10 * tail, 1e-6)


def test_coefficient_input():
    s = string_series(DOM, 2.0, [0.0, 1.0], [0.5])
    assert s.A.tolist()[:3] == [0.0, 1.0, 0.0]
    assert s.energy(0.0) == pytest.approx(s.energy(0.77), rel=1e-13)


def test_series_satisfies_wave_equation():
    s = string_series(DOM, 1.5, lambda x: x * (2 - x), lambda x: np.sin(np.pi * x), modes=64)
    rng = np.random.default_rng(0)
    h = 1e-3
    for t, x in zip(rng.uniform(0.1, 3.0, 8), rng.uniform(0.2, 1.8, 8)):
        ytt = (s(t + h, x) - 2 * s(t, x) + s(t - h, x)) / h ** 2
        yxx = (s(t, x + h) - 2 * s(t, x) + s(t, x - h)) / h ** 2
        assert abs(ytt - 1.5 ** 2 * yxx) < 1e-3


def _string_run(N):
    ops = DiscreteOperators(build_mesh(DOM, N, ConstantWeight(1.0)))
    y0, y1 = smooth_data(ops.x, DOM)
    tr = solve_forward(ops, y0, y1, 1.0, nsteps=N)
    return ops.x, tr.y_final, ops.mass


def test_second_order_against_series():
    series = string_series(DOM, 1.0, lambda x: smooth_data(x, DOM)[0], lambda x: smooth_data(x, DOM)[1],
                           modes=16)
    table = self_convergence(_string_run, [64, 128, 256], reference=lambda x: series(1.0, x))
    assert table.monotone
    assert 1.8 <= table.order <= 2.2


def test_self_reference_drops_finest_run():
    table = self_convergence(_string_run, [32, 64, 128, 256])
    assert table.N == [32, 64, 128]
    assert 1.8 <= table.order <= 2.2


def test_power_weight_order_reported():
    def run(N):
        w = SymmetricPower(1.5)
        ops = DiscreteOperators(build_mesh(DOM, N, w, interface="shared"))
        y0, y1 = smooth_data(ops.x, DOM)
        return ops.x, solve_forward(ops, y0, y1, 1.0, nsteps=N).y_final, ops.mass

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = self_convergence(run, [32, 64, 128, 256])
    assert math.isfinite(table.order)


@pytest.mark.parametrize("sizes", [[64, 64, 128], [64, 128]])
def test_self_convergence_rejects_bad_sizes(sizes):
    with pytest.raises(ValueError):
        self_convergence(_string_run, sizes)


def test_decoupling_split_interface_has_no_leak():
    w = SymmetricPower(1.5)
    res = decoupling_check(w, DOM, build_mesh(DOM, 1024, w), 4.0)
    assert res.relative <= 1e-6
    assert res.total_energy > 0


def test_decoupling_zero_data():
    w = SymmetricPower(1.5)
    mesh = build_mesh(DOM, 64, w)
    z = np.zeros(DiscreteOperators(mesh).ndof)
    assert decoupling_check(w, DOM, mesh, 2.0, y0=z, y1=z).max_leak == 0.0


def test_stronger_degeneration_leaks_less():
    leaks = {}
    for p in (1.1, 1.9):
        w = SymmetricPower(p)
        mesh = build_mesh(DOM, 256, w, interface="shared")
        leaks[p] = decoupling_check(w, DOM, mesh, 4.0).relative
    assert leaks[1.9] < leaks[1.1]


@pytest.mark.parametrize("interface, p", [("split", 1.5), ("shared", 1.9)])
def test_leak_nonincreasing_under_refinement(interface, p):
    w = SymmetricPower(p)
    leaks = [decoupling_check(w, DOM, build_mesh(DOM, N, w, interface=interface), 4.0).relative
             for N in (256, 512, 1024)]
    assert leaks[0] >= leaks[1] >= leaks[2]


def test_decoupling_needs_strong_weight():
    w = SymmetricPower(0.5)
    with pytest.raises(ClassificationError):
        decoupling_check(w, DOM, build_mesh(DOM, 64, w), 1.0)
