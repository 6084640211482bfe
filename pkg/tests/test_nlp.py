import numpy as np
import pytest

from bpms.analog import _grad_phi, _initial_phases, _phase_step, analog_objective
from bpms.digital import guides
from bpms.nlp import SqpOptions, gradient_projection_unit_modulus, sqp_minimize
from bpms.scenario import derive_channel_params, steering_matrix, steering_vector

from conftest import small_config


def test_equality_constrained_quadratic():
    f = lambda x: ((x[0] - 1) ** 2 + (x[1] - 2) ** 2, np.array([2 * (x[0] - 1), 2 * (x[1] - 2)]))
    g = lambda x: (np.array([x[0] + x[1] - 1]), np.array([[1.0, 1.0]]))
    x, rep = sqp_minimize(f, g, None, [3.0, -1.0])
    assert rep.status == "optimal"
    np.testing.assert_allclose(x, [0.0, 1.0], atol=1e-7)
    assert abs(rep.multipliers["eq"][0]) == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("x0", [3.0, -3.0, 1.0])
def test_active_bound(x0):
    # h(x) = 1 - x <= 0
    f = lambda x: (x[0] ** 2, 2 * x)
    h = lambda x: (np.array([1.0 - x[0]]), np.array([[-1.0]]))
    x, rep = sqp_minimize(f, None, h, [x0])
    assert rep.status == "optimal"
    assert x[0] == pytest.approx(1.0, abs=1e-8)
    assert rep.multipliers["ineq"][0] == pytest.approx(2.0, rel=1e-6)


def test_rosenbrock_unconstrained():
    def f(x):
        return (100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2,
                np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)]))
    x, rep = sqp_minimize(f, None, None, [-1.2, 1.0], SqpOptions(max_iter=500))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-5)


def test_elastic_mode_on_inconsistent_linearisation():
    # h(x) = x^2 + 1 <= 0 has no solution; the subproblem relaxation must engage
    f = lambda x: (x[0] ** 2, 2 * x)
    h = lambda x: (np.array([x[0] ** 2 + 1.0]), np.array([[2 * x[0]]]))
    x, rep = sqp_minimize(f, None, h, [0.5], SqpOptions(max_iter=30))
    assert "elastic" in rep.flags
    assert np.all(np.isfinite(x))


def test_merit_decreases_on_accepted_steps():
    f = lambda x: ((x[0] - 2) ** 2 + (x[1] + 1) ** 4, np.array([2 * (x[0] - 2), 4 * (x[1] + 1) ** 3]))
    h = lambda x: (np.array([x[0] + x[1] - 0.5]), np.array([[1.0, 1.0]]))
    x, rep = sqp_minimize(f, None, h, [0.0, 3.0])
    # history rows are (f, merit, violation, penalty); compare under a common penalty
    assert len(rep.history) > 1
    for (_, m0, _, p0), (_, m1, _, p1) in zip(rep.history, rep.history[1:]):
        if p0 == p1:
            assert m1 <= m0 + 1e-12 * max(1.0, abs(m0))


def test_sqp_deterministic():
    f = lambda x: (np.sum((x - 1.5) ** 2) + np.sum(x ** 4), 2 * (x - 1.5) + 4 * x ** 3)
    h = lambda x: (-x, -np.eye(3))
    a, _ = sqp_minimize(f, None, h, np.array([0.1, 2.0, 0.5]))
    b, _ = sqp_minimize(f, None, h, np.array([0.1, 2.0, 0.5]))
    np.testing.assert_array_equal(a, b)


def _projected_gradient(rho, Phi, Psi, iters=400):
    val = analog_objective(rho, Phi, Psi)
    step = 1.0
    for _ in range(iters):
        g = _grad_phi(rho, Phi, Psi)
        while step > 1e-12:
            cand = np.mod(Phi - step * g, 2 * np.pi)
            new = analog_objective(rho, cand, Psi)
            if new <= val - 1e-4 * step * np.sum(g * g):
                Phi, val = cand, new
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    return val


def test_phase_subproblem_against_random_restarts():
    cfg = small_config()
    p = derive_channel_params(cfg)
    g = guides(p, cfg)
    P = cfg.power_per_subcarrier
    Psi = 0.5 * (g.V_bp + g.V_ms) / P
    rho = np.array([0.6, 0.4])
    Phi0, _ = _initial_phases(Psi, 2, np.random.default_rng(0))
    Phi, _ = _phase_step(rho, Phi0, Psi)
    ours = analog_objective(rho, Phi, Psi)
    rng = np.random.default_rng(1)
    best = min(_projected_gradient(rho, rng.uniform(0, 2 * np.pi, (4, 2)), Psi) for _ in range(50))
    assert ours <= best + 1e-4


def test_unit_modulus_feasible_target():
    T = steering_matrix(-np.pi / 2 + np.arange(64) * np.pi / 64, 8).conj().T
    a = 1.7 * steering_vector(0.3, 8)
    fit = gradient_projection_unit_modulus(a, T)
    assert fit.objective < 1e-8
    assert fit.amplitude == pytest.approx(1.7, rel=1e-8)
    rot = np.exp(1j * fit.phases) / (a / np.abs(a))
    np.testing.assert_allclose(rot, rot[0], atol=1e-6)


def test_unit_modulus_zero_target():
    T = steering_matrix(np.linspace(-1, 1, 32), 6).conj().T
    fit = gradient_projection_unit_modulus(np.zeros(6), T)
    assert fit.amplitude == 0.0


def test_unit_modulus_history_monotone():
    rng = np.random.default_rng(4)
    T = steering_matrix(-np.pi / 2 + np.arange(64) * np.pi / 64, 8).conj().T
    t = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    fit = gradient_projection_unit_modulus(t, T)
    h = np.array(fit.history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])
    assert fit.iterations <= 500
    np.testing.assert_allclose(np.abs(fit.vector), fit.amplitude)
