import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from qclausius.errors import ParameterError
from qclausius.evolution import (
    DrivenHamiltonian,
    cocycle,
    dyson_series,
    propagate,
    small_system_unitary,
)
from qclausius.linalg import max_norm, random_hermitian
from qclausius.schedule import DriveSchedule


def _ode_propagator(path, t1):
    """Independent reference: adaptive RK on dU/dt = -i H(t) U."""
    d = path.dim

    def rhs(t, y):
        u = y.reshape(d, d)
        return (-1j * path.at(t) @ u).ravel()

    sol = solve_ivp(rhs, (0.0, t1), np.eye(d, dtype=complex).ravel(), method="DOP853", rtol=1e-12, atol=1e-13)
    return sol.y[:, -1].reshape(d, d)


@pytest.fixture
def path(rng):
    s = random_hermitian(5, rng)
    dvec = random_hermitian(5, rng, scale=0.6)
    sched = DriveSchedule.staircase([[0.0]], [[1.0]], t0=0.8, n_steps=2, wait=1.3)
    return DrivenHamiltonian(s, dvec, sched)


def test_static_propagator_is_exact(rng):
    h = random_hermitian(6, rng)
    trace = propagate(DrivenHamiltonian(h), (0.0, 2.5), [0.0, 1.0, 2.5])
    for t in trace.times:
        assert max_norm(trace.at(t) - expm(-1j * h * t)) <= 1e-12
    assert trace.error_estimate == 0.0


def test_driven_propagator_matches_ode(path):
    trace = propagate(path, (0.0, path.schedule.total_time), tol=1e-8)
    ref = _ode_propagator(path, path.schedule.total_time)
    assert max_norm(trace.at(path.schedule.total_time) - ref) <= 5e-8
    assert trace.unitarity_drift() <= 1e-10


def test_stored_times_only(path):
    trace = propagate(path, (0.0, 1.0), [0.0, 1.0])
    with pytest.raises(ParameterError):
        trace.at(0.37)


def test_split_step_matches_exponential(path):
    # one splitting step against the exact exponential at the midpoint value of H
    h = 1e-3
    step = path.ramp_step(0.4, h)
    exact = expm(-1j * path.at(0.4) * h)
    assert max_norm(step - exact) <= 5e-8


def test_cocycle_reproduces_heisenberg_evolution(path, rng):
    base = random_hermitian(5, rng)
    t1 = path.schedule.total_time
    gam = cocycle(path, base, (0.0, t1), [t1], tol=1e-8).at(t1)
    u = _ode_propagator(path, t1)
    a = random_hermitian(5, rng)
    eb = expm(1j * base * t1)
    lhs = gam @ eb @ a @ eb.conj().T @ gam.conj().T
    rhs = u.conj().T @ a @ u
    assert max_norm(lhs - rhs) <= 1e-7
    assert max_norm(gam @ gam.conj().T - np.eye(5)) <= 1e-10


def test_cocycle_midpoint_holds_agree(path, rng):
    base = random_hermitian(5, rng)
    t1 = path.schedule.total_time
    exact = cocycle(path, base, (0.0, t1), [t1], tol=1e-8).at(t1)
    stepped = cocycle(path, base, (0.0, t1), [t1], tol=1e-8, exact_holds=False).at(t1)
    assert max_norm(exact - stepped) <= 1e-7


def test_small_system_unitary_is_inverse_propagator():
    sch = DriveSchedule.stepwise([[0.2, 0.1], [0.1, -0.3]], [[0.0, 0.5], [0.5, 0.4]], 0.6, 0.6)
    u = small_system_unitary(sch, [0.6])[0]
    path = DrivenHamiltonian(sch.w0, sch.wf - sch.w0, sch)
    assert max_norm(u - _ode_propagator(path, 0.6).conj().T) <= 1e-9


def test_dyson_series_against_closed_form(rng):
    h = random_hermitian(4, rng)
    v = random_hermitian(4, rng, scale=0.2)
    v *= 0.5 / np.linalg.norm(v, 2)
    t = 1.5
    res = dyson_series(-h, v, t, n_max=12, tol=1e-8)
    ref = expm(-1j * (h - v) * t) @ expm(1j * h * t)
    assert max_norm(res.y - ref) <= 1e-8
    assert res.truncation_bound <= 1e-8
    assert res.quadrature_estimate <= 1e-10


def test_dyson_rejects_insufficient_order(rng):
    h = random_hermitian(3, rng)
    v = 2.0 * np.eye(3)
    with pytest.raises(ParameterError, match="n_max"):
        dyson_series(-h, v, 3.0, n_max=4)
    with pytest.raises(ParameterError):
        dyson_series(-h, v, 0.1, n_max=13)


def _driven_model(sites, kappa):
    from qclausius.backends import FockBackend
    from qclausius.model import ModelRecipe, ReservoirRecipe

    be = FockBackend(ModelRecipe((ReservoirRecipe(sites, beta=1.0),), kappa=kappa))
    sched = DriveSchedule.stepwise([[-0.5]], [[0.7]], 1.0, 2.0)
    path = DrivenHamiltonian(be.hamiltonian(be.lift_system(sched.w0)), be.lift_system(sched.wf - sched.w0), sched)
    return be, sched, path


def test_step_control_against_finer_grid():
    from qclausius.evolution import _propagate_once

    _, sched, path = _driven_model(3, 0.3)
    trace = propagate(path, (0.0, 2.0), [2.0], tol=1e-9)
    finer = _propagate_once(path, 0.0, 2.0, 10 * trace.steps_per_unit, [2.0])[0]
    assert max_norm(trace.at(2.0) - finer) <= 1e-8


def test_cocycle_identity_on_lattice_model():
    be, sched, path = _driven_model(2, 0.4)
    base = be.h_system + sum(be.h_reservoirs)
    n_s = be.n_system
    gam = cocycle(path, base, (0.0, 2.0), [2.0], tol=1e-9).at(2.0)
    eb = expm(1j * base * 2.0)
    u = propagate(path, (0.0, 2.0), [2.0], tol=1e-9).at(2.0)
    lhs = gam @ eb @ n_s @ eb.conj().T @ gam.conj().T
    assert max_norm(lhs - u.conj().T @ n_s @ u) <= 1e-8


def test_ramp_cocycle_stays_near_system_unitary():
    for kappa in (0.05, 0.2):
        be, sched, path = _driven_model(3, kappa)
        t0 = sched.t0
        base = be.h_system + sum(be.h_reservoirs)
        gam = cocycle(path, base, (0.0, t0), [t0], tol=1e-9).at(t0)
        u = small_system_unitary(sched, [t0], lift=be.lift_system)[0]
        bound = kappa * t0 * np.linalg.norm(be.v, 2)
        assert max_norm(gam - u) <= bound
