import numpy as np
import pytest

from qclausius.backends import make_backend
from qclausius.errors import ConfigurationError
from qclausius.model import ModelRecipe, ReservoirRecipe
from qclausius.processes import (
    convergence_study,
    correlation_decay_diagnostic,
    default_wait,
    mixing_diagnostic,
    protocol_cell,
    reference_chain,
    run_staircase,
    run_stepwise,
    staircase_schedule,
)
from qclausius.schedule import DriveSchedule

SMALL = ModelRecipe((ReservoirRecipe(4, beta=1.5, mu=0.1),), kappa=0.3)


def _fermi(x):
    return 1.0 / (1.0 + np.exp(x))


def _kl(p, q):
    return p * np.log(p / q) + (1 - p) * np.log((1 - p) / (1 - q))


@pytest.mark.parametrize("t0", [0.0, 0.5])
@pytest.mark.parametrize("backend", ["fock", "quadratic"])
def test_one_level_deficits_are_classical(backend, t0):
    # a single system level commutes with its own drive, so the chain is classical
    beta, mu = 1.5, 0.1
    sched = DriveSchedule.staircase([[-0.8]], [[0.6]], t0, 3, 2.0)
    chain = reference_chain(make_backend(SMALL, backend), sched)
    occ = [_fermi(beta * (sched.w_step(j)[0, 0].real - mu)) for j in range(4)]
    expected = [_kl(occ[j - 1], occ[j]) for j in range(1, 4)]
    assert np.allclose(chain.deficits, expected, atol=1e-13)
    ent = [-(p * np.log(p) + (1 - p) * np.log(1 - p)) for p in (occ[0], occ[-1])]
    assert chain.delta_s == pytest.approx(ent[1] - ent[0], abs=1e-13)


def test_trivial_drive_has_no_heat():
    sched = DriveSchedule.stepwise([[0.2]], [[0.2]], 0.5, 3.0)
    cell = protocol_cell(SMALL, sched, 0.3, "quadratic")
    assert cell.ledger.W_T == pytest.approx(0.0, abs=1e-14)
    assert cell.ledger.Q_balance == pytest.approx(0.0, abs=1e-10)
    assert cell.reference.deficits == (pytest.approx(0.0, abs=1e-14),)
    assert cell.reference.delta_s == pytest.approx(0.0, abs=1e-14)


def test_fock_and_quadratic_cells_agree():
    sched = DriveSchedule.staircase([[0.3]], [[-0.4]], 0.5, 2, 1.5)
    a = protocol_cell(SMALL, sched, 0.3, "fock", tol=1e-9)
    b = protocol_cell(SMALL, sched, 0.3, "quadratic", tol=1e-9)
    assert a.beta_q == pytest.approx(b.beta_q, abs=1e-8)
    assert a.system_entropy_final == pytest.approx(b.system_entropy_final, abs=1e-9)
    assert np.allclose(a.reference.deficits, b.reference.deficits, atol=1e-12)
    assert a.ledger.heat_mismatch <= 1e-7


def test_seven_mode_ledger_agrees_across_backends():
    rec = ModelRecipe((ReservoirRecipe(6, beta=1.0, mu=-0.2),), kappa=0.4)
    sched = DriveSchedule.stepwise([[0.5]], [[-0.5]], 0.8, 2.5)
    a = protocol_cell(rec, sched, 0.4, "fock", tol=1e-9).ledger
    b = protocol_cell(rec, sched, 0.4, "quadratic", tol=1e-9).ledger
    for name in ("Q_balance", "W_T", "Z_T", "energy_final", "n_final"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), abs=1e-8)


def test_instantaneous_quench_meets_its_budget():
    rec = ModelRecipe((ReservoirRecipe(128, beta=2.0),), kappa=0.5)
    sched = DriveSchedule.stepwise([[-1.0]], [[0.5]], 0.0, 32.0)
    v = run_stepwise(rec, sched, (0.5, 0.4, 0.3), "quadratic")
    # with t0 = 0 the ramped state is the initial one
    assert v.residual <= v.budget
    assert v.clausius_gap >= -v.budget
    assert v.status == "pass"


def test_two_site_system_uses_quantum_deficits():
    rec = ModelRecipe((ReservoirRecipe(3, beta=1.0),), kappa=0.2, system_sites=2, system_hopping=0.4)
    w0 = np.diag([0.5, -0.5])
    wf = np.array([[0.0, 0.6], [0.6, 0.0]])
    sched = DriveSchedule.staircase(w0, wf, 1.0, 2, 1.5)
    f = reference_chain(make_backend(rec, "fock"), sched)
    q = reference_chain(make_backend(rec, "quadratic"), sched)
    assert np.allclose(f.deficits, q.deficits, atol=1e-11)
    assert all(d > 0 for d in f.deficits)


def test_stepwise_verdict_fields():
    rec = ModelRecipe((ReservoirRecipe(16, beta=1.0),), kappa=0.3)
    sched = DriveSchedule.stepwise([[-0.5]], [[0.5]], 1.0, 12.0)
    v = run_stepwise(rec, sched, (0.6, 0.5, 0.4), "quadratic")
    assert v.protocol == "stepwise" and v.n_steps == 1
    assert v.kappas == (0.6, 0.5, 0.4)
    assert v.budget == pytest.approx(sum(v.budget_parts.values()))
    assert v.residual == pytest.approx(abs(v.beta_q - v.predicted_beta_q))
    assert v.status in ("pass", "warning", "fail")


def test_stepwise_rejects_staircase():
    with pytest.raises(ConfigurationError):
        run_stepwise(SMALL, staircase_schedule([[0.0]], [[1.0]], 0.5, 2, 1.0))


def test_equilibration_warning_is_attached():
    sched = DriveSchedule.staircase([[0.0]], [[0.5]], 0.5, 1, 2.0)
    v = run_staircase(SMALL, sched, (0.2, 0.1), "quadratic")
    assert any("equilibration" in w for w in v.warnings)


def test_driven_protocol_needs_one_reservoir():
    two = ModelRecipe((ReservoirRecipe(2), ReservoirRecipe(2)), kappa=0.2)
    with pytest.raises(ConfigurationError):
        protocol_cell(two, DriveSchedule.stepwise([[0.0]], [[1.0]], 0.5, 1.0), 0.2)


def test_convergence_needs_four_points():
    with pytest.raises(ConfigurationError):
        convergence_study(SMALL, [[0.0]], [[1.0]], 0.5, [1, 2, 4], (0.3, 0.2))


def test_default_wait_is_half_recurrence():
    assert default_wait(SMALL) == pytest.approx(0.5 * SMALL.recurrence_time)


@pytest.mark.parametrize("backend", ["fock", "quadratic"])
def test_mixing_diagnostic_backends_agree(backend):
    rec = ModelRecipe((ReservoirRecipe(5, beta=1.0),), kappa=0.5)
    n = rec.n_modes
    a = np.zeros((n, n))
    a[0, 0] = 1.0
    c = np.zeros((n, n))
    c[1, 1] = 1.0
    times = np.linspace(0.0, 3.0, 7)
    ref = mixing_diagnostic(rec, [[0.0]], [[0.5]], a, a, c, times, "quadratic", window=(1.0, 3.0))
    rep = mixing_diagnostic(rec, [[0.0]], [[0.5]], a, a, c, times, backend, window=(1.0, 3.0))
    assert np.allclose(rep.residual, ref.residual, atol=1e-12)
    # with B = 1 the residual vanishes identically
    none = mixing_diagnostic(rec, [[0.0]], [[0.5]], a, None, c, times, backend, window=(1.0, 3.0))
    assert np.max(none.residual) <= 1e-12


def test_mixing_residual_decays_with_reservoir_size():
    plateaus = []
    for sites in (8, 12):
        rec = ModelRecipe((ReservoirRecipe(sites, beta=1.0),), kappa=0.5)
        n = rec.n_modes
        occ = np.zeros((n, n))
        occ[0, 0] = 1.0
        times = np.linspace(0.0, rec.recurrence_time, 81)
        plateaus.append(mixing_diagnostic(rec, [[0.0]], [[0.5]], occ, occ, occ, times, "quadratic").plateau)
    assert plateaus[1] < plateaus[0]


@pytest.mark.parametrize("far", [0, 1])
def test_free_chain_commutator_integral_saturates(far):
    rec = ModelRecipe((ReservoirRecipe(12, beta=1.0),), kappa=1.0)
    n = rec.n_modes
    a = np.zeros((n, n))
    a[0, 0] = 1.0
    b = np.zeros((n, n))
    b[far, far] = 1.0
    rep = correlation_decay_diagnostic(rec, a, b, np.linspace(0.0, rec.recurrence_time, 400), "quadratic")
    assert rep.saturated


def test_correlation_decay_reports_saturation_fields():
    rec = ModelRecipe((ReservoirRecipe(24, beta=1.0),), kappa=0.5)
    n = rec.n_modes
    a = np.zeros((n, n))
    a[0, 0] = 1.0
    times = np.linspace(0.0, rec.recurrence_time, 200)
    rep = correlation_decay_diagnostic(rec, a, a.copy(), times, "quadratic")
    assert rep.norms[0] == pytest.approx(0.0, abs=1e-14)
    assert np.all(np.diff(rep.running_integral) >= 0)
    assert rep.t_rec == pytest.approx(rec.recurrence_time)
    assert isinstance(rep.saturated, bool)
