import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qclausius.errors import ConfigurationError, StructuralError
from qclausius.schedule import PROFILES, DriveSchedule, commuting_with_number


@pytest.mark.parametrize("name", sorted(PROFILES))
def test_profiles_are_smooth_unit_steps(name):
    phi, dphi = PROFILES[name]
    s = np.linspace(0, 1, 401)
    assert phi(0.0) == 0.0 and phi(1.0) == pytest.approx(1.0)
    assert dphi(0.0) == 0.0 and dphi(1.0) == pytest.approx(0.0)
    assert np.all(np.diff(phi(s)) >= 0)
    # derivative agrees with a centered difference
    h = 1e-6
    mid = s[1:-1]
    fd = (phi(mid + h) - phi(mid - h)) / (2 * h)
    assert np.max(np.abs(fd - dphi(mid))) < 1e-7


def test_staircase_plateaus_and_starts():
    sch = DriveSchedule.staircase([[0.0]], [[2.0]], t0=0.5, n_steps=4, wait=3.0)
    assert sch.step_starts == (0.0, 3.0, 6.0, 9.0)
    assert sch.total_time == 12.0
    for j, s in enumerate(sch.step_starts):
        # after the ramp of step j+1 the drive sits on plateau j+1
        assert sch.w(s + 1.0)[0, 0].real == pytest.approx(2.0 * (j + 1) / 4)
        assert sch.g_dot(s + 1.0) == 0.0
    assert sch.g(12.0) == 1.0 and sch.g(-1.0) == 0.0


@given(st.integers(1, 6), st.floats(0.1, 2.0), st.floats(0.0, 1.0))
def test_g_is_monotone_and_continuous(n, t0, frac):
    sch = DriveSchedule.staircase([[0.0]], [[1.0]], t0=t0, n_steps=n, wait=t0 + 1.0)
    t = np.linspace(0, sch.total_time, 2001)
    g = np.array([sch.g(x) for x in t])
    assert np.all(np.diff(g) >= -1e-15)
    assert np.max(np.abs(np.diff(g))) < 0.05
    x = frac * sch.total_time
    assert 0.0 <= sch.g(x) <= 1.0


def test_g_dot_integrates_to_one():
    from scipy.integrate import quad

    sch = DriveSchedule.staircase([[0.0]], [[1.0]], t0=0.7, n_steps=3, wait=2.0, profile="cubic")
    total = sum(quad(sch.g_dot, s, s + 0.7)[0] for s in sch.step_starts)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_segments_cover_horizon():
    sch = DriveSchedule.stepwise([[0.0]], [[1.0]], t0=0.5, horizon=2.0)
    segs = sch.segments(3.0)
    assert [(s.kind, s.start, s.end) for s in segs] == [("ramp", 0.0, 0.5), ("hold", 0.5, 2.0), ("hold", 2.0, 3.0)]


def test_instantaneous_steps_are_jumps():
    sch = DriveSchedule.staircase([[0.0]], [[1.0]], t0=0.0, n_steps=2, wait=1.0)
    assert sch.jumps() == [(0.0, 0.5), (1.0, 0.5)]
    assert all(s.kind == "hold" for s in sch.segments())


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(w0=[[0.0]], wf=[[1.0]], t0=-1.0, n_steps=1, wait=1.0),
        dict(w0=[[0.0]], wf=[[1.0]], t0=2.0, n_steps=1, wait=1.0),
        dict(w0=[[0.0]], wf=[[1.0]], t0=0.5, n_steps=0, wait=1.0),
        dict(w0=[[0.0]], wf=[[0.0, 1.0], [1.0, 0.0]], t0=0.5, n_steps=1, wait=1.0),
        dict(w0=[[0.0]], wf=[[1.0]], t0=0.5, n_steps=2, wait=[1.0, 2.0, 3.0]),
    ],
)
def test_invalid_schedules(kwargs):
    with pytest.raises(ConfigurationError):
        DriveSchedule.staircase(**kwargs)


def test_non_hermitian_drive_is_structural():
    with pytest.raises(StructuralError):
        DriveSchedule.stepwise([[0.0, 1.0], [0.0, 0.0]], np.zeros((2, 2)), 0.5, 1.0)


def test_unknown_profile():
    with pytest.raises(ConfigurationError):
        DriveSchedule.stepwise([[0.0]], [[1.0]], 0.5, 1.0, profile="linear")


def test_number_conservation_check():
    sch = DriveSchedule.stepwise(np.zeros((2, 2)), [[0.0, 1.0], [1.0, 0.0]], 0.5, 1.0)
    n_s = np.diag([1.0, 1.0])
    assert commuting_with_number(sch, n_s, lambda w: w, [0.0, 0.25, 1.0]) == 0.0
    with pytest.raises(ConfigurationError):
        commuting_with_number(sch, np.diag([1.0, 0.0]), lambda w: w, [1.0])
