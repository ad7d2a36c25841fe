import math

import numpy as np
import pytest

from lazylink import analysis, policy, system
from lazylink.analysis import (InsufficientData, LyapunovMonitor, audit_arc,
                               evaluate_W, find_certifying_lambda, fit_decay,
                               observer_monitor, transmission_stats)
from lazylink.hybridsim import Event, HybridArc, HybridState, Mode, Sample

A71 = [[2.0, 1.5], [2.0, 0.0]]
B71 = [[-18.0], [0.0]]
C71 = [[0.5, 0.5]]


@pytest.fixture
def sync71():
    err = system.build_error_system(system.Cascade(A=A71, B=B71, C=C71))
    timer = policy.TimerParams(delta=1e-3, rho=2e-3)
    return policy.design_sync(err, Q=np.eye(2), gamma_x=1e-3, gamma_e=1e3,
                              P2=[[0.1]], timer=timer)


def _state(x, e, tau):
    return HybridState(x=np.asarray(x, dtype=float),
                       e=np.asarray(e, dtype=float),
                       tau=np.asarray(tau, dtype=float),
                       xhat=None, mode=Mode.STATE_FEEDBACK)


def test_evaluate_w_sync_form(sync71):
    st = _state([1.0, -2.0], [0.5], [0.001])
    mon = LyapunovMonitor(policy=sync71, lam=3.0)
    x = st.x
    phi = math.exp((2.0 * sync71.timer.rho - 0.001) * 3.0)
    expected = float(x @ sync71.P1 @ x) + phi * 0.1 * 0.25
    assert evaluate_W(st, mon) == pytest.approx(expected, rel=1e-12)


def test_w_is_positive_definite_sample(sync71):
    mon = LyapunovMonitor(policy=sync71)
    assert evaluate_W(_state([0.0, 0.0], [0.0], [0.0]), mon) == 0.0
    rng = np.random.default_rng(6)
    for _ in range(30):
        st = _state(rng.normal(size=2), rng.normal(size=1),
                    [rng.uniform(0.0, 0.004)])
        assert evaluate_W(st, mon) > 0.0


def test_monitor_rejects_bad_lambda(sync71):
    with pytest.raises(ValueError):
        LyapunovMonitor(policy=sync71, lam=0.0)


def test_fit_decay_recovers_synthetic_rate(sync71):
    # pure exponential |state| = 2 exp(-0.5 t): slope and prefactor exact
    samples = []
    for k in range(200):
        t = 0.05 * k
        r = 2.0 * math.exp(-0.5 * t)
        samples.append(Sample(t, 0, _state([r, 0.0], [0.0], [0.0])))
    arc = HybridArc(samples=samples, events=[])
    fit = fit_decay(arc)
    assert fit.gamma_rate == pytest.approx(0.5, rel=1e-9)
    assert fit.k == pytest.approx(1.0, rel=1e-9)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.convergent


def test_fit_decay_needs_enough_samples(sync71):
    samples = [Sample(0.0, 0, _state([1.0, 0.0], [0.0], [0.0]))]
    with pytest.raises(InsufficientData):
        fit_decay(HybridArc(samples=samples, events=[]))


def test_fit_decay_flags_growth(sync71):
    samples = []
    for k in range(50):
        t = 0.1 * k
        r = math.exp(0.3 * t)
        samples.append(Sample(t, 0, _state([r, 0.0], [0.0], [0.0])))
    fit = fit_decay(HybridArc(samples=samples, events=[]))
    assert fit.gamma_rate < 0.0 and not fit.convergent


def test_transmission_stats_intervals():
    events = [Event(1.0, 1, "transmission", (0,)),
              Event(2.0, 2, "transmission", (0,)),
              Event(4.0, 3, "transmission", (1,)),
              Event(4.0, 4, "apparent", (0,))]
    samples = [Sample(0.0, 0, _state([1.0, 0.0], [0.0, 0.0],
                                     [0.0, 0.0])),
               Sample(5.0, 4, _state([0.5, 0.0], [0.0, 0.0], [0.0, 0.0]))]
    stats = transmission_stats(HybridArc(samples=samples, events=events))
    assert stats.total == 3 and stats.apparent == 1
    assert stats.per_sensor == {0: 2, 1: 1}
    assert stats.min_interval == pytest.approx(1.0)
    assert stats.max_interval == pytest.approx(2.0)
    assert stats.mean_interval == pytest.approx(1.5)
    assert stats.rate == pytest.approx(3.0 / 5.0)


def test_audit_flags_injected_jump_increase(sync71):
    """Negative control: a jump that raises W must be reported."""
    mon = LyapunovMonitor(policy=sync71)
    good = _state([1.0, 0.0], [0.0], [0.002])
    bad = _state([1.0, 0.0], [5.0], [0.0])       # e grows at the "jump"
    arc = HybridArc(samples=[Sample(0.0, 0, good), Sample(0.0, 1, bad)],
                    events=[Event(0.0, 1, "transmission", (0,))])
    report = audit_arc(arc, mon)
    assert len(report.jump_increases) == 1
    assert not report.clean


def test_audit_flags_injected_flow_increase(sync71):
    mon = LyapunovMonitor(policy=sync71)
    a = _state([1.0, 0.0], [0.0], [0.002])
    b = _state([2.0, 0.0], [0.0], [0.003])       # W doubles while flowing
    arc = HybridArc(samples=[Sample(0.0, 0, a), Sample(0.1, 0, b)],
                    events=[])
    report = audit_arc(arc, mon)
    assert len(report.flow_increases) == 1
    # inside the convergence radius the same pair is only residual
    report2 = audit_arc(arc, mon, convergence_radius=10.0)
    assert not report2.flow_increases
    assert len(report2.residual_flow_increases) == 1
    assert report2.clean


def test_audit_flags_timer_and_dwell_violations(sync71):
    mon = LyapunovMonitor(policy=sync71)
    st = _state([1.0, 0.0], [0.0], [1.0])        # far beyond 2 rho
    arc = HybridArc(
        samples=[Sample(0.0, 0, st), Sample(0.1, 0, st)],
        events=[Event(0.05, 1, "transmission", (0,)),
                Event(0.0502, 2, "transmission", (0,))])  # gap < delta
    report = audit_arc(arc, mon, event_tol=1e-6)
    assert report.timer_bound_violations
    assert report.dwell_violations
    assert report.min_gap[0] == pytest.approx(0.0002, abs=1e-9)


def test_audit_clean_on_real_run(run_sync_small):
    report = audit_arc(run_sync_small.arc, run_sync_small.monitor,
                       convergence_radius=1e-4)
    assert report.clean
    assert report.max_tau <= 2.0 * run_sync_small.exp.policy.timer.rho + 1e-6


def test_find_certifying_lambda_doubles(sync71):
    # construct an arc whose only flow increase vanishes for large lambda:
    # keep x fixed and let e grow by a factor between exp(2 rho * 1) and
    # exp(2 rho * 16) while tau saturates, so the phi weight decides
    rho = sync71.timer.rho
    a = _state([1.0, 0.0], [1.0], [0.0])
    b = _state([1.0, 0.0], [math.sqrt(1.03)], [2.0 * rho])
    arc = HybridArc(samples=[Sample(0.0, 0, a), Sample(0.004, 0, b)],
                    events=[])
    mon = LyapunovMonitor(policy=sync71, lam=1.0)
    rep1 = audit_arc(arc, mon)
    assert rep1.flow_increases          # not certified at lambda = 1
    lam, rep = find_certifying_lambda(arc, mon, lam_max=16.0)
    assert lam is not None and lam <= 16.0 and rep.clean


def test_find_certifying_lambda_exhausts(sync71):
    a = _state([1.0, 0.0], [0.0], [0.002])
    b = _state([2.0, 0.0], [0.0], [0.002])   # x grows: no lambda can help
    arc = HybridArc(samples=[Sample(0.0, 0, a), Sample(0.1, 0, b)],
                    events=[])
    lam, rep = find_certifying_lambda(
        arc, LyapunovMonitor(policy=sync71), lam_max=16.0)
    assert lam is None and not rep.clean


def test_observer_monitor_weight_positive(sync71):
    casc = system.Cascade(A=A71, B=B71, C=C71)
    obs = system.ObserverConfig(L=[[14.77], [6.68]])
    mon = observer_monitor(sync71, casc, obs)
    gamma, Po = mon.observer_weight
    assert gamma >= 1.0
    assert np.all(np.linalg.eigvalsh(Po) > 0.0)
    st = HybridState(x=np.array([1.0, 0.0]), e=np.array([0.0]),
                     tau=np.array([0.0]), xhat=np.array([0.0, 0.0]),
                     mode=Mode.OUTPUT_FEEDBACK)
    w_with = evaluate_W(st, mon)
    eta = st.eta
    assert w_with == pytest.approx(
        float(st.xhat @ sync71.P1 @ st.xhat)
        + math.exp(2.0 * sync71.timer.rho) * 0.1 * 0.0
        + gamma * float(eta @ Po @ eta), rel=1e-12)
