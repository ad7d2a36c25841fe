"""End-to-end acceptance suite.

Each test prints a single PASS/FAIL line for its criterion (visible even
under captured output) and then asserts the same condition.
"""

import filecmp
import math

import numpy as np
import pytest
import scipy.linalg

from lazylink import analysis, cli, matlib, system
from lazylink.config import parse_config, preset_config
from lazylink.hybridsim import distance_to_target

A71 = np.array([[2.0, 1.5], [2.0, 0.0]])
B71 = np.array([[-18.0], [0.0]])
C71 = np.array([[0.5, 0.5]])


@pytest.fixture
def announce(capsys):
    def _announce(name, ok, detail=""):
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            suffix = f"  ({detail})" if detail else ""
            print(f"[acceptance] {status}: {name}{suffix}")
    return _announce


def test_criterion_01_lyapunov_certificate(announce):
    F11 = A71 + B71 @ C71
    P1 = matlib.solve_lyapunov(F11, np.eye(2))
    err = float(np.max(np.abs(P1 - [[0.091, 0.067], [0.067, 0.573]])))
    ok = err <= 0.005
    announce("certificate reproduction", ok, f"max entry error {err:.2e}")
    assert ok


def test_criterion_02_rate_reduction_by_error_weight(
        announce, run_sync_small, run_sync_heavy):
    ok = True
    for r in (run_sync_small, run_sync_heavy):
        st = r.arc.samples[-1].state
        ok = ok and r.arc.converged and r.arc.t_final <= 10.0
        ok = ok and float(np.linalg.norm(st.x)) <= 1e-3
    n_small = run_sync_small.summary["transmissions"]["total"]
    n_heavy = run_sync_heavy.summary["transmissions"]["total"]
    ok = ok and n_small < n_heavy
    announce("lighter error weight transmits less", ok,
             f"{n_small} vs {n_heavy} transmissions")
    assert ok


def test_criterion_03_beats_threshold_baseline(
        announce, run_sync_unbalanced, run_tabuada):
    n_sync = run_sync_unbalanced.summary["transmissions"]["total"]
    n_base = run_tabuada.summary["transmissions"]["total"]
    ok = n_sync < n_base
    announce("fewer transmissions than threshold baseline", ok,
             f"{n_sync} vs {n_base} from x0=[10,1]")
    assert ok


def test_criterion_04_lyapunov_monotonicity(announce, unperturbed_runs):
    ok = True
    details = []
    for name, r in unperturbed_runs.items():
        lam, rep = analysis.find_certifying_lambda(
            r.arc, r.monitor.with_lambda(1.0),
            convergence_radius=r.exp.sim.convergence_radius,
            event_tol=r.exp.sim.event_tol, lam_max=16.0)
        run_ok = lam is not None and rep.clean
        ok = ok and run_ok
        details.append(f"{name}:lam={lam}")
    announce("W non-increasing on all unperturbed runs", ok,
             " ".join(details))
    assert ok


def test_criterion_05_dwell_and_timer_bounds(announce, unperturbed_runs,
                                             run_noisy, run_tabuada):
    ok = True
    runs = dict(unperturbed_runs)
    runs["noisy"] = run_noisy
    for name, r in runs.items():
        rep = analysis.audit_arc(r.arc, r.monitor,
                                 convergence_radius=np.inf,
                                 event_tol=r.exp.sim.event_tol)
        ok = ok and not rep.dwell_violations
        ok = ok and not rep.timer_bound_violations
    # the baseline run has no Lyapunov monitor; check its bounds directly
    timer = run_tabuada.exp.policy.timer
    arc = run_tabuada.arc
    times = [ev.t for ev in arc.events if ev.kind == "transmission"]
    gaps = [b - a for a, b in zip(times, times[1:])]
    ok = ok and (not gaps
                 or min(gaps) >= timer.delta - run_tabuada.exp.sim.event_tol)
    ok = ok and max(float(np.max(s.state.tau)) for s in arc.samples) \
        <= 2.0 * timer.rho + 1e-6
    announce("dwell time and timer bounds hold on every run", ok)
    assert ok


def test_criterion_06_async_rate_steering(announce, run_async_fwd,
                                          run_async_rev):
    fwd = run_async_fwd.summary["transmissions"]["per_sensor"]
    rev = run_async_rev.summary["transmissions"]["per_sensor"]
    ok = fwd.get("1", 0) > fwd.get("0", 0)
    ok = ok and rev.get("0", 0) > rev.get("1", 0)
    announce("alpha weights steer per-sensor rates", ok,
             f"alpha=(0.9,0.1): {fwd}; alpha=(0.1,0.9): {rev}")
    assert ok


def test_criterion_07_exponential_decay_fit(announce, run_async_fwd):
    fit = run_async_fwd.summary["decay_fit"]
    ok = fit["gamma_rate"] > 0.0 and fit["r2"] >= 0.9
    announce("exponential decay fit", ok,
             f"gamma={fit['gamma_rate']:.3g} r2={fit['r2']:.3f}")
    assert ok


def test_criterion_08_observer_convergence(announce, run_observer_far,
                                           run_observer_near):
    ok = True
    details = []
    for label, r in (("eta0=[1,1]", run_observer_far),
                     ("eta0=[0.1,0.1]", run_observer_near)):
        st = r.arc.samples[-1].state
        xn = float(np.linalg.norm(st.x))
        en = float(np.linalg.norm(st.eta))
        run_ok = (r.arc.converged and r.arc.t_final <= 15.0
                  and xn <= 1e-3 and en <= 1e-3)
        ok = ok and run_ok
        details.append(f"{label}: |x|={xn:.1e} |eta|={en:.1e}")
    announce("output-feedback loop converges", ok, "; ".join(details))
    assert ok


def test_criterion_09_practical_stability_under_noise(announce, run_noisy):
    arc = run_noisy.arc
    tail = [distance_to_target(s.state) for s in arc.samples if s.t >= 8.0]
    worst = max(tail)
    ok = bool(tail) and worst < 0.5 and arc.t_final >= 12.0 - 1e-9
    announce("bounded residual set under sample noise", ok,
             f"max distance after t=8 is {worst:.3f}")
    assert ok


def test_criterion_10_integrator_oracle(announce):
    """Sampling disabled (e held at 0, the continuous-transmission limit):
    the integrated nominal loop must match exp((A+BC) t) x0 to 1e-6 over
    [0, 5]."""
    from lazylink import policy
    from lazylink.hybridsim import HybridState, Mode, flow_step

    Acl = A71 + B71 @ C71
    # fold the feedback into A and zero B: the same flow machinery then
    # integrates xdot = (A+BC) x with the error channel disconnected
    casc = system.Cascade(A=Acl, B=np.zeros((2, 1)), C=C71)
    err = system.build_error_system(casc)
    pol = policy.design_sync(err, Q=np.eye(2), gamma_x=1e-3, gamma_e=1e3,
                             P2=[[0.1]],
                             timer=policy.TimerParams(delta=1e-3, rho=2e-3))
    x0 = np.array([1.0, 1.0])
    st = HybridState(x=x0.copy(), e=np.array([0.0]),
                     tau=np.array([0.0]), xhat=None,
                     mode=Mode.STATE_FEEDBACK)
    dt = 1e-3
    worst = 0.0
    for k in range(5000):
        st = flow_step(st, casc, pol, dt)
        if (k + 1) % 100 == 0:
            x_ref = scipy.linalg.expm(Acl * (dt * (k + 1))) @ x0
            worst = max(worst, float(np.max(np.abs(st.x - x_ref))))
    ok = worst <= 1e-6
    announce("flow matches matrix exponential over [0,5]", ok,
             f"max deviation {worst:.2e}")
    assert ok


def test_criterion_11_deterministic_traces(announce, tmp_path):
    ok = True
    details = []
    for preset in ("paper-7.1-sync", "paper-7.2-async",
                   "paper-7.1-observer"):
        out_a = tmp_path / preset / "a"
        out_b = tmp_path / preset / "b"
        cli.main(["run", "--preset", preset, "--seed", "7",
                  "--out", str(out_a)])
        cli.main(["run", "--preset", preset, "--seed", "7",
                  "--out", str(out_b)])
        same = filecmp.cmp(out_a / "trace.csv", out_b / "trace.csv",
                           shallow=False)
        ok = ok and same
        details.append(f"{preset}:{'identical' if same else 'differs'}")
    announce("equal seeds give byte-identical traces", ok,
             " ".join(details))
    assert ok
