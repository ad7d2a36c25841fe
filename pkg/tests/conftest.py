import numpy as np
import pytest

from lazylink.cli import run_experiment
from lazylink.config import parse_config, preset_config


def _variant(name, mutate=None, seed=None):
    cfg = preset_config(name, seed=seed)
    if mutate is None:
        return cfg
    d = cfg.to_dict()
    mutate(d)
    return parse_config(d)


@pytest.fixture(scope="session")
def run_sync_small():
    """Sync preset, P2 = 0.1, x0 = [1, 1]."""
    return run_experiment(preset_config("paper-7.1-sync"))


@pytest.fixture(scope="session")
def run_sync_heavy():
    """Same loop with P2 = 10, expected to transmit much more often."""
    def mutate(d):
        d["policy"]["P2"] = [[10.0]]
    return run_experiment(_variant("paper-7.1-sync", mutate))


@pytest.fixture(scope="session")
def run_sync_unbalanced():
    """Sync policy from the unbalanced initial condition x0 = [10, 1]."""
    def mutate(d):
        d["initial"]["x0"] = [10.0, 1.0]
    return run_experiment(_variant("paper-7.1-sync", mutate))


@pytest.fixture(scope="session")
def run_tabuada():
    return run_experiment(preset_config("paper-7.1-tabuada"))


@pytest.fixture(scope="session")
def run_async_fwd():
    """Async preset with alpha = (0.9, 0.1)."""
    return run_experiment(preset_config("paper-7.2-async"))


@pytest.fixture(scope="session")
def run_async_rev():
    """Async preset with alpha swapped to (0.1, 0.9)."""
    def mutate(d):
        d["policy"]["alpha"] = [0.1, 0.9]
    return run_experiment(_variant("paper-7.2-async", mutate))


@pytest.fixture(scope="session")
def run_observer_far():
    """Observer preset; xhat0 = 0 gives initial estimation error [1, 1]."""
    return run_experiment(preset_config("paper-7.1-observer"))


@pytest.fixture(scope="session")
def run_observer_near():
    """Observer preset with initial estimation error [0.1, 0.1]."""
    def mutate(d):
        d["initial"]["xhat0"] = [0.9, 0.9]
    return run_experiment(_variant("paper-7.1-observer", mutate))


@pytest.fixture(scope="session")
def run_noisy():
    """Sync loop with uniform sample corruption of amplitude 0.1."""
    def mutate(d):
        d["perturbation"]["noise_kind"] = "uniform"
        d["sim"]["t_max"] = 12.0
        d["sim"]["convergence_radius"] = 0.0
    return run_experiment(_variant("paper-7.1-sync", mutate, seed=12345))


@pytest.fixture(scope="session")
def unperturbed_runs(run_sync_small, run_sync_heavy, run_sync_unbalanced,
                     run_async_fwd, run_async_rev, run_observer_far,
                     run_observer_near):
    return {
        "sync_small": run_sync_small,
        "sync_heavy": run_sync_heavy,
        "sync_unbalanced": run_sync_unbalanced,
        "async_fwd": run_async_fwd,
        "async_rev": run_async_rev,
        "observer_far": run_observer_far,
        "observer_near": run_observer_near,
    }
