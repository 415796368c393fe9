import numpy as np
import pytest

from ppcdom.harness import scenario_from_dict


def small_scenario_dict():
    """A 5x4 two-layer slit sheet with two short stages; runs in about a second."""
    return {
        "name": "small",
        "mesh": {"shape": "slit-sheet", "resolution": [5, 4], "spacing": 0.025,
                 "stiffness": 50.0, "layers": 2, "layer_gap": 0.02},
        "grippers": {"left": {"box": {"min": [0, 0, 0], "max": [0, 0.075, 0.02]}},
                     "right": {"box": {"min": [0.1, 0, 0], "max": [0.1, 0.075, 0.02]}}},
        "keypoints": {"roi": {"min": [0.025, 0, 0.02], "max": [0.075, 0.075, 0.02]}, "n": 3},
        "setup": [{"twist": [-0.01, 0, 0, 0, 0, 0, 0.01, 0, 0, 0, 0, 0], "duration": 0.5}],
        "stages": [
            {"envelope": "task_a", "duration": 2.0,
             "demo": [{"twist": [-0.01, 0, 0, 0, 0, 0, 0.01, 0, 0, 0, 0, 0], "duration": 1.0}]},
            {"envelope": "task_a", "duration": 2.0,
             "demo": [{"twist": [0, 0, 0.01, 0, 0, 0, 0, 0, 0.01, 0, 0, 0], "duration": 1.0}]},
        ],
        "gains": {"k1": 2, "kz": 1, "k_eta": 0.5, "gamma": 0.001, "damping": 0.03,
                  "speed_limit": 0.03},
        "estimator": {"basis_size": 8, "babble_samples": 24, "width_scale": 6.0,
                      "ridge": 1e-3, "adapt_gain": 1e-4},
        "dt": 0.05,
        "pause": 0.5,
        "seeds": [0, 1],
    }


@pytest.fixture
def small_dict():
    return small_scenario_dict()


@pytest.fixture
def small_scenario():
    return scenario_from_dict(small_scenario_dict())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Collects one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""

    def add(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
