import numpy as np
import pytest

from deabench.model import build_panel


@pytest.fixture
def four_firms():
    """The 4-firm, 2-input, 1-output golden panel."""
    rows = [
        ("1", [0.50, 1.00, 1.0]),
        ("2", [1.50, 0.50, 1.0]),
        ("3", [1.75, 1.25, 1.0]),
        ("4", [2.50, 1.25, 1.0]),
    ]
    panel, removed = build_panel(rows, 2, 1, ["x1", "x2"], ["y"])
    assert removed == []
    return panel


def random_panel(rng, n_dmus, n_inputs, n_outputs):
    """Feasible random panel with positive inputs."""
    inputs = rng.uniform(0.5, 4.0, size=(n_dmus, n_inputs))
    outputs = rng.uniform(0.5, 3.0, size=(n_dmus, n_outputs))
    rows = [(str(i + 1), list(inputs[i]) + list(outputs[i])) for i in range(n_dmus)]
    panel, _ = build_panel(rows, n_inputs, n_outputs)
    return panel
