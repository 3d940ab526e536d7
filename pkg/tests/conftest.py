import numpy as np
import pytest

from fewgauge.feature_store import synth_generate


@pytest.fixture(scope="session")
def graded_family():
    """20 classes at graded separations: task difficulty varies with the draw."""
    seps = np.linspace(0.05, 2.5, 20)
    return synth_generate(20, 60, 64, seps, 0.20, seed=42)


@pytest.fixture(scope="session")
def small_family():
    """Cheap well-separated set for plumbing tests."""
    return synth_generate(8, 30, 16, 3.0, 0.05, seed=7)
