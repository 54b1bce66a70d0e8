"""Shared fixtures.

The four benchmark Monte-Carlo runs are expensive (minutes each), so they
are computed once per session and shared between the module tests and the
acceptance suite.
"""

import numpy as np
import pytest

from mpca.simulate import preset_config, run_simulation


def _run(name):
    return run_simulation(preset_config(name), jobs=1)


@pytest.fixture(scope="session")
def paper_low_run():
    return _run("paper-low")


@pytest.fixture(scope="session")
def paper_high_run():
    return _run("paper-high")


@pytest.fixture(scope="session")
def paper_poisson_low_run():
    return _run("paper-poisson-low")


@pytest.fixture(scope="session")
def paper_poisson_high_run():
    return _run("paper-poisson-high")


def points(report, tid):
    """Per-replicate point estimates for one target."""
    return np.array(
        [r["targets"][tid]["point"] for r in report["replicates"] if r["ok"]]
    )
