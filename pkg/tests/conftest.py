"""Shared fixtures and small builders for the test suite."""

import numpy as np
import pytest

from gazeretarget import Geometry
from gazeretarget.ingest import GazeSet


def build_gazeset(rows, geometry):
    """Assemble a GazeSet from (user, frame, x, y[, valid]) tuples."""
    rows = list(rows)
    valid = [r[4] if len(r) > 4 else True for r in rows]
    return GazeSet(
        np.array([r[0] for r in rows], dtype=np.int64),
        np.array([r[1] for r in rows], dtype=np.int64),
        np.array([float(r[2]) for r in rows]),
        np.array([float(r[3]) for r in rows]),
        np.array(valid, dtype=bool),
        geometry,
    )


@pytest.fixture
def report_line(request):
    """Write a line that survives output capture, for acceptance summaries."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(text):
        if reporter is not None:
            reporter.write_line(text)

    return emit


@pytest.fixture
def small_geom():
    return Geometry(frame_width=200, frame_height=100, fps=30.0, n_frames=10)
