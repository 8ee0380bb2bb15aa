"""Shared fixtures and the end-of-run acceptance summary."""

import numpy as np
import pytest

from melcgraph.data import CellTable, SampleInfo, SampleManifest


def make_table(n_cells=8, n_features=3, n_samples=2, seed=0, labels=None):
    """Small random cell table spread evenly over n_samples."""
    rng = np.random.default_rng(seed)
    sample_ids = np.array(
        [f"S{i % n_samples:02d}" for i in range(n_cells)], dtype=object
    )
    return CellTable(
        cell_id=np.arange(1, n_cells + 1, dtype=np.int64),
        sample_id=sample_ids,
        x=rng.uniform(0, 100, n_cells),
        y=rng.uniform(0, 100, n_cells),
        features=rng.normal(size=(n_cells, n_features)),
        label=np.asarray(
            labels if labels is not None else rng.integers(0, 2, n_cells),
            dtype=np.int64,
        ),
    )


def make_manifest(diagnoses):
    """Manifest with one sample per diagnosis string, ids S00, S01, ..."""
    return SampleManifest(
        tuple(
            SampleInfo(
                sample_id=f"S{i:02d}",
                diagnosis=diag,
                n_channels=4,
                pixel_size_um=0.45,
            )
            for i, diag in enumerate(diagnoses)
        )
    )


@pytest.fixture
def small_table():
    return make_table()


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL summary line per acceptance check, then assert."""

    def record(label, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        line = f"{status}  {label}"
        if detail:
            line += f"  [{detail}]"
        request.config._acceptance_lines.append(line)
        assert passed, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
