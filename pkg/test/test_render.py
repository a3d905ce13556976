"""
Tests for CSV and SVG rendering of evaluation artifacts.
"""

import numpy as np
import pytest

from app.conns.evaluation import export_sv_histogram, export_vector_field, summarize
from app.conns.exceptions import ArgumentError
from app.conns.integrator import simulate
from app.conns.models import GridSpec, ProjectionSpec, TrajectoryOverlay
from app.conns.projection import project_network
from app.conns.render import fmt, render


def test_metrics_csv(tmp_path):
    """
    Test the long-format metrics table.
    """
    tables = [
        summarize([np.array([1.0, 2.0])], [10], method="Newton", split="Test", state_names=["x", "y"]),
        summarize([np.array([0.5, 0.25])], [20], method="Constrained", split="Test", state_names=["x", "y"]),
    ]
    (path,) = render(tables, tmp_path / "metrics")
    lines = path.read_text().splitlines()
    assert path.suffix == ".csv"
    assert lines[0] == "method,split,metric,state,value"
    assert lines[1] == "Newton,Test,mean,x,1"
    assert len(lines) == 1 + 2 * 9


def test_single_table_renders(tmp_path):
    table = summarize([np.array([1.0])], [1])
    assert render(table, tmp_path / "one")[0].exists()


def test_projection_report_csv(tmp_path, small_network):
    _, report = project_network(small_network, ProjectionSpec(eps=0.1))
    (path,) = render(report, tmp_path / "projection")
    lines = path.read_text().splitlines()
    assert lines[0] == "layer,sv_before,sv_after,frob_change"
    assert [line.split(",")[0] for line in lines[1:]] == ["W1", "W2", "W3"]


def test_overlay_writes_csv_and_svg(tmp_path, cubic, newton_cfg):
    record = simulate(cubic, [1.0, 0.5], 0.01, 0.05, newton_cfg)
    overlay = TrajectoryOverlay(series={"Newton": record}, state_names=cubic.state_names, title="cubic")
    csv_path, svg_path = render(overlay, tmp_path / "overlay")
    assert svg_path.read_text().lstrip().startswith("<?xml")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "series,t,state,value"
    assert len(lines) == 1 + 6 * 2


def test_vector_field_csv_is_unscaled(tmp_path, contracting_network):
    """
    Test that the arrow scale changes the plot only.
    """
    grid = export_vector_field(contracting_network, np.array([1.0, 0.5]), (0, 1), GridSpec(points=4, span=0.2))
    plain = render(grid, tmp_path / "a", arrow_scale=1.0)
    scaled = render(grid, tmp_path / "b", arrow_scale=5.0)
    assert plain[0].read_bytes() == scaled[0].read_bytes()
    assert plain[0].read_text().splitlines()[0] == "k2_i,k2_j,dx,dy,mag"
    assert len(plain[0].read_text().splitlines()) == 17


def test_svg_output_is_deterministic(tmp_path, contracting_network):
    spectra = export_sv_histogram(contracting_network, title="Constrained")
    first = render(spectra, tmp_path / "first", bins=10)
    second = render(spectra, tmp_path / "second", bins=10)
    assert first[0].read_bytes() == second[0].read_bytes()
    assert first[1].read_bytes() == second[1].read_bytes()


def test_unknown_artifact_is_rejected(tmp_path):
    with pytest.raises(ArgumentError):
        render(object(), tmp_path / "x")
    with pytest.raises(ArgumentError):
        render([1, 2], tmp_path / "x")


def test_fmt_round_trips_doubles():
    value = 0.1 + 0.2
    assert float(fmt(value)) == value
