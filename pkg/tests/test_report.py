import os

import numpy as np
import pytest

from neswap.report import render_sweep_figures, render_trace_figure
from neswap.riskutility import (RiskUtilityPoint, frontier, load_points_csv)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def trajectory(J, N, values):
    pts = [RiskUtilityPoint(release_id=f"{'+'.join(J)}|N={N:g}|s=0",
                            swap_count=0, DU=1.0, DR=1.0, J=J, N=N)]
    for s, (du, dr) in enumerate(values, start=1):
        pts.append(RiskUtilityPoint(release_id=f"{'+'.join(J)}|N={N:g}|s={s}",
                                    swap_count=s, DU=du, DR=dr, J=J, N=N))
    return pts


def sample_points():
    pts = []
    for N in (1e6, 1e10):
        pts += trajectory(("Organization", "Person"), N,
                          [(0.97, 0.9), (0.93, 0.82), (0.9, 0.75)])
        pts += trajectory(("Organization", "Product"), N,
                          [(0.97, 0.93), (0.95, 0.8), (0.88, 0.78)])
    return pts


class TestSweepFigures:
    def test_writes_figures_and_frontier(self, tmp_path):
        pts = sample_points()
        written = render_sweep_figures(pts, str(tmp_path), stem="trade")
        assert str(tmp_path / "trade_N1e+06.png") in written
        assert str(tmp_path / "trade_N1e+10.png") in written
        for path in written:
            assert os.path.exists(path)
            if path.endswith(".png"):
                with open(path, "rb") as fh:
                    assert fh.read(8) == PNG_MAGIC
        fcsv = [p for p in written if p.endswith("_frontier.csv")]
        assert len(fcsv) == 1
        back = load_points_csv(fcsv[0])
        for N in (1e6, 1e10):
            want = frontier([p for p in pts if p.N == N])
            got = [p for p in back if p.N == N]
            assert sorted((p.DU, p.DR) for p in got) == \
                sorted((p.DU, p.DR) for p in want)

    def test_empty_points_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no points"):
            render_sweep_figures([], str(tmp_path))


class TestTraceFigure:
    def test_writes_png(self, tmp_path):
        trace = np.array([-120.0, -80.0, -60.5, -60.1, -60.09])
        out = tmp_path / "trace.png"
        got = render_trace_figure(trace, str(out))
        assert got == str(out)
        with open(out, "rb") as fh:
            assert fh.read(8) == PNG_MAGIC

    def test_empty_trace_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            render_trace_figure(np.array([]), str(tmp_path / "x.png"))
