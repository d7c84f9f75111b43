import shutil

import matplotlib.pyplot as plt
import pytest

from plotkit import FigureError, FigureSpec, SchemaError, build, render
from plotkit.figures import DEFAULT_AGENTS, FIGURES, MAX_POINTS

ALL_IDS = ("freqs", "waveforms", "observer", "noise-compare",
           "hr-potentials", "hr-rates")


def spec_for(fig_id, data_dir, out, agents=DEFAULT_AGENTS):
    return FigureSpec(figure_id=fig_id, in_dir=str(data_dir),
                      out_path=str(out), agents=agents)


class TestRenderAll:
    @pytest.mark.parametrize("fig_id", ALL_IDS)
    def test_png_written(self, fig_id, data_dir, tmp_path):
        out = tmp_path / f"{fig_id}.png"
        assert render(spec_for(fig_id, data_dir, out)) == str(out)
        assert out.stat().st_size > 0

    def test_registry_matches_contract(self):
        assert set(FIGURES) == set(ALL_IDS)

    def test_unknown_figure_id(self, data_dir, tmp_path):
        with pytest.raises(FigureError):
            build(spec_for("spectrogram", data_dir, tmp_path / "x.png"))


class TestObserverEncoding:
    def test_dashed_estimates_solid_truths(self, data_dir, tmp_path):
        fig = build(spec_for("observer", data_dir, tmp_path / "o.png"))
        try:
            styles = {}
            for line in fig.axes[0].get_lines():
                styles.setdefault(line.get_linestyle(), []).append(
                    line.get_label())
            assert "-" in styles and "--" in styles
            assert all("true" in lab for lab in styles["-"])
            assert all("estimate" in lab for lab in styles["--"])
        finally:
            plt.close(fig)


class TestNoiseCompare:
    def test_three_panels_with_low_scale_inset(self, data_dir, tmp_path):
        fig = build(spec_for("noise-compare", data_dir, tmp_path / "n.png"))
        try:
            # three stacked panels plus the inset on the bottom one
            assert len(fig.axes) == 3
            insets = fig.axes[-1].child_axes
            assert len(insets) == 1
            lo, hi = insets[0].get_ylim()
            assert lo == 0.0
            assert hi == pytest.approx(2e-4)
        finally:
            plt.close(fig)


class TestSubsampling:
    def test_series_capped_for_display(self, tmp_path):
        # a stride-1 run so each agent series holds 6001 records
        import json

        from conftest import CONFIG_DIR
        from fmsync.fmcli import main as fmsync_main

        cfg = json.loads((CONFIG_DIR / "example1.json").read_text())
        cfg["simulation"]["record_stride"] = 1
        cfg["simulation"]["horizon"] = 6.0
        path = tmp_path / "dense.json"
        path.write_text(json.dumps(cfg))
        dense = tmp_path / "dense-out"
        assert fmsync_main(["simulate", "--config", str(path),
                            "--out", str(dense)]) == 0
        fig = build(spec_for("freqs", dense, tmp_path / "f.png"))
        try:
            lines = fig.axes[0].get_lines()
            assert lines, "no series plotted"
            assert all(len(l.get_xdata()) <= MAX_POINTS for l in lines)
            assert any(len(l.get_xdata()) == MAX_POINTS for l in lines)
        finally:
            plt.close(fig)


class TestAgentSubset:
    def test_default_subset(self, data_dir, tmp_path):
        fig = build(spec_for("freqs", data_dir, tmp_path / "f.png"))
        try:
            labels = [l.get_label() for l in fig.axes[0].get_lines()]
            assert labels == ["agent 1", "agent 3", "agent 5"]
        finally:
            plt.close(fig)

    def test_absent_agents_rejected(self, data_dir, tmp_path):
        with pytest.raises(FigureError):
            build(spec_for("freqs", data_dir, tmp_path / "f.png",
                           agents=(42,)))


class TestSchemaErrors:
    def test_missing_directory_contents(self, tmp_path):
        with pytest.raises(SchemaError):
            build(spec_for("freqs", tmp_path / "nothing-here",
                           tmp_path / "f.png"))

    def test_missing_column_named(self, data_dir, tmp_path):
        broken = tmp_path / "broken"
        broken.mkdir()
        src = data_dir / "example1_modulated_agents.csv"
        text = src.read_text().splitlines()
        text[0] = text[0].replace("omega", "frequency")
        (broken / src.name).write_text("\n".join(text) + "\n")
        with pytest.raises(SchemaError, match="omega"):
            build(spec_for("freqs", broken, tmp_path / "f.png"))

    def test_header_only_csv(self, data_dir, tmp_path):
        broken = tmp_path / "broken"
        broken.mkdir()
        src = data_dir / "example1_modulated_agents.csv"
        header = src.read_text().splitlines()[0]
        (broken / src.name).write_text(header + "\n")
        with pytest.raises(SchemaError, match="no data rows"):
            build(spec_for("freqs", broken, tmp_path / "f.png"))

    def test_noise_set_required_for_comparison(self, data_dir, tmp_path):
        solo = tmp_path / "solo"
        solo.mkdir()
        for name in ("example1_modulated_agents.csv",
                     "example1_modulated_edges.csv"):
            shutil.copy(data_dir / name, solo / name)
        with pytest.raises(SchemaError, match="noise_comparison"):
            build(spec_for("noise-compare", solo, tmp_path / "n.png"))


class TestDeterminism:
    def test_svg_bytes_stable(self, data_dir, tmp_path):
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        render(spec_for("freqs", data_dir, a))
        render(spec_for("freqs", data_dir, b))
        assert a.read_bytes() == b.read_bytes()
