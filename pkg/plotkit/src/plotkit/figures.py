"""Figure construction from fmsync CSV artifacts.

Six figure ids are supported; each returns a matplotlib Figure so tests can
inspect line styles without touching the filesystem.  Series longer than
MAX_POINTS are thinned for display only; no other numeric processing happens
here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import loading  # noqa: E402
from .errors import FigureError, SchemaError  # noqa: E402

MAX_POINTS = 5000
DEFAULT_AGENTS = (1, 3, 5)

# stable bytes for SVG output across identical re-renders
plt.rcParams["svg.hashsalt"] = "plotkit"


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    in_dir: str
    out_path: str
    agents: tuple = DEFAULT_AGENTS

    @property
    def fmt(self) -> str:
        ext = os.path.splitext(self.out_path)[1].lstrip(".").lower()
        return ext or "png"


def _thin(t: np.ndarray) -> np.ndarray:
    if t.size <= MAX_POINTS:
        return np.arange(t.size)
    return np.linspace(0, t.size - 1, MAX_POINTS).round().astype(int)


def _subset(available, requested):
    chosen = [a for a in requested if a in available]
    if not chosen:
        raise FigureError(
            f"none of the requested agents {list(requested)} appear in the "
            f"data (available: {available})")
    return chosen


def _agents_for(spec: FigureSpec, carrier_dim: int):
    name = loading.find_modulated_run(spec.in_dir, carrier_dim)
    data = loading.load_agents(
        os.path.join(spec.in_dir, f"{name}_modulated_agents.csv"))
    return name, data


def fig_freqs(spec: FigureSpec) -> plt.Figure:
    _, data = _agents_for(spec, carrier_dim=2)
    idx = _thin(data["t"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for a in _subset(data["agents"], spec.agents):
        ax.plot(data["t"][idx], data[a]["omega"][idx], linestyle="-",
                label=f"agent {a}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("frequency")
    ax.set_title("Agent frequencies")
    ax.legend(loc="best")
    return fig


def fig_waveforms(spec: FigureSpec) -> plt.Figure:
    _, data = _agents_for(spec, carrier_dim=2)
    idx = _thin(data["t"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for a in _subset(data["agents"], spec.agents):
        ax.plot(data["t"][idx], data[a]["x"][idx, 0], linestyle="-",
                label=f"agent {a}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("carrier component 1")
    ax.set_title("Transmitted carrier waveforms")
    ax.legend(loc="best")
    return fig


def fig_observer(spec: FigureSpec) -> plt.Figure:
    name, data = _agents_for(spec, carrier_dim=2)
    edges = loading.load_edges(
        os.path.join(spec.in_dir, f"{name}_modulated_edges.csv"))
    chosen = _subset(data["agents"], spec.agents)
    idx = _thin(data["t"])
    eidx = _thin(edges["t"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for a in chosen:
        ax.plot(data["t"][idx], data[a]["omega"][idx], linestyle="-",
                label=f"agent {a} true")
    for (i, j) in edges["edges"]:
        if j in chosen:
            ax.plot(edges["t"][eidx], edges[(i, j)]["omega_hat"][eidx],
                    linestyle="--", label=f"agent {i} estimate of {j}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("frequency")
    ax.set_title("Observer estimates (dashed) against true frequencies (solid)")
    ax.legend(loc="best", fontsize="small")
    return fig


def fig_noise_compare(spec: FigureSpec) -> plt.Figure:
    name = loading.find_noise_run(spec.in_dir)
    panels = ("modulated", "ideal_noisy", "modulated_noisy")
    titles = ("modulated, noise free", "unmodulated, 1% noise",
              "modulated, 1% noise")
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for ax, scen, title in zip(axes, panels, titles):
        m = loading.load_metrics(
            os.path.join(spec.in_dir, f"{name}_{scen}_metrics.csv"))
        idx = _thin(m["t"])
        ax.plot(m["t"][idx], m["sync_err"][idx], linestyle="-")
        ax.set_ylabel("sync error")
        ax.set_title(title, fontsize="medium")
    axes[-1].set_xlabel("t [s]")
    # the bottom panel's tail sits at the 1e-4 scale; show it explicitly
    bottom = loading.load_metrics(
        os.path.join(spec.in_dir, f"{name}_modulated_noisy_metrics.csv"))
    idx = _thin(bottom["t"])
    inset = axes[-1].inset_axes([0.45, 0.45, 0.5, 0.45])
    inset.plot(bottom["t"][idx], bottom["sync_err"][idx], linestyle="-")
    inset.set_ylim(0.0, 2e-4)
    inset.set_title("1e-4 scale", fontsize="small")
    inset.tick_params(labelsize="x-small")
    return fig


def fig_hr_potentials(spec: FigureSpec) -> plt.Figure:
    _, data = _agents_for(spec, carrier_dim=3)
    idx = _thin(data["t"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for a in _subset(data["agents"], spec.agents):
        ax.plot(data["t"][idx], data[a]["x"][idx, 0], linestyle="-",
                label=f"neuron {a}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("membrane potential")
    ax.set_title("Bursting membrane potentials")
    ax.legend(loc="best")
    return fig


def fig_hr_rates(spec: FigureSpec) -> plt.Figure:
    _, data = _agents_for(spec, carrier_dim=3)
    idx = _thin(data["t"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for a in _subset(data["agents"], spec.agents):
        ax.plot(data["t"][idx], data[a]["omega"][idx], linestyle="-",
                label=f"neuron {a}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("firing rate")
    ax.set_title("Firing-rate synchronization")
    ax.legend(loc="best")
    return fig


FIGURES = {
    "freqs": fig_freqs,
    "waveforms": fig_waveforms,
    "observer": fig_observer,
    "noise-compare": fig_noise_compare,
    "hr-potentials": fig_hr_potentials,
    "hr-rates": fig_hr_rates,
}


def build(spec: FigureSpec) -> plt.Figure:
    try:
        builder = FIGURES[spec.figure_id]
    except KeyError:
        raise FigureError(
            f"unknown figure id {spec.figure_id!r}; one of {sorted(FIGURES)}")
    return builder(spec)


def render(spec: FigureSpec) -> str:
    fig = build(spec)
    try:
        out_dir = os.path.dirname(os.path.abspath(spec.out_path))
        os.makedirs(out_dir, exist_ok=True)
        kwargs = {"metadata": {"Date": None}} if spec.fmt == "svg" else {}
        fig.savefig(spec.out_path, format=spec.fmt, dpi=150, **kwargs)
    finally:
        plt.close(fig)
    return spec.out_path
