"""CSV discovery and loading for fmsync output directories.

The loaders validate the column contract up front and raise SchemaError with
the offending file and column named, so a renamed or truncated CSV fails
loudly instead of producing an empty figure.
"""

from __future__ import annotations

import csv
import glob
import os

import numpy as np

from .errors import SchemaError

AGENT_REQUIRED = ("t", "agent", "omega")
EDGE_REQUIRED = ("t", "observer_agent", "source_agent", "omega_hat")
METRIC_REQUIRED = ("t", "sync_err", "max_obs_err", "phi_norm", "chi_norm")


def _read_table(path: str, required: tuple) -> dict:
    if not os.path.exists(path):
        raise SchemaError(f"csv not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"empty csv (no header): {path}")
        rows = list(reader)
    for col in required:
        if col not in header:
            raise SchemaError(f"missing column {col!r} in {path}")
    if not rows:
        raise SchemaError(f"csv has a header but no data rows: {path}")
    data = np.asarray(rows, dtype=float)
    if data.shape[1] != len(header):
        raise SchemaError(f"ragged rows in {path}")
    return {name: data[:, k] for k, name in enumerate(header)}


def load_agents(path: str) -> dict:
    """{'t': (R,), 'agents': sorted ids, per id: {'omega', 'x' (R, q)}}."""
    table = _read_table(path, AGENT_REQUIRED)
    x_cols = sorted((c for c in table if c.startswith("x_")),
                    key=lambda c: int(c.split("_")[1]))
    if not x_cols:
        raise SchemaError(f"missing column 'x_1' in {path}")
    ids = np.unique(table["agent"].astype(int))
    out = {"t": None, "agents": [int(i) for i in ids], "q": len(x_cols)}
    for i in out["agents"]:
        mask = table["agent"].astype(int) == i
        if out["t"] is None:
            out["t"] = table["t"][mask]
        out[i] = {
            "omega": table["omega"][mask],
            "x": np.column_stack([table[c][mask] for c in x_cols]),
        }
    return out


def load_edges(path: str) -> dict:
    """{'t': (R,), 'edges': [(i, j)], per (i, j): {'omega_hat'}}."""
    table = _read_table(path, EDGE_REQUIRED)
    oi = table["observer_agent"].astype(int)
    sj = table["source_agent"].astype(int)
    pairs = sorted({(int(a), int(b)) for a, b in zip(oi, sj)})
    out = {"t": None, "edges": pairs}
    for (i, j) in pairs:
        mask = (oi == i) & (sj == j)
        if out["t"] is None:
            out["t"] = table["t"][mask]
        out[(i, j)] = {"omega_hat": table["omega_hat"][mask]}
    return out


def load_metrics(path: str) -> dict:
    return _read_table(path, METRIC_REQUIRED)


def find_modulated_run(in_dir: str, carrier_dim: int) -> str:
    """Path prefix of the standalone modulated run with the requested number
    of carrier components (2 for the rotational runs, 3 for Hindmarsh-Rose).

    Runs produced by compare-noise (recognized by a sibling
    `<name>_noise_comparison.csv`) are skipped so a mixed output directory
    resolves deterministically.
    """
    candidates = []
    for path in sorted(glob.glob(os.path.join(in_dir, "*_modulated_agents.csv"))):
        name = os.path.basename(path)[: -len("_modulated_agents.csv")]
        if os.path.exists(os.path.join(in_dir, f"{name}_noise_comparison.csv")):
            continue
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if sum(1 for c in header if c.startswith("x_")) == carrier_dim:
            candidates.append(name)
    if not candidates:
        raise SchemaError(
            f"no standalone modulated run with {carrier_dim} carrier "
            f"components found in {in_dir}")
    return candidates[0]


def find_noise_run(in_dir: str) -> str:
    """Name prefix of the compare-noise output set in the directory."""
    found = sorted(glob.glob(os.path.join(in_dir, "*_noise_comparison.csv")))
    if not found:
        raise SchemaError(f"no *_noise_comparison.csv found in {in_dir}")
    return os.path.basename(found[0])[: -len("_noise_comparison.csv")]
