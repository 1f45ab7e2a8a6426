"""Matplotlib figures for the CLI reports (PNG, non-interactive backend)."""

from __future__ import annotations

from typing import Dict, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def _style(label: str):
    return "--" if label.endswith("-CF") else "-"


def plot_directional_psf(azimuth_deg: np.ndarray, levels: Mapping[str, np.ndarray], path,
                         floor: float = -120.0, title: str = "Directional PSF") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, lv in levels.items():
        ax.plot(azimuth_deg, np.maximum(lv, floor), _style(label), lw=1, label=label)
    ax.set_xlabel("azimuth [deg]")
    ax.set_ylabel("level [dB]")
    ax.set_ylim(floor, 3)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    _save(fig, path)


def plot_image(image_db: np.ndarray, extent: Sequence[float], path, floor: float, title: str,
               xlabel: str = "range [m]", ylabel: str = "azimuth [deg]") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(np.maximum(image_db, floor), aspect="auto", origin="lower", extent=extent,
                   vmin=floor, vmax=0, cmap="viridis")
    fig.colorbar(im, ax=ax, label="dB")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    _save(fig, path)


def plot_bars(values: Mapping[str, float], path, ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    labels = list(values)
    ax.bar(range(len(labels)), [values[k] for k in labels],
           color=["tab:orange" if k.endswith("-CF") else "tab:blue" for k in labels])
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def plot_curves(x: Sequence[float], curves: Mapping[str, Sequence[float]], path, xlabel: str,
                ylabel: str, title: str, markers: bool = True) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in curves.items():
        ax.plot(x, y, _style(label), marker="o" if markers else None, ms=3, lw=1, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    _save(fig, path)


def plot_resolution(half_angles: np.ndarray, azimuth_deg: np.ndarray, curves: Dict[str, np.ndarray],
                    path, floor: float = -60.0) -> None:
    """One panel per beamformer: angular response (rows) against half-angle."""
    n = len(curves)
    fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 3.4), sharey=True, squeeze=False)
    for ax, (label, lv) in zip(axes[0], curves.items()):
        ax.imshow(np.maximum(lv, floor), aspect="auto", origin="lower", vmin=floor, vmax=0,
                  extent=[azimuth_deg[0], azimuth_deg[-1], half_angles[0], half_angles[-1]],
                  cmap="magma")
        ax.set_title(label, fontsize=8)
        ax.set_xlabel("azimuth [deg]")
    axes[0][0].set_ylabel("half-angle [deg]")
    _save(fig, path)
