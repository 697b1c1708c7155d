"""SVG line charts of CP comparisons, convergence and loss histories."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from airfoil_inverse_design.aero.models import CpDistribution  # noqa: E402

logger = logging.getLogger(__name__)

_SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.debug("Wrote chart %s", path)


def plot_cp_comparison(
    path: Path,
    verified: CpDistribution,
    generated: CpDistribution | None = None,
    title: str = "",
) -> None:
    """Verified CP (solid) against the generated CP (dashed), suction upwards."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(verified.xs, verified.cp_upper, color="tab:blue", label="verified upper")
    ax.plot(verified.xs, verified.cp_lower, color="tab:orange", label="verified lower")
    if generated is not None:
        ax.plot(generated.xs, generated.cp_upper, color="tab:blue", linestyle="--", label="generated upper")
        ax.plot(generated.xs, generated.cp_lower, color="tab:orange", linestyle="--", label="generated lower")
    ax.invert_yaxis()
    ax.set_xlabel("x/c")
    ax.set_ylabel("CP")
    ax.set_title(title)
    ax.grid(True, alpha=0.25)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_convergence(path: Path, history: pd.DataFrame) -> None:
    """Penalised objective per evaluation with its running best."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(history["iteration"], history["penalized_objective"], marker=".", linestyle="none", label="evaluation")
    ax.plot(history["iteration"], history["best_so_far"], color="black", label="best so far")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("penalised L/D")
    ax.grid(True, alpha=0.25)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_loss_history(path: Path, history: pd.DataFrame) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(history["epoch"], history["train_loss"], label="train")
    if history["validation_loss"].notna().any():
        ax.plot(history["epoch"], history["validation_loss"], label="validation")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.grid(True, alpha=0.25)
    ax.legend(fontsize=8)
    _save(fig, path)
