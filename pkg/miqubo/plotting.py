"""SVG charts for MI rankings, R2 sweeps and QUBO sparsity."""
import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from miqubo.bench import R2Sweep  # noqa: E402
from miqubo.infotheory import MiReport  # noqa: E402
from miqubo.qubo import QuboProblem  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "miqubo"
plt.rcParams["svg.fonttype"] = "none"

COLORS = {"MI": "tab:blue", "CMI": "tab:orange"}


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


def plot_mi_ranking(report: MiReport, path: Union[str, Path]) -> Path:
    """Horizontal bars of MI per feature, most informative on top."""
    order = report.ranking()
    names = [report.feature_names[i] for i in order]
    height = max(2.5, 0.25 * len(names) + 1.0)
    fig, ax = plt.subplots(figsize=(6.0, height))
    ax.barh(np.arange(len(names)), report.mi[order], color=COLORS["MI"])
    ax.set_yticks(np.arange(len(names)))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("MI(X;Y) [nats]")
    ax.set_title(f"Mutual information ranking (concentration {report.concentration:.2f})")
    fig.tight_layout()
    return _save(fig, path)


def plot_r2_sweep(sweep: R2Sweep, path: Union[str, Path]) -> Path:
    """Mean R2 against k per method, shaded one standard deviation."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in sweep.methods:
        ks = [k for k in sweep.k_values if (method, k) in sweep.scores]
        mean = np.array([sweep.mean(method, k) for k in ks])
        std = np.array([sweep.std(method, k) for k in ks])
        color = COLORS.get(method)
        ax.plot(ks, mean, marker="o", label=method, color=color)
        ax.fill_between(ks, mean - std, mean + std, alpha=0.2, color=color)
    ax.set_xlabel("number of selected features k")
    ax.set_ylabel("mean test R2")
    ax.set_title(f"SVR R2 over {sweep.split.count} splits")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_sparsity(q: QuboProblem, path: Union[str, Path], threshold: float = 0.0) -> Path:
    """Upper-triangular nonzero pattern of the QUBO matrix."""
    matrix = np.triu(q.to_matrix())
    mask = np.abs(matrix) > threshold
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.spy(mask, markersize=max(1.0, 120.0 / max(q.n, 1)))
    ax.set_title(f"QUBO pattern, n = {q.n}")
    fig.tight_layout()
    return _save(fig, path)
