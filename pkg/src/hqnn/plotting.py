"""Learning-curve figures: loss and accuracy per epoch, train and validation.

Each seed is drawn as a faint line and the across-seed mean as a solid one.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red")

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

# Software metadata would embed the matplotlib version into the PNG
PNG_METADATA = {"Software": None}


def _panel(ax, reports, key, ylabel, title):
    for color, (name, rep) in zip(COLORS, reports.items()):
        curves = np.array([[getattr(e, key) for e in s.epochs] for s in rep.seeds])
        epochs = np.arange(1, curves.shape[1] + 1)
        for c in curves:
            ax.plot(epochs, c, color=color, alpha=0.25, lw=0.8)
        ax.plot(epochs, curves.mean(axis=0), color=color, lw=1.8, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.set_xticks(epochs)
    ax.legend()


def plot_curves(reports, out_dir):
    """Write ``loss.png`` and ``accuracy.png``; returns the written paths."""
    paths = []
    with plt.rc_context(RC):
        for fname, stem, ylabel in (("loss.png", "cce", "CCE"),
                                    ("accuracy.png", "acc", "ACC")):
            fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.2), sharey=True)
            _panel(left, reports, f"{stem}_train", ylabel, "training")
            _panel(right, reports, f"{stem}_val", ylabel, "validation")
            fig.tight_layout()
            path = out_dir / fname
            fig.savefig(path, dpi=120, metadata=PNG_METADATA)
            plt.close(fig)
            paths.append(path)
    return paths
