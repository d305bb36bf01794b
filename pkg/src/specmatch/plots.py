"""Figure rendering for reports and training diagnostics.

Every report path that writes a CSV also drops a rendered PNG next to it;
these are the figure builders. Matplotlib runs on the Agg backend so the
CLI works headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_FIGSIZE = (5.2, 3.4)
_DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_inhibition_profile(profile, path):
    """Gain per basis index; flat at 1 before training, decaying after."""
    idx = [i for i, _ in profile]
    gains = [g for _, g in profile]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(idx, gains, marker=".", lw=1.2)
    ax.set_xlabel("basis index")
    ax.set_ylabel("gain")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Learned inhibition profile")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_loss_history(losses, path):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(range(len(losses)), losses, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    if losses and min(losses) > 0:
        ax.set_yscale("log")
    ax.set_title("Training loss")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_pck(pck, path):
    """Fraction of correct matches against the geodesic-error threshold."""
    thresholds = [t for t, _ in pck]
    fractions = [v for _, v in pck]
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(thresholds, fractions, marker=".", lw=1.2)
    ax.set_xlabel("geodesic error threshold")
    ax.set_ylabel("fraction correct")
    ax.set_ylim(0.0, 1.02)
    ax.set_title("PCK curve")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_error_histogram(errors, path, bins=40):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.hist(errors, bins=bins, color="tab:blue", alpha=0.8)
    ax.set_xlabel("normalized geodesic error")
    ax.set_ylabel("vertices")
    ax.set_title("Error distribution")
    ax.grid(alpha=0.3)
    return _save(fig, path)
