import numpy as np

from specmatch.plots import (
    plot_error_histogram,
    plot_inhibition_profile,
    plot_loss_history,
    plot_pck,
)


def test_inhibition_profile_png(tmp_path):
    profile = [(i, float(g)) for i, g in enumerate(np.linspace(1.0, 0.3, 20))]
    out = plot_inhibition_profile(profile, tmp_path / "prof.png")
    assert out.exists() and out.stat().st_size > 0


def test_loss_history_png(tmp_path):
    losses = list(np.geomspace(100.0, 1.0, 50))
    out = plot_loss_history(losses, tmp_path / "loss.png")
    assert out.exists() and out.stat().st_size > 0


def test_loss_history_png_empty(tmp_path):
    out = plot_loss_history([], tmp_path / "loss.png")
    assert out.exists()


def test_pck_png(tmp_path):
    pck = [(t, min(1.0, 4 * t)) for t in np.arange(0.01, 0.26, 0.01)]
    out = plot_pck(pck, tmp_path / "pck.png")
    assert out.exists() and out.stat().st_size > 0


def test_error_histogram_png(tmp_path):
    rng = np.random.default_rng(0)
    out = plot_error_histogram(np.abs(rng.standard_normal(300)) * 0.05,
                               tmp_path / "hist.png")
    assert out.exists() and out.stat().st_size > 0
