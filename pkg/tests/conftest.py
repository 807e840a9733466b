import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from scatshift.rng import substream

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Always-visible checklist of acceptance criteria results."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def smooth_images(n, side, seed, noise_std=0.0):
    """Synthetic corpus: smooth random fields, optionally + fine-scale noise.

    The noise-free and noisy variants share the same low-frequency content
    statistics, so only texture distinguishes the corpora.
    """
    rng = substream(seed, "fixture", side)
    imgs = []
    for _ in range(n):
        f = gaussian_filter(rng.standard_normal((side, side)), sigma=6, mode="wrap")
        f = (f - f.mean()) / f.std()
        img = 128 + rng.uniform(-20, 20) + rng.uniform(0.7, 1.3) * 35.0 * f
        if noise_std:
            img = img + noise_std * rng.standard_normal((side, side))
        imgs.append(np.clip(img, 0.0, 255.0))
    return imgs


def quadrant_means(img):
    """Raw-pixel intensity summary: mean of each image quadrant."""
    s = img.shape[0] // 2
    return np.array(
        [img[:s, :s].mean(), img[:s, s:].mean(), img[s:, :s].mean(), img[s:, s:].mean()]
    )


@pytest.fixture(scope="session")
def texture_shift_corpora():
    """Corpus A (smooth), corpus B = same construction + fine noise."""
    side, n = 64, 256
    a = smooth_images(n, side, seed=1)
    b = smooth_images(n, side, seed=2, noise_std=25.0)
    return a, b, side


@pytest.fixture(scope="session")
def texture_shift_features(texture_shift_corpora):
    import scatshift as ss

    a, b, side = texture_shift_corpora
    bank = ss.build_filter_bank(ss.ScatteringConfig(J=3, L=4, side=side))
    return ss.transform_corpus(a, bank), ss.transform_corpus(b, bank), bank
