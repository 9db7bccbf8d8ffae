import numpy as np
import pytest

import ccsnlab as cl


@pytest.fixture(scope="session")
def d100():
    """Benchmark configuration, self-gravity model, classical prescription."""
    return cl.derive(cl.table_defaults())


@pytest.fixture(scope="session")
def d100_qg():
    return cl.derive(cl.table_defaults(model="qg"))


@pytest.fixture(scope="session")
def init45():
    """4.5 dB squeezed thermal start with scale factor 2.8e3."""
    return cl.initial_squeezed_thermal(4.5, beta0=2.8e3)


@pytest.fixture(scope="session")
def mom100(d100, init45):
    """Moments on the 0.05 s record grid over a 40 s window (plus margin)."""
    return cl.integrate_moments(init45, d100, 41.0, dt=0.05)


@pytest.fixture(scope="session")
def mom100_qg(d100_qg, init45):
    return cl.integrate_moments(init45, d100_qg, 41.0, dt=0.05)


def dominant_peaks(x, dt, skip_bins=2):
    """(omega, magnitude) of local maxima of the windowed transform of x.

    The slowly decaying transient contributes a monotone low-frequency
    skirt that is not an oscillation peak; local maxima are therefore
    searched from `skip_bins` upward.  Sorted by magnitude, descending.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.hanning(len(x))
    f = np.abs(np.fft.rfft(x * w))
    om = np.fft.rfftfreq(len(x), dt) * 2.0 * np.pi
    peaks = [(om[i], f[i]) for i in range(max(2, skip_bins), len(f) - 1)
             if f[i] >= f[i - 1] and f[i] > f[i + 1]]
    peaks.sort(key=lambda p: -p[1])
    return peaks, om[1] - om[0]
