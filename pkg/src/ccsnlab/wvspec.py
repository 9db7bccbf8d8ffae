"""Time-frequency (lag-transform) spectra of the measurement record.

The nonstationary record correlation C(t, tau) is transformed over the
lag tau at fixed absolute time t.  Values form a quasi-power spectrum:
they are real but may be negative and must not be clipped.

Lag convention: tau runs over multiples of 2*dt so that t +- tau/2 stays
on the sampling grid.  The white measurement-noise part of the
correlation is a delta in lag; in the analytic path it is added after
the transform as a constant (1/(4 pi) in the raw 1/(2 pi) transform
convention), while the sampled-record path carries it automatically as
the zero-lag product, where the coarse lag grid makes it land at
1/(2 pi).  `delta_mode="discrete"` makes the analytic path reproduce the
sampled-path floor exactly, for estimator cross-checks on a shared grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .params import DerivedParams
from .moments import MomentTrajectory
from .trajectory import Ensemble
from .covkernel import (MeasurementBasis, corr_m_pairs, corr_th_pairs,
                        corr_xdw_pairs)

RAW_FLOOR = 1.0 / (4.0 * math.pi)       # analytic delta term, raw convention
DISCRETE_FLOOR = 1.0 / (2.0 * math.pi)  # zero-lag bin of the sampled estimator


@dataclass(frozen=True)
class CorrelationKernel:
    """Record-correlation components at one (t, tau); delta term symbolic."""

    t: float
    tau: float
    c_m: float
    c_th: float
    c_xdw: float
    delta_weight: float = 0.5   # coefficient of delta(tau)
    model: str = "sn"
    prescription: str = "classical"

    @property
    def total_regular(self) -> float:
        return self.c_m + self.c_th + self.c_xdw


@dataclass
class WvSpectrum:
    """Quasi-power values on an (omega, t) grid; may be negative."""

    t: np.ndarray
    omega: np.ndarray
    values: np.ndarray          # shape (n_omega, n_t)
    normalization: str          # "raw" or "floor"
    delta_mode: str
    model: str
    prescription: str

    def at(self, t_value: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.t - t_value)))
        return self.values[:, i]

    def to_csv(self, path):
        from .io import write_csv
        header = ["omega_rad_s"] + [f"t={tv:.10g}" for tv in self.t]
        rows = np.column_stack([self.omega, self.values])
        write_csv(path, header, rows)

    def sidecar(self) -> dict:
        return {
            "omega_rad_s": [float(v) for v in self.omega[:0]],  # grids in CSV
            "n_omega": int(len(self.omega)),
            "t_values_s": [float(v) for v in self.t],
            "normalization": self.normalization,
            "delta_mode": self.delta_mode,
            "model": self.model,
            "prescription": self.prescription,
        }


def analytic_kernel(d: DerivedParams, moments: MomentTrajectory, t: float,
                    tau: float, h2_coeff: float = 1.0,
                    phase_inside: bool = True,
                    basis: MeasurementBasis | None = None) -> CorrelationKernel:
    """Record-correlation components at one evaluation point.

    Even in tau by construction.  The back-action term integrates the
    moment history up to t - |tau|/2 (empty, hence zero, when that is
    negative).  `phase_inside` places the loss angle inside the
    oscillatory time argument of the back-action bracket; the
    alternative convention puts it outside, as in the two-time
    covariance form.  Both differ only at O(loss angle).
    """
    if basis is None:
        basis = MeasurementBasis(d, moments)
    tj = t + tau / 2.0
    tk = t - tau / 2.0
    cm = corr_m_pairs(d, basis, tj, tk, h2_coeff, phase_inside)[0]
    cth = corr_th_pairs(d, tj, tk)[0] if d.prescription == "classical" else 0.0
    cxdw = corr_xdw_pairs(d, basis, tj, tk, equal_time=True)[0]
    if min(tj, tk) < 0.0:
        cxdw = 0.0
    return CorrelationKernel(t=t, tau=tau, c_m=float(cm), c_th=float(cth),
                             c_xdw=float(cxdw), model=d.model,
                             prescription=d.prescription)


def _lag_weights(n_lags: int, taper: str | None) -> np.ndarray:
    if taper is None or taper == "none":
        w = np.ones(n_lags)
        w[-1] = 0.5         # trapezoid end correction on the open lag window
        return w
    if taper == "hann":
        # half window over lag index 0..L of the symmetric Hann on [-L, L]
        l = np.arange(n_lags)
        return 0.5 * (1.0 + np.cos(math.pi * l / max(n_lags - 1, 1)))
    raise ValueError(f"unknown taper {taper!r}")


def _transform(corr, omega, tau, weights, dt):
    """(1/2pi) * sum over signed lags of w C cos(omega tau), step 2 dt."""
    wc = corr * weights
    mat = np.cos(np.outer(omega, tau))
    vals = mat @ wc * (2.0 * dt / (2.0 * math.pi))
    vals *= 2.0
    vals -= wc[..., 0] * (2.0 * dt / (2.0 * math.pi))  # lag 0 counted once
    return vals


def wv_from_kernel(d: DerivedParams, moments: MomentTrajectory, t_values,
                   omega, dt: float, taper: str | None = "hann",
                   normalization: str = "floor", delta_mode: str = "analytic",
                   h2_coeff: float = 1.0, phase_inside: bool = True,
                   components: tuple = ("m", "th", "xdw"),
                   equal_time_cross: bool = True) -> WvSpectrum:
    """Lag transform of the analytic record correlation.

    The lag grid at each evaluation time t spans [-2t, 2t] in steps of
    2*dt.  `components` selects which correlation pieces enter;
    `delta_mode` is "analytic" (constant 1/(4 pi) raw), "discrete"
    (zero-lag spike 1/(2 dt), reproducing the sampled estimator), or
    "none".  With normalization="floor" values are divided by the
    delta-term level so the white-noise floor sits at 1.
    """
    t_values = np.atleast_1d(np.asarray(t_values, dtype=np.float64))
    omega = np.asarray(omega, dtype=np.float64)
    basis = MeasurementBasis(d, moments)
    out = np.empty((len(omega), len(t_values)))
    for it, t in enumerate(t_values):
        n_l = int(math.floor(t / dt + 1e-9)) + 1
        lags = 2.0 * dt * np.arange(n_l)
        tj = t + lags / 2.0
        tk = t - lags / 2.0
        corr = np.zeros(n_l)
        if "m" in components:
            corr += corr_m_pairs(d, basis, tj, tk, h2_coeff, phase_inside)
        if "th" in components and d.prescription == "classical":
            corr += corr_th_pairs(d, tj, tk)
        if "xdw" in components:
            corr += corr_xdw_pairs(d, basis, tj, tk, equal_time=equal_time_cross)
        w = _lag_weights(n_l, taper)
        if delta_mode == "discrete":
            corr = corr.copy()
            corr[0] += 1.0 / (2.0 * dt)
        vals = _transform(corr, omega, lags, w, dt)
        if delta_mode == "analytic":
            vals = vals + RAW_FLOOR
        out[:, it] = vals
    floor = DISCRETE_FLOOR if delta_mode == "discrete" else RAW_FLOOR
    if normalization == "floor":
        out /= floor
    elif normalization != "raw":
        raise ValueError(f"unknown normalization {normalization!r}")
    return WvSpectrum(t=t_values, omega=omega, values=out,
                      normalization=normalization, delta_mode=delta_mode,
                      model=d.model, prescription=d.prescription)


def wv_from_ensemble(ensemble: Ensemble, t: float, omega,
                     taper: str | None = "hann",
                     normalization: str = "floor", return_trials: bool = False):
    """Per-realization lag transforms of sampled records at fixed t.

    Returns (mean_spectrum, per_trial_std, [trial_matrix]).  The mean is
    over realizations; the spread is the single-trial standard
    deviation (divide by sqrt(N) for the spread of the mean).  The shot
    floor appears at the zero-lag product; with normalization="floor"
    it is scaled to 1.
    """
    if ensemble.n_members < 1:
        raise ValueError("empty ensemble")
    omega = np.asarray(omega, dtype=np.float64)
    dt = ensemble.dt
    n = ensemble.n_samples
    j0 = int(round(t / dt))
    if not (0 <= j0 < n):
        raise ValueError(f"t={t} outside the record")
    n_l = min(j0, n - 1 - j0) + 1
    lags = 2.0 * dt * np.arange(n_l)
    prods = ensemble.y[:, j0:j0 + n_l] * ensemble.y[:, j0::-1][:, :n_l]
    w = _lag_weights(n_l, taper)
    cosmat = np.cos(np.outer(omega, lags)) * w
    scale = 2.0 * dt / (2.0 * math.pi)
    trial_vals = prods @ cosmat.T * scale
    trial_vals *= 2.0
    trial_vals -= np.outer(prods[:, 0] * w[0] * scale, np.ones(len(omega)))
    if normalization == "floor":
        trial_vals = trial_vals / DISCRETE_FLOOR
    elif normalization != "raw":
        raise ValueError(f"unknown normalization {normalization!r}")
    mean = WvSpectrum(t=np.array([t]), omega=omega,
                      values=trial_vals.mean(axis=0)[:, None],
                      normalization=normalization, delta_mode="discrete",
                      model=ensemble.model, prescription=ensemble.prescription)
    spread = trial_vals.std(axis=0, ddof=1)
    if return_trials:
        return mean, spread, trial_vals
    return mean, spread


# ---------------------------------------------------------------------------
# Detection statistics of the |averaged spectrum| at one (t, omega)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionStat:
    """Balanced-threshold discrimination from folded-normal statistics."""

    omega: float
    n_trials: int
    mu_sn: float
    sigma_sn: float
    mu_qg: float
    sigma_qg: float
    threshold: float
    false_alarm: float
    false_dismissal: float

    def as_dict(self) -> dict:
        return {
            "omega_rad_s": self.omega, "n_trials": self.n_trials,
            "mu_sn": self.mu_sn, "sigma_sn": self.sigma_sn,
            "mu_qg": self.mu_qg, "sigma_qg": self.sigma_qg,
            "threshold": self.threshold, "false_alarm": self.false_alarm,
            "false_dismissal": self.false_dismissal,
        }


def folded_cdf(x, mu, sigma):
    """CDF of |N(mu, sigma^2)| at x >= 0."""
    return ndtr((x - mu) / sigma) - ndtr((-x - mu) / sigma)


def folded_detection(mu_sn: float, sigma_sn: float, mu_qg: float,
                     sigma_qg: float, n_trials: int,
                     omega: float = math.nan) -> DetectionStat:
    """Balanced decision threshold between |mean-of-N| spectra.

    The mean of N single-trial values is normal with variance sigma^2/N;
    its absolute value is folded normal.  The threshold rho* solves
    false_alarm(rho) = false_dismissal(rho) by bisection.
    """
    if sigma_sn <= 0 or sigma_qg <= 0:
        raise ValueError("spreads must be positive")
    if n_trials < 1:
        raise ValueError("need n_trials >= 1")
    m_sn, m_qg = abs(mu_sn), abs(mu_qg)
    s_sn = sigma_sn / math.sqrt(n_trials)
    s_qg = sigma_qg / math.sqrt(n_trials)
    if m_sn == m_qg and s_sn == s_qg:
        raise ValueError("identical distributions: balanced threshold undefined")
    if m_sn < m_qg:
        raise ValueError("expected the sn-model mean magnitude to exceed qg")

    def falarm(rho):
        return 1.0 - folded_cdf(rho, m_qg, s_qg)

    def fdism(rho):
        return folded_cdf(rho, m_sn, s_sn)

    lo, hi = 0.0, m_sn + 12.0 * s_sn
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if falarm(mid) > fdism(mid):
            lo = mid
        else:
            hi = mid
    rho = 0.5 * (lo + hi)
    return DetectionStat(omega=omega, n_trials=n_trials, mu_sn=mu_sn,
                         sigma_sn=sigma_sn, mu_qg=mu_qg, sigma_qg=sigma_qg,
                         threshold=rho, false_alarm=float(falarm(rho)),
                         false_dismissal=float(fdism(rho)))


# ---------------------------------------------------------------------------
# Variable-limit transform identity (quadrature oracle)
# ---------------------------------------------------------------------------

def appendix_c_identity(f, t: float, omega: float, n_points: int = 200001):
    """Both sides of the variable-limit lag-transform identity.

    left: direct double quadrature of the lag transform of
    int_0^(t-|tau|/2) f(s) ds.  right: the cosine-projection closed form
    (2 cos(2 omega t)/omega) * Im[F(2 omega)] with F the finite-range
    transform of f.  right_exact: the closed form retaining the full
    phase, (2/omega) * Im[e^(2 i omega t) F(2 omega)], which equals the
    left side identically.  Returns (left, right, right_exact).
    """
    if omega == 0.0:
        raise ValueError("omega=0 excluded (handle by series expansion)")
    s = np.linspace(0.0, t, n_points)
    fs = np.asarray(f(s), dtype=np.float64)
    ds = s[1] - s[0]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (fs[1:] + fs[:-1]) * ds)])
    tau = np.linspace(-2.0 * t, 2.0 * t, 2 * n_points - 1)
    u = t - np.abs(tau) / 2.0
    iu = np.interp(u, s, cum)
    integrand = np.cos(omega * tau) * iu   # odd part vanishes by symmetry
    left = float(np.trapezoid(integrand, tau))
    ftilde = np.trapezoid(fs * np.exp(-2j * omega * s), s)
    right = float(2.0 * math.cos(2.0 * omega * t) / omega * ftilde.imag)
    right_exact = float(2.0 / omega * (np.exp(2j * omega * t) * ftilde).imag)
    return left, right, right_exact
