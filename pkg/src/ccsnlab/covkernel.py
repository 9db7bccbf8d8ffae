"""Separable-basis evaluation of the record correlation integrals.

The measurement-induced two-time correlation of the record is a
one-dimensional integral over the past of products of oscillatory
factors with the moment functions h1, h2.  Expanding both time
arguments over the basis {h1 cos, h1 sin, h2 cos, h2 sin}(omega_mc s)
turns every entry into a 4x4 bilinear form in cumulative integrals that
are precomputed once on the moment grid: a full n x n covariance then
costs O(n^2) after O(n) quadrature instead of O(n^3).
"""

from __future__ import annotations

import math

import numpy as np

from .constants import HBAR, KB
from .params import DerivedParams
from .moments import MomentTrajectory


class MeasurementBasis:
    """Cumulative integrals J_ab(u) = int_0^u e^(gamma s) g_a g_b ds."""

    def __init__(self, d: DerivedParams, moments: MomentTrajectory):
        self.d = d
        s = moments.t
        if s[0] != 0.0:
            raise ValueError("moment trajectory must start at t = 0")
        self.s = s
        wmc = d.omega_mc
        eg = np.exp(d.gamma_m * s)
        cos_s = np.cos(wmc * s)
        sin_s = np.sin(wmc * s)
        g = np.stack([moments.h1 * cos_s, moments.h1 * sin_s,
                      moments.h2 * cos_s, moments.h2 * sin_s])
        n = len(s)
        ds = np.diff(s)
        self.j_cum = np.empty((4, 4, n))
        for a in range(4):
            for b in range(a, 4):
                f = eg * g[a] * g[b]
                cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[:-1] + f[1:]) * ds)])
                self.j_cum[a, b] = cum
                self.j_cum[b, a] = cum
        # h1, h2 lookups for the cross-correlation term
        self._h1 = moments.h1
        self._h2 = moments.h2

    def j_at(self, u):
        """J (4,4,len(u)) interpolated at integration limits u (clipped at 0)."""
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        uc = np.clip(u, 0.0, self.s[-1])
        out = np.empty((4, 4, len(u)))
        for a in range(4):
            for b in range(a, 4):
                v = np.interp(uc, self.s, self.j_cum[a, b])
                out[a, b] = v
                out[b, a] = v
        out[:, :, u < 0.0] = 0.0
        return out

    def h_at(self, u):
        u = np.asarray(u, dtype=np.float64)
        return (np.interp(u, self.s, self._h1), np.interp(u, self.s, self._h2))


def weight_vectors(d: DerivedParams, times, h2_coeff: float = 1.0,
                   phase_inside: bool = False) -> np.ndarray:
    """Expansion coefficients c_a(t) of the response bracket (4, len)."""
    times = np.asarray(times, dtype=np.float64)
    wmc = d.omega_mc
    phi_eff = wmc * d.phi if phase_inside else d.phi
    r1 = d.omega_m / wmc
    r2 = h2_coeff * d.omega_q / wmc
    return np.stack([
        r1 * np.cos(wmc * times + phi_eff),
        r1 * np.sin(wmc * times + phi_eff),
        r2 * np.sin(wmc * times),
        -r2 * np.cos(wmc * times),
    ])


def measurement_prefactor(d: DerivedParams) -> float:
    """Lambda_*^4 / (2 omega_q^2): scale of the back-action correlation."""
    return d.lambda_star ** 4 / (2.0 * d.omega_q ** 2)


def corr_m_pairs(d: DerivedParams, basis: MeasurementBasis, tj, tk,
                 h2_coeff: float = 1.0, phase_inside: bool = False) -> np.ndarray:
    """Back-action correlation alpha^2 <x(tj) x(tk)>_m for paired times."""
    tj = np.atleast_1d(np.asarray(tj, dtype=np.float64))
    tk = np.atleast_1d(np.asarray(tk, dtype=np.float64))
    cj = weight_vectors(d, tj, h2_coeff, phase_inside)
    ck = weight_vectors(d, tk, h2_coeff, phase_inside)
    jm = basis.j_at(np.minimum(tj, tk))
    val = np.einsum("al,abl,bl->l", cj, jm, ck)
    val[np.minimum(tj, tk) < 0.0] = 0.0
    return (measurement_prefactor(d)
            * np.exp(-0.5 * d.gamma_m * (tj + tk)) * val)


def corr_th_pairs(d: DerivedParams, tj, tk) -> np.ndarray:
    """Thermal-drive correlation alpha^2 <x(tj) x(tk)>_th, closed form.

    Vanishes when either time is negative; the difference of the two
    exponential envelopes is evaluated with expm1 because the leading
    1/gamma_m pieces cancel almost exactly at high mechanical Q.
    """
    tj = np.atleast_1d(np.asarray(tj, dtype=np.float64))
    tk = np.atleast_1d(np.asarray(tk, dtype=np.float64))
    gm = d.gamma_m
    wm = d.omega_m
    wmc = d.omega_mc
    phi = d.phi
    adiff = np.abs(tj - tk)
    tsum = tj + tk
    pref = d.lambda_star ** 2 * wm ** 2 / (2.0 * wmc ** 2 * d.q_m) * d.coth_m
    e_small = np.exp(-0.5 * gm * adiff)
    # (e^{-gm |dt|/2} - e^{-gm (tj+tk)/2}) / gm, cancellation-free
    diff_over_g = e_small * (-np.expm1(-gm * np.minimum(tj, tk))) / gm
    val = (np.cos(wmc * (tj - tk)) * diff_over_g
           + (e_small * np.sin(wmc * adiff + phi)
              - np.exp(-0.5 * gm * tsum) * np.sin(wmc * tsum + phi)) / (2.0 * wm))
    val = pref * val
    val[np.minimum(tj, tk) < 0.0] = 0.0
    return val


def corr_xdw_pairs(d: DerivedParams, basis: MeasurementBasis, tj, tk,
                   equal_time: bool = False) -> np.ndarray:
    """Displacement/shot cross term alpha <x(t_later) dW(t_earlier)>-type.

    At exactly equal times the discretized record has no cross term (the
    shot increment of a sample is independent of the displacement at the
    same instant); pass equal_time=True to use the continuum limit value
    instead.
    """
    tj = np.atleast_1d(np.asarray(tj, dtype=np.float64))
    tk = np.atleast_1d(np.asarray(tk, dtype=np.float64))
    adiff = np.abs(tj - tk)
    tmin = np.minimum(tj, tk)
    h1m, h2m = basis.h_at(np.clip(tmin, 0.0, None))
    wmc = d.omega_mc
    val = (d.lambda_star ** 2 / (2.0 * d.omega_q)
           * np.exp(-0.5 * d.gamma_m * adiff)
           * ((d.omega_m / wmc) * h1m * np.cos(wmc * adiff + d.phi)
              + (d.omega_q / wmc) * h2m * np.sin(wmc * adiff)))
    val[tmin < 0.0] = 0.0
    if not equal_time:
        val[adiff == 0.0] = 0.0
    return val
