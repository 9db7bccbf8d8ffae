"""Deterministic dynamics of the conditional second moments.

State is carried in dimensionless form: h1 = Vxx/Vxx_vac, h2 = 2 Vxp/hbar,
h3 = Vpp/Vpp_vac, with the vacuum scales taken at the covariance
oscillation frequency omega_q.  Physicality requires h1*h3 - h2^2 >= 1.

Both gravity models share one code path: the model enters only through
omega_q (the qg model forces the self-gravity frequency to zero).
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .backend import njit
from .constants import HBAR, KB
from .params import DerivedParams, ScalingConstants

TWO_PI = 2.0 * math.pi

# Heisenberg slack, relative to max(1, h1*h3)
_HEISENBERG_RTOL = 1e-9


class HeisenbergViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class MomentState:
    """Conditional covariance triple at one instant (dimensionless)."""

    t: float
    h1: float
    h2: float
    h3: float

    @property
    def purity_factor(self) -> float:
        """h1*h3 - h2^2; equals 1 for pure states, >1 for mixed."""
        return self.h1 * self.h3 - self.h2 ** 2

    def validate(self):
        if self.h1 <= 0 or self.h3 <= 0:
            raise ValueError("h1 and h3 must be positive")
        if self.purity_factor < 1.0 - _HEISENBERG_RTOL * max(1.0, self.h1 * self.h3):
            raise ValueError(f"state violates the uncertainty bound: {self.purity_factor}")
        return self

    def vxx(self, scales: ScalingConstants) -> float:
        return self.h1 * scales.vxx_vac

    def vxp(self) -> float:
        return self.h2 * HBAR / 2.0

    def vpp(self, scales: ScalingConstants) -> float:
        return self.h3 * scales.vpp_vac

    @classmethod
    def from_dimensional(cls, t, vxx, vxp, vpp, scales: ScalingConstants):
        return cls(t=t, h1=vxx / scales.vxx_vac, h2=2.0 * vxp / HBAR,
                   h3=vpp / scales.vpp_vac)


@dataclass(frozen=True)
class EllipseParams:
    """Uncertainty-ellipse parameterization (squeeze, angle, scale)."""

    r: float
    theta: float
    beta: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("squeezing degree r must be >= 0")
        if self.beta <= 0:
            raise ValueError("scale factor beta must be > 0")


class MomentTrajectory:
    """Uniformly sampled moment evolution."""

    def __init__(self, t, h1, h2, h3, d: DerivedParams):
        self.t = np.asarray(t, dtype=np.float64)
        self.h1 = np.asarray(h1, dtype=np.float64)
        self.h2 = np.asarray(h2, dtype=np.float64)
        self.h3 = np.asarray(h3, dtype=np.float64)
        self.d = d
        self.model = d.model
        self.prescription = d.prescription
        if len(self.t) >= 2:
            steps = np.diff(self.t)
            if steps.min() <= 0:
                raise ValueError("time grid must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def state(self, i: int) -> MomentState:
        return MomentState(float(self.t[i]), float(self.h1[i]),
                           float(self.h2[i]), float(self.h3[i]))

    def final_state(self) -> MomentState:
        return self.state(len(self.t) - 1)

    def interp_h12(self, times):
        """Linear interpolation of (h1, h2) onto arbitrary times."""
        times = np.asarray(times, dtype=np.float64)
        return (np.interp(times, self.t, self.h1),
                np.interp(times, self.t, self.h2))

    def ellipse_arrays(self):
        """Per-sample (r, theta, beta) from the inverse ellipse map."""
        beta = np.sqrt(np.maximum(self.h1 * self.h3 - self.h2 ** 2, 0.0))
        half = 0.5 * (self.h3 - self.h1)
        amp = np.hypot(half, self.h2)
        r = 0.5 * np.arcsinh(np.where(beta > 0, amp / np.maximum(beta, 1e-300), 0.0))
        theta = 0.5 * np.arctan2(self.h2, half)
        theta = np.where(theta < 0, theta + math.pi, theta)
        return r, theta, beta


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------

def riccati_rhs(state: MomentState, d: DerivedParams,
                prescription: str | None = None) -> MomentState:
    """Time derivative of the covariance triple (pure function, 1/s units)."""
    presc = prescription or d.prescription
    wq = d.omega_q
    mu = d.lambda_star ** 2 / wq
    h1, h2, h3 = state.h1, state.h2, state.h3
    d1 = 2.0 * wq * h2 - mu * h1 * h1
    d2 = wq * (h3 - h1) - mu * h1 * h2
    d3 = -2.0 * wq * h2 + mu * (1.0 - h2 * h2)
    if presc == "quantum":
        g = d.gamma_m
        d2 += -g * h2
        d3 += -2.0 * g * h3 + 2.0 * g * d.coth_q
    return MomentState(t=1.0, h1=d1, h2=d2, h3=d3)


@njit(cache=True)
def _rk4_moments(h0, n_steps, dt, wq, mu, g, coth, quantum, store_every, out):
    """Fixed-step RK4 for the covariance triple.

    Returns (status, step) with status 0 on success, 1 if the
    uncertainty bound was violated beyond tolerance at `step`.
    Stored samples land in `out` every `store_every` steps.
    """
    h1 = h0[0]
    h2 = h0[1]
    h3 = h0[2]
    out[0, 0] = h1
    out[0, 1] = h2
    out[0, 2] = h3
    idx = 1
    for step in range(n_steps):
        a1 = h1
        a2 = h2
        a3 = h3
        k11 = 2.0 * wq * a2 - mu * a1 * a1
        k12 = wq * (a3 - a1) - mu * a1 * a2
        k13 = -2.0 * wq * a2 + mu * (1.0 - a2 * a2)
        if quantum:
            k12 += -g * a2
            k13 += -2.0 * g * a3 + 2.0 * g * coth

        a1 = h1 + 0.5 * dt * k11
        a2 = h2 + 0.5 * dt * k12
        a3 = h3 + 0.5 * dt * k13
        k21 = 2.0 * wq * a2 - mu * a1 * a1
        k22 = wq * (a3 - a1) - mu * a1 * a2
        k23 = -2.0 * wq * a2 + mu * (1.0 - a2 * a2)
        if quantum:
            k22 += -g * a2
            k23 += -2.0 * g * a3 + 2.0 * g * coth

        a1 = h1 + 0.5 * dt * k21
        a2 = h2 + 0.5 * dt * k22
        a3 = h3 + 0.5 * dt * k23
        k31 = 2.0 * wq * a2 - mu * a1 * a1
        k32 = wq * (a3 - a1) - mu * a1 * a2
        k33 = -2.0 * wq * a2 + mu * (1.0 - a2 * a2)
        if quantum:
            k32 += -g * a2
            k33 += -2.0 * g * a3 + 2.0 * g * coth

        a1 = h1 + dt * k31
        a2 = h2 + dt * k32
        a3 = h3 + dt * k33
        k41 = 2.0 * wq * a2 - mu * a1 * a1
        k42 = wq * (a3 - a1) - mu * a1 * a2
        k43 = -2.0 * wq * a2 + mu * (1.0 - a2 * a2)
        if quantum:
            k42 += -g * a2
            k43 += -2.0 * g * a3 + 2.0 * g * coth

        h1 += dt * (k11 + 2.0 * k21 + 2.0 * k31 + k41) / 6.0
        h2 += dt * (k12 + 2.0 * k22 + 2.0 * k32 + k42) / 6.0
        h3 += dt * (k13 + 2.0 * k23 + 2.0 * k33 + k43) / 6.0

        prod = h1 * h3
        scale = prod if prod > 1.0 else 1.0
        if prod - h2 * h2 < 1.0 - 1e-9 * scale:
            return 1, step + 1
        if (step + 1) % store_every == 0:
            out[idx, 0] = h1
            out[idx, 1] = h2
            out[idx, 2] = h3
            idx += 1
    return 0, n_steps


def integrate_moments(initial: MomentState, d: DerivedParams, t_obs: float,
                      dt: float | None = None, store_every: int = 1,
                      prescription: str | None = None) -> MomentTrajectory:
    """Fixed-step RK4 integration of the covariance triple over [0, t_obs].

    The step must resolve the 2*omega_q covariance oscillation:
    dt <= 2*pi/(40*omega_q) is enforced, with 2*pi/(200*omega_q) the
    default.  `store_every` thins the stored grid for long runs; the
    terminal state is always the last stored sample.
    """
    if prescription is not None and prescription != d.prescription:
        raise ValueError(
            f"prescription {prescription!r} does not match derived params "
            f"({d.prescription!r}); rebuild the configuration instead")
    initial.validate()
    if dt is None:
        dt = TWO_PI / (200.0 * d.omega_q)
    if dt > TWO_PI / (40.0 * d.omega_q) * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} too coarse; need <= {TWO_PI / (40 * d.omega_q)}")
    n_steps = int(round(t_obs / dt))
    if n_steps < 1:
        raise ValueError("t_obs shorter than one step")
    if store_every < 1:
        raise ValueError("store_every must be >= 1")
    n_store = n_steps // store_every + 1
    out = np.empty((n_store, 3), dtype=np.float64)
    h0 = np.array([initial.h1, initial.h2, initial.h3], dtype=np.float64)
    mu = d.lambda_star ** 2 / d.omega_q
    quantum = d.prescription == "quantum"
    coth = d.coth_q if quantum else 1.0
    status, step = _rk4_moments(h0, n_steps, dt, d.omega_q, mu, d.gamma_m,
                                coth, quantum, store_every, out)
    if status != 0:
        raise HeisenbergViolation(
            f"uncertainty bound violated at step {step} (t={step * dt:.6g} s); "
            f"reduce dt (currently {dt:.6g} s)")
    stored = 1 + n_steps // store_every
    t = initial.t + dt * store_every * np.arange(stored)
    return MomentTrajectory(t, out[:stored, 0], out[:stored, 1], out[:stored, 2], d)


# ---------------------------------------------------------------------------
# Steady states
# ---------------------------------------------------------------------------

def steady_state_classical(d: DerivedParams) -> MomentState:
    """Closed-form long-time covariance for the classical prescription."""
    lq2 = d.lambda_q2
    kappa = d.kappa
    h1 = math.sqrt(2.0 / (1.0 + kappa))
    h2 = lq2 / (1.0 + kappa)          # equals (kappa-1)/lq2 without cancellation
    h3 = kappa * h1
    return MomentState(t=math.inf, h1=h1, h2=h2, h3=h3)


def steady_state_quantum(d: DerivedParams, tol: float = 1e-12,
                         max_iter: int = 200) -> MomentState:
    """Damped-Newton fixed point of the quantum-prescription system.

    The residual is measured relative to the size of the competing rate
    terms, so `tol` is a relative tolerance; raises on non-convergence.
    """
    wq = d.omega_q
    mu = d.lambda_star ** 2 / wq
    g = d.gamma_m
    coth = d.coth_q

    def f(h):
        h1, h2, h3 = h
        return np.array([
            2.0 * wq * h2 - mu * h1 * h1,
            wq * (h3 - h1) - mu * h1 * h2 - g * h2,
            -2.0 * wq * h2 + mu * (1.0 - h2 * h2) - 2.0 * g * h3 + 2.0 * g * coth,
        ])

    def jac(h):
        h1, h2, h3 = h
        return np.array([
            [-2.0 * mu * h1, 2.0 * wq, 0.0],
            [-wq - mu * h2, -mu * h1 - g, wq],
            [0.0, -2.0 * wq - 2.0 * mu * h2, -2.0 * g],
        ])

    def scale(h):
        h1, h2, h3 = h
        terms = [wq * abs(h2), mu * h1 * h1, wq * abs(h3 - h1), mu,
                 g * abs(h3), g * coth, 1.0]
        return max(terms)

    start = steady_state_classical(d)
    h = np.array([start.h1, start.h2, start.h3])
    # thermal-dominated regime: jump to the balance estimate when closer
    if g * coth > 10.0 * mu:
        h_big = math.sqrt(2.0 * g * coth / max(mu, 1e-300)) if mu > 0 else coth
        h = np.array([h_big, mu * h_big ** 2 / (2.0 * wq), h_big])
        if mu == 0.0:
            h = np.array([coth, 0.0, coth])
    res = f(h)
    for _ in range(max_iter):
        if np.max(np.abs(res)) <= tol * scale(h):
            break
        step = np.linalg.solve(jac(h), -res)
        lam = 1.0
        best = None
        for _ in range(60):
            trial = h + lam * step
            if trial[0] > 0 and trial[2] > 0:
                r_trial = f(trial)
                if np.max(np.abs(r_trial)) < np.max(np.abs(res)):
                    best = (trial, r_trial)
                    break
            lam *= 0.5
        if best is None:
            break
        h, res = best
    resid = np.max(np.abs(res)) / scale(h)
    if resid > tol:
        raise RuntimeError(f"quantum steady state did not converge: relative residual {resid:.3e}")
    return MomentState(t=math.inf, h1=float(h[0]), h2=float(h[1]), h3=float(h[2]))


# ---------------------------------------------------------------------------
# Linearized dynamics around the classical fixed point
# ---------------------------------------------------------------------------

def _cardano(a: float, b: float, c: float):
    """Roots of x^3 + a x^2 + b x + c with complex arithmetic."""
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    disc = cmath.sqrt((q / 2.0) ** 2 + (p / 3.0) ** 3)
    u3 = -q / 2.0 + disc
    if abs(u3) < abs(-q / 2.0 - disc):
        u3 = -q / 2.0 - disc
    if u3 == 0:
        u = 0.0
    else:
        u = u3 ** (1.0 / 3.0)
    zeta = cmath.exp(2j * cmath.pi / 3.0)
    roots = []
    for k in range(3):
        if u == 0:
            x = (-q) ** (1.0 / 3.0) * zeta ** k if q != 0 else 0.0
        else:
            uk = u * zeta ** k
            x = uk - p / (3.0 * uk)
        roots.append(x - a / 3.0)
    return roots


def linearized_roots(d: DerivedParams):
    """Exact roots of the cubic governing small covariance deviations.

    Ordered so the purely real root comes first, then the conjugate
    pair with positive imaginary part second.
    """
    wq = d.omega_q
    lq2 = d.lambda_q2
    kappa = d.kappa
    # sqrt(2*(kappa-1)) without cancellation at small coupling
    s = lq2 * math.sqrt(2.0 / (kappa + 1.0))
    a = 3.0 * wq * s
    b = 4.0 * wq ** 2 * (2.0 * kappa - 1.0)
    c = 4.0 * wq ** 3 * kappa * s
    roots = _cardano(a, b, c)
    roots.sort(key=lambda z: abs(z.imag))
    tail = sorted(roots[1:], key=lambda z: z.imag)
    real_root = complex(roots[0].real, 0.0) if abs(roots[0].imag) < 1e-9 * abs(roots[0].real or 1.0) else roots[0]
    return [real_root, tail[1], tail[0]]


def effective_decay_rate(traj: MomentTrajectory, h1_eq: float | None = None):
    """Per-period convergence rate from successive interpolated h1 peaks.

    Peak times and heights come from three-point quadratic interpolation
    of grid maxima lying above the equilibrium value.  Returns a list of
    (n, rate) pairs; empty with a warning when fewer than two peaks exist.
    """
    if h1_eq is None:
        h1_eq = steady_state_classical(traj.d).h1
    h = traj.h1
    t = traj.t
    peaks_t = []
    peaks_v = []
    for i in range(1, len(h) - 1):
        if h[i] >= h[i - 1] and h[i] > h[i + 1] and h[i] > h1_eq:
            ym, y0, yp = h[i - 1], h[i], h[i + 1]
            denom = ym - 2.0 * y0 + yp
            if denom >= 0.0:
                continue
            delta = 0.5 * (ym - yp) / denom
            dt = t[i] - t[i - 1]
            peaks_t.append(t[i] + delta * dt)
            peaks_v.append(y0 - 0.25 * (ym - yp) * delta)
    if len(peaks_t) < 2:
        warnings.warn("fewer than two h1 peaks above equilibrium; no decay estimate")
        return []
    wq = traj.d.omega_q
    out = []
    for n in range(1, len(peaks_t)):
        e_prev = peaks_v[n - 1] - h1_eq
        e_next = peaks_v[n] - h1_eq
        if e_prev <= 0 or e_next <= 0:
            continue
        out.append((n, (wq / math.pi) * math.log(e_prev / e_next)))
    return out


# ---------------------------------------------------------------------------
# Uncertainty-ellipse representation
# ---------------------------------------------------------------------------

def ellipse_map(e: EllipseParams):
    """(r, theta, beta) -> (h1, h2, h3)."""
    ch, sh = math.cosh(2.0 * e.r), math.sinh(2.0 * e.r)
    c2t, s2t = math.cos(2.0 * e.theta), math.sin(2.0 * e.theta)
    return (e.beta * (ch - c2t * sh),
            e.beta * s2t * sh,
            e.beta * (ch + c2t * sh))


def ellipse_inverse(h1: float, h2: float, h3: float) -> EllipseParams:
    """Inverse map; theta is returned modulo pi."""
    disc = h1 * h3 - h2 * h2
    if disc < 1.0 - _HEISENBERG_RTOL * max(1.0, h1 * h3):
        raise ValueError(f"unphysical moments: h1*h3-h2^2 = {disc} < 1")
    beta = math.sqrt(max(disc, 0.0))
    half = 0.5 * (h3 - h1)
    amp = math.hypot(half, h2)
    r = 0.5 * math.asinh(amp / beta)
    theta = 0.5 * math.atan2(h2, half)
    if theta < 0.0:
        theta += math.pi
    return EllipseParams(r=r, theta=theta, beta=beta)


def ellipse_rhs(e: EllipseParams, d: DerivedParams):
    """Time derivatives (dr/dt, dtheta/dt, dbeta/dt); requires r > 0."""
    if e.r <= 0:
        raise ValueError("ellipse dynamics are singular at r = 0")
    nu = d.lambda_star ** 2 / (2.0 * d.omega_q)
    ch, sh = math.cosh(2.0 * e.r), math.sinh(2.0 * e.r)
    c2t, s2t = math.cos(2.0 * e.theta), math.sin(2.0 * e.theta)
    shape = (1.0 + e.beta ** 2) / (2.0 * e.beta)
    dr = nu * (c2t * ch - sh) * shape
    dtheta = d.omega_q - nu * (s2t / sh) * shape
    dbeta = nu * (ch - c2t * sh) * (1.0 - e.beta ** 2)
    return dr, dtheta, dbeta


def integrate_ellipse(e0: EllipseParams, d: DerivedParams, t_obs: float,
                      dt: float | None = None):
    """RK4 on the (r, theta, beta) system; returns (t, r, theta, beta)."""
    if dt is None:
        dt = TWO_PI / (200.0 * d.omega_q)
    n = int(round(t_obs / dt))
    t = dt * np.arange(n + 1)
    r = np.empty(n + 1)
    th = np.empty(n + 1)
    be = np.empty(n + 1)
    y = np.array([e0.r, e0.theta, e0.beta])
    r[0], th[0], be[0] = y

    nu = d.lambda_star ** 2 / (2.0 * d.omega_q)
    wq = d.omega_q

    def rhs(y):
        rr, tt, bb = y
        ch, sh = math.cosh(2.0 * rr), math.sinh(2.0 * rr)
        c2t, s2t = math.cos(2.0 * tt), math.sin(2.0 * tt)
        shape = (1.0 + bb * bb) / (2.0 * bb)
        return np.array([
            nu * (c2t * ch - sh) * shape,
            wq - nu * (s2t / sh) * shape,
            nu * (ch - c2t * sh) * (1.0 - bb * bb),
        ])

    for i in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if y[0] <= 0:
            raise ValueError(f"squeezing degree crossed zero at t={t[i + 1]:.4g} s; "
                             "ellipse representation breaks down")
        r[i + 1], th[i + 1], be[i + 1] = y
    return t, r, th, be


def case2_rotation_ratio(e: EllipseParams, d: DerivedParams) -> float:
    """Size of the measurement correction to free ellipse rotation."""
    return (d.lambda_star ** 2 / d.omega_q ** 2) * math.exp(-2.0 * e.r) \
        * (1.0 + e.beta ** 2) / (2.0 * e.beta)


def analytic_case2(e0: EllipseParams, d: DerivedParams, t, ratio_limit: float = 0.1):
    """Closed-form squeezed-state evolution in the fast-rotation regime.

    Valid while the measurement correction to the rotation stays small
    (checked against `ratio_limit` along the solution); returns a dict
    with r, beta, g, h1 and the upper envelope h1_max on the given times.
    """
    t = np.asarray(t, dtype=np.float64)
    wq = d.omega_q
    nu2 = d.lambda_star ** 2 / (2.0 * wq ** 2)
    g = nu2 * (wq * t - np.cos(wq * t + 2.0 * e0.theta) * np.sin(wq * t))
    boost = math.exp(2.0 * e0.r) * e0.beta
    r_t = e0.r - 0.25 * np.log1p(boost * g)
    beta_t = e0.beta / np.sqrt(1.0 + boost * g)
    h1_free = e0.beta * (math.cosh(2.0 * e0.r)
                         - np.cos(2.0 * e0.theta + 2.0 * wq * t) * math.sinh(2.0 * e0.r))
    h1 = (e0.beta ** 2 * np.cos(e0.theta + wq * t) ** 2 * g + h1_free) / (1.0 + boost * g)
    h1_max = 1.0 / ((d.lambda_star ** 2 / (2.0 * wq)) * t
                    + math.exp(-2.0 * e0.r) / e0.beta)
    ratios = (d.lambda_star ** 2 / wq ** 2) * np.exp(-2.0 * r_t) \
        * (1.0 + beta_t ** 2) / (2.0 * beta_t)
    worst = float(np.max(ratios))
    if worst >= ratio_limit:
        raise ValueError(
            f"rotation-dominance ratio {worst:.3g} exceeds {ratio_limit}; "
            "closed-form solution not applicable")
    return {"t": t, "r": r_t, "beta": beta_t, "g": g, "h1": h1, "h1_max": h1_max}


def sqz_db(h1: float, h2: float, h3: float) -> float:
    """Squeezing level of a (possibly mixed) Gaussian state in decibels."""
    disc = h1 * h3 - h2 * h2
    if disc < 1.0 - _HEISENBERG_RTOL * max(1.0, h1 * h3):
        raise ValueError("unphysical moments")
    root = math.hypot(h1 - h3, 2.0 * h2)
    ratio = (h1 + h3 - root) / (h1 + h3 + root)
    return -5.0 * math.log10(ratio)


def db_to_r(level_db: float) -> float:
    """Squeezing degree r for a given axis-ratio decibel level."""
    return level_db * math.log(10.0) / 20.0


def initial_squeezed_thermal(level_db: float, beta0: float | None = None,
                             min_variance: float | None = None,
                             theta0: float = math.pi / 2.0) -> MomentState:
    """Squeezed thermal start state.

    Specify the overall scale either directly (`beta0`) or through the
    smaller quadrature variance in zero-point units (`min_variance`).
    The default angle puts the enlarged quadrature along position.
    """
    r = db_to_r(level_db)
    if beta0 is None:
        if min_variance is None:
            raise ValueError("provide beta0 or min_variance")
        beta0 = min_variance * math.exp(2.0 * r)
    h1, h2, h3 = ellipse_map(EllipseParams(r=r, theta=theta0, beta=beta0))
    return MomentState(t=0.0, h1=h1, h2=h2, h3=h3).validate()


# ---------------------------------------------------------------------------
# Stationary spectra and the model log-ratio
# ---------------------------------------------------------------------------

def stationary_psd(d: DerivedParams, omega, prescription: str | None = None):
    """Steady-state record spectrum, shot floor normalized to 1."""
    presc = prescription or d.prescription
    omega = np.asarray(omega, dtype=np.float64)
    m = d.mass
    resp = (omega ** 2 - d.omega_m ** 2) ** 2 + d.gamma_m ** 2 * omega ** 2
    if presc == "classical":
        a2 = d.alpha ** 2
        num = (HBAR ** 2 * a2 ** 2
               + 4.0 * a2 * m * d.gamma_m * KB * d.temperature
               - 2.0 * m * d.omega_sn_eff ** 2
               * (math.sqrt(HBAR ** 2 * a2 ** 2 + m ** 2 * d.omega_q ** 4)
                  - m * d.omega_q ** 2))
        return num / (m ** 2 * resp) + 1.0
    lq2 = d.lambda_q2
    th = 2.0 * lq2 / d.q_q * d.coth_q
    bracket = (lq2 ** 2 + th
               - 2.0 * (d.omega_sn_eff ** 2 / d.omega_q ** 2)
               * (math.sqrt(1.0 + lq2 ** 2 + th) - 1.0))
    return d.omega_q ** 4 * bracket / resp + 1.0


def log_ratio(d: DerivedParams, prescription: str | None = None) -> float:
    """Decibel gap between the two models' stationary spectra on resonance."""
    presc = prescription or d.prescription
    if presc == "classical":
        lq2 = d.lambda_q2
        frac = (d.omega_sn_eff ** 2 / d.omega_q ** 2) * 2.0 * lq2 \
            / ((d.kappa + 1.0) * (lq2 + d.lambda_th))
        return -10.0 * math.log10(1.0 - frac)
    from .params import derive
    d_qg = derive(d.params.with_model("qg"))
    s_sn = stationary_psd(d, d.omega_m, "quantum")
    s_qg = stationary_psd(d_qg, d.omega_m, "quantum")
    return -10.0 * math.log10(float(s_sn) / float(s_qg))


def quantum_log_ratio_max(d: DerivedParams):
    """Best-case resonance log-ratio under the quantum prescription.

    Returns (value_db, optimal_lambda_q); the optimum is attained at a
    measurement strength set by the thermal occupation.
    """
    val = -10.0 * math.log10(
        1.0 - 2.0 * d.omega_sn_eff ** 2 / (2.0 * d.gamma_m * d.omega_m + 2.0 * d.omega_q ** 2))
    lam_opt = math.sqrt(HBAR * d.omega_m / (2.0 * KB * d.temperature))
    return val, lam_opt


def peak_exists(lam_decay: float, omega_osc: float):
    """Whether exp(-lam t) sin(omega t) H(t) has a spectral peak.

    Returns (exists, peak_frequency_or_None).
    """
    if lam_decay <= 0 or omega_osc <= 0:
        raise ValueError("rates must be positive")
    if lam_decay < omega_osc:
        return True, math.sqrt(omega_osc ** 2 - lam_decay ** 2)
    return False, None
