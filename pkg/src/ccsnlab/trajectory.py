"""Stochastic realizations of the conditional means and optical record.

Everything is in scaled units: displacement and momentum in zero-point
units of the covariance-oscillation mode, and the record
y_j = a * x(t_j) + dW_j / (sqrt(2) dt) with a = lambda_star/sqrt(2 omega_q),
so the white measurement-noise floor of y is 1/(2 dt) per sample.

Noise streams are counter-based (Philox keyed by (master seed, stream
index)), so member i of an ensemble is regenerable without touching any
other stream; ensembles are bit-reproducible regardless of batch sizes
or worker counts.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import HBAR, KB
from .params import DerivedParams, SystemParams
from .moments import MomentTrajectory

_MAGIC = b"CCSNENS1"


def params_digest(params: SystemParams) -> str:
    """Stable hash of a physical configuration."""
    payload = json.dumps({
        "mass": params.mass, "omega_m": params.omega_m,
        "gamma_m": params.gamma_m, "omega_sn": params.omega_sn,
        "temperature": params.temperature, "cavity_length": params.cavity_length,
        "wavelength": params.wavelength, "finesse": params.finesse,
        "power": params.power, "prescription": params.prescription,
        "model": params.model, "gamma_cav": params.gamma_cav,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class NoisePath:
    """Reproducible Wiener increments for one realization.

    Two independent streams: `dw` drives the measurement back-action and
    shot noise, `dw_n` the thermal force.  Increments are N(0, dt) at the
    (sub)step resolution; both arrays are regenerable bit-exactly from
    (master_seed, stream_index).
    """

    master_seed: int
    stream_index: int
    dt: float
    n_steps: int
    _dw: np.ndarray | None = field(default=None, repr=False)
    _dwn: np.ndarray | None = field(default=None, repr=False)

    def _generate(self):
        key = np.array([self.master_seed, self.stream_index], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        scale = math.sqrt(self.dt)
        self._dw = scale * rng.standard_normal(self.n_steps)
        self._dwn = scale * rng.standard_normal(self.n_steps)

    @property
    def dw(self) -> np.ndarray:
        if self._dw is None:
            self._generate()
        return self._dw

    @property
    def dw_n(self) -> np.ndarray:
        if self._dwn is None:
            self._generate()
        return self._dwn


@dataclass
class Trajectory:
    """One realization: conditional means and measurement record."""

    t: np.ndarray        # record grid, t_j = j dt, j = 0..n
    x: np.ndarray        # <x>_c in zero-point units
    p: np.ndarray        # <p>_c in zero-point units
    y: np.ndarray        # measurement record
    dt: float
    model: str
    prescription: str
    noise: NoisePath | None = None

    def to_csv(self, path):
        from .io import write_csv
        write_csv(path, ["t", "x_zp", "p_zp", "y"],
                  np.column_stack([self.t, self.x, self.p, self.y]))


@dataclass
class Ensemble:
    """Record matrix of independent realizations (one row per member)."""

    params_hash: str
    master_seed: int
    n_members: int
    dt: float
    n_samples: int       # samples per record (n + 1)
    y: np.ndarray        # (n_members, n_samples)
    model: str
    prescription: str

    def save(self, path):
        header = json.dumps({
            "params_hash": self.params_hash, "master_seed": self.master_seed,
            "n_members": self.n_members, "dt": self.dt,
            "n_samples": self.n_samples, "model": self.model,
            "prescription": self.prescription,
        }, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(np.uint32(len(header)).tobytes())
            fh.write(header)
            fh.write(np.ascontiguousarray(self.y, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ValueError(f"{path}: not an ensemble container")
            (hlen,) = np.frombuffer(fh.read(4), dtype=np.uint32)
            meta = json.loads(fh.read(int(hlen)).decode())
            data = np.frombuffer(fh.read(), dtype="<f8")
        y = data.reshape(meta["n_members"], meta["n_samples"])
        return cls(params_hash=meta["params_hash"], master_seed=meta["master_seed"],
                   n_members=meta["n_members"], dt=meta["dt"],
                   n_samples=meta["n_samples"], y=y, model=meta["model"],
                   prescription=meta["prescription"])


def _thermal_drive(d: DerivedParams) -> float:
    """Momentum-diffusion amplitude of the classical thermal force (zp units)."""
    return math.sqrt(2.0 * d.gamma_m * (d.omega_m / d.omega_q) * d.coth_m)


def _check_tags(d: DerivedParams, moments: MomentTrajectory):
    if moments.model != d.model or moments.prescription != d.prescription:
        raise ValueError(
            f"moment trajectory tagged ({moments.model}, {moments.prescription}) "
            f"does not match configuration ({d.model}, {d.prescription})")


def simulate(d: DerivedParams, moments: MomentTrajectory, initial,
             noise: NoisePath, dt: float, t_obs: float,
             substeps: int = 1) -> Trajectory:
    """Euler-Maruyama realization of the conditional means and record.

    The means are stepped at dt/substeps (the noise path must be sampled
    at that resolution); the record keeps the coarse grid t_j = j dt with
    the shot term built from the aggregated increment of each record
    step.  h1 and h2 are linearly interpolated from the moment grid onto
    step midpoints (midpoint sampling of the deterministic coefficients
    keeps the strong order at 1 while removing the leading quadrature
    bias).  The quantum prescription carries no thermal drive in the
    means.
    """
    _check_tags(d, moments)
    n_rec = int(round(t_obs / dt))
    h = dt / substeps
    if abs(noise.dt - h) > 1e-12 * h:
        raise ValueError(f"noise step {noise.dt} != simulation step {h}")
    n_sim = (n_rec + 1) * substeps
    if noise.n_steps < n_sim:
        raise ValueError(f"noise path too short: {noise.n_steps} < {n_sim}")
    if moments.t[-1] < t_obs - 1e-9:
        raise ValueError("moment trajectory does not cover the observation window")

    s = h * (np.arange(n_sim) + 0.5)
    h1s, h2s = moments.interp_h12(s)
    dw = noise.dw[:n_sim]
    dwn = noise.dw_n[:n_sim]

    a = d.record_coupling
    sqrt2a = math.sqrt(2.0) * a
    wq = d.omega_q
    w2q = d.omega_m ** 2 / d.omega_q
    gm = d.gamma_m
    sig_th = _thermal_drive(d) if d.prescription == "classical" else 0.0

    x = np.empty(n_rec + 1)
    p = np.empty(n_rec + 1)
    xv, pv = float(initial[0]), float(initial[1])
    x[0], p[0] = xv, pv
    k = 0
    for j in range(n_rec):
        for _ in range(substeps):
            dx = h * wq * pv + sqrt2a * h1s[k] * dw[k]
            dp = h * (-w2q * xv - gm * pv) + sqrt2a * h2s[k] * dw[k] + sig_th * dwn[k]
            xv += dx
            pv += dp
            k += 1
        x[j + 1], p[j + 1] = xv, pv

    dw_rec = dw.reshape(n_rec + 1, substeps).sum(axis=1)
    t = dt * np.arange(n_rec + 1)
    y = a * x + dw_rec / (math.sqrt(2.0) * dt)
    return Trajectory(t=t, x=x, p=p, y=y, dt=dt, model=d.model,
                      prescription=d.prescription, noise=noise)


def exact_solution_oracle(d: DerivedParams, moments: MomentTrajectory, initial,
                          noise: NoisePath, dt: float, t_obs: float) -> np.ndarray:
    """Conditional mean displacement from the closed-form solution.

    Evaluates the free, measurement-driven and thermal-driven parts by
    trapezoidal quadrature of the response kernels against the same
    discrete increments used by `simulate`.  Classical prescription only
    (the quantum one has no explicit thermal part; pass a quantum
    configuration and the thermal term is simply absent).
    """
    n_rec = int(round(t_obs / dt))
    if abs(noise.dt - dt) > 1e-12 * dt:
        raise ValueError("oracle expects noise sampled at the record step")
    s = dt * np.arange(n_rec + 1)
    h1s, h2s = moments.interp_h12(s)

    wmc = d.omega_mc
    gm = d.gamma_m
    a = d.record_coupling
    u = h1s
    v = (d.omega_q / wmc) * h2s + (gm / (2.0 * wmc)) * h1s
    egs = np.exp(0.5 * gm * s)
    cos_s = np.cos(wmc * s)
    sin_s = np.sin(wmc * s)

    g_a = egs * (u * cos_s - v * sin_s)
    g_b = egs * (u * sin_s + v * cos_s)
    dw = noise.dw[:n_rec]
    trap_a = 0.5 * (g_a[:-1] + g_a[1:]) * dw
    trap_b = 0.5 * (g_b[:-1] + g_b[1:]) * dw
    cum_a = np.concatenate([[0.0], np.cumsum(trap_a)])
    cum_b = np.concatenate([[0.0], np.cumsum(trap_b)])
    xm = math.sqrt(2.0) * a * (cos_s * cum_a + sin_s * cum_b)

    x0, p0 = float(initial[0]), float(initial[1])
    xfree = x0 * cos_s + ((d.omega_q / wmc) * p0 + (gm / (2.0 * wmc)) * x0) * sin_s

    xth = 0.0
    if d.prescription == "classical":
        sig = math.sqrt(2.0 * d.omega_q * d.omega_m * gm * d.coth_m) / wmc
        g_c = egs * cos_s
        g_d = egs * sin_s
        dwn = noise.dw_n[:n_rec]
        cum_c = np.concatenate([[0.0], np.cumsum(0.5 * (g_c[:-1] + g_c[1:]) * dwn)])
        cum_d = np.concatenate([[0.0], np.cumsum(0.5 * (g_d[:-1] + g_d[1:]) * dwn)])
        xth = sig * (sin_s * cum_c - cos_s * cum_d)

    return np.exp(-0.5 * gm * s) * (xfree + xm + xth)


def _simulate_batch_records(d: DerivedParams, h1s, h2s, dw, dwn, dt, substeps):
    """Vectorized Euler-Maruyama over a batch; returns records (B, n+1)."""
    n_sim = dw.shape[1]
    n_rec = n_sim // substeps - 1
    h = dt / substeps
    a = d.record_coupling
    sqrt2a = math.sqrt(2.0) * a
    wq = d.omega_q
    w2q = d.omega_m ** 2 / d.omega_q
    gm = d.gamma_m
    sig_th = _thermal_drive(d) if d.prescription == "classical" else 0.0

    nb = dw.shape[0]
    x = np.zeros(nb)
    p = np.zeros(nb)
    xrec = np.empty((nb, n_rec + 1))
    xrec[:, 0] = x
    k = 0
    for j in range(n_rec):
        for _ in range(substeps):
            dx = (h * wq) * p + (sqrt2a * h1s[k]) * dw[:, k]
            dp = (-h * w2q) * x + (-h * gm) * p + (sqrt2a * h2s[k]) * dw[:, k] \
                + sig_th * dwn[:, k]
            x = x + dx
            p = p + dp
            k += 1
        xrec[:, j + 1] = x
    dw_rec = dw.reshape(nb, n_rec + 1, substeps).sum(axis=2)
    return a * xrec + dw_rec / (math.sqrt(2.0) * dt)


def _batch_noise(master_seed, stream_lo, stream_hi, n_sim, h):
    scale = math.sqrt(h)
    nb = stream_hi - stream_lo
    dw = np.empty((nb, n_sim))
    dwn = np.empty((nb, n_sim))
    for i, stream in enumerate(range(stream_lo, stream_hi)):
        key = np.array([master_seed, stream], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        dw[i] = scale * rng.standard_normal(n_sim)
        dwn[i] = scale * rng.standard_normal(n_sim)
    return dw, dwn


def ensemble_fold(d: DerivedParams, moments: MomentTrajectory, master_seed: int,
                  n_members: int, dt: float, t_obs: float, fold,
                  substeps: int = 1, batch_size: int = 2000,
                  initial=(0.0, 0.0)):
    """Stream the ensemble through ``fold(stream_lo, y_batch)``.

    Batches are generated in deterministic stream order (member i always
    uses Philox stream i), so any order-independent fold gives identical
    results for every batch size.  Use this instead of
    `generate_ensemble` when the full record matrix would not fit in
    memory.
    """
    _check_tags(d, moments)
    if initial != (0.0, 0.0):
        raise ValueError("batched generation supports the default zero initial mean")
    n_rec = int(round(t_obs / dt))
    n_sim = (n_rec + 1) * substeps
    h = dt / substeps
    s = h * (np.arange(n_sim) + 0.5)
    h1s, h2s = moments.interp_h12(s)
    for lo in range(0, n_members, batch_size):
        hi = min(lo + batch_size, n_members)
        dw, dwn = _batch_noise(master_seed, lo, hi, n_sim, h)
        y = _simulate_batch_records(d, h1s, h2s, dw, dwn, dt, substeps)
        fold(lo, y)


def generate_ensemble(d: DerivedParams, moments: MomentTrajectory,
                      master_seed: int, n_members: int, dt: float,
                      t_obs: float, substeps: int = 1,
                      batch_size: int = 2000, initial=(0.0, 0.0)) -> Ensemble:
    """Generate N independent records from split noise streams."""
    if n_members < 1:
        raise ValueError("need at least one member")
    n_rec = int(round(t_obs / dt))
    out = np.empty((n_members, n_rec + 1))

    def fold(lo, y):
        out[lo:lo + y.shape[0]] = y

    ensemble_fold(d, moments, master_seed, n_members, dt, t_obs, fold,
                  substeps=substeps, batch_size=batch_size, initial=initial)
    return Ensemble(params_hash=params_digest(d.params), master_seed=master_seed,
                    n_members=n_members, dt=dt, n_samples=n_rec + 1, y=out,
                    model=d.model, prescription=d.prescription)
