"""Full-covariance discrimination between the two gravity models.

The record vector Y = (y(t_1) ... y(t_n)) is zero-mean Gaussian under
both models; its covariance assembles the back-action, thermal and
displacement/shot cross terms on top of the white floor 1/(2 dt).  The
back-action block is built through the separable basis of `covkernel`
(O(n^2) after O(n) cumulative integrals); a direct quadrature builder
is kept as an independent oracle for tests.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .backend import njit, prange, NUMBA_ENABLED
from .params import DerivedParams
from .moments import MomentTrajectory
from .trajectory import params_digest
from .covkernel import (MeasurementBasis, weight_vectors, measurement_prefactor,
                        corr_th_pairs, corr_xdw_pairs)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class CovarianceModel:
    """Record covariance with its triangular factor."""

    model: str
    prescription: str
    t: np.ndarray
    dt: float
    sigma: np.ndarray
    chol: np.ndarray
    logdet: float
    params_hash: str
    key: str

    @property
    def n(self) -> int:
        return len(self.t)

    def save(self, path):
        np.savez_compressed(path, sigma=self.sigma, chol=self.chol, t=self.t,
                            meta=json.dumps({
                                "model": self.model, "prescription": self.prescription,
                                "dt": self.dt, "logdet": self.logdet,
                                "params_hash": self.params_hash, "key": self.key,
                            }))

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            return cls(model=meta["model"], prescription=meta["prescription"],
                       t=z["t"], dt=meta["dt"], sigma=z["sigma"], chol=z["chol"],
                       logdet=meta["logdet"], params_hash=meta["params_hash"],
                       key=meta["key"])


@njit(cache=True, parallel=True)
def _assemble_backaction(cvec, j_at_k, efac, pref, out):
    """Lower triangle of the back-action block via the 4x4 bilinear form."""
    n = cvec.shape[1]
    for j in prange(n):
        for k in range(j + 1):
            acc = 0.0
            for a in range(4):
                row = 0.0
                for b in range(4):
                    row += j_at_k[k, a, b] * cvec[b, k]
                acc += cvec[a, j] * row
            out[j, k] = pref * efac[j] * efac[k] * acc


def _assemble_backaction_numpy(cvec, j_at_k, efac, pref, out):
    n = cvec.shape[1]
    for j in range(n):
        tmp = np.einsum("a,kab->kb", cvec[:, j], j_at_k[:j + 1])
        out[j, :j + 1] = pref * efac[j] * efac[:j + 1] \
            * np.einsum("kb,bk->k", tmp, cvec[:, :j + 1])


def covariance_key(d: DerivedParams, moments: MomentTrajectory, n: int,
                   dt: float, h2_coeff: float, equal_time_cross: bool,
                   phase_inside: bool) -> str:
    payload = json.dumps({
        "params": params_digest(d.params),
        "h0": [moments.h1[0], moments.h2[0], moments.h3[0]],
        "moments_dt": moments.dt, "n": n, "dt": dt,
        "h2_coeff": h2_coeff, "equal_time_cross": equal_time_cross,
        "phase_inside": phase_inside,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def build_covariance(d: DerivedParams, moments: MomentTrajectory, n: int,
                     dt: float, h2_coeff: float = 1.0,
                     equal_time_cross: bool = False,
                     phase_inside: bool = False) -> CovarianceModel:
    """Assemble and factorize the n x n record covariance on t_j = j dt.

    The quantum prescription drops the explicit thermal block (its
    effect lives in the quantum-prescription moments).  The
    displacement/shot cross term is omitted on the diagonal by default
    to match the sampled record, whose shot increment is independent of
    the simultaneous displacement.
    """
    t = dt * np.arange(1, n + 1)
    if moments.t[-1] < t[-1] - 1e-9:
        raise ValueError("moment trajectory does not cover the covariance grid")
    basis = MeasurementBasis(d, moments)
    cvec = weight_vectors(d, t, h2_coeff, phase_inside)
    j_at_k = np.ascontiguousarray(basis.j_at(t).transpose(2, 0, 1))
    efac = np.exp(-0.5 * d.gamma_m * t)
    pref = measurement_prefactor(d)
    sigma = np.zeros((n, n))
    if NUMBA_ENABLED:
        _assemble_backaction(cvec, j_at_k, efac, pref, sigma)
    else:
        _assemble_backaction_numpy(cvec, j_at_k, efac, pref, sigma)
    il = np.tril_indices(n, -1)
    sigma.T[il] = sigma[il]

    tj = t[:, None]
    tk = t[None, :]
    if d.prescription == "classical":
        sigma += corr_th_pairs(d, tj, tk)
    sigma += corr_xdw_pairs(d, basis, tj, tk, equal_time=equal_time_cross)
    sigma[np.diag_indices(n)] += 1.0 / (2.0 * dt)
    sigma = 0.5 * (sigma + sigma.T)

    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        emin = float(np.linalg.eigvalsh(sigma).min())
        raise RuntimeError(
            f"covariance not positive definite (min eigenvalue {emin:.3e}); "
            "check the moment trajectory resolution") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    key = covariance_key(d, moments, n, dt, h2_coeff, equal_time_cross, phase_inside)
    return CovarianceModel(model=d.model, prescription=d.prescription, t=t,
                           dt=dt, sigma=sigma, chol=chol, logdet=logdet,
                           params_hash=params_digest(d.params), key=key)


def build_covariance_direct(d: DerivedParams, moments: MomentTrajectory, n: int,
                            dt: float, h2_coeff: float = 1.0,
                            equal_time_cross: bool = False,
                            phase_inside: bool = False) -> np.ndarray:
    """Independent O(n^3) quadrature of the same covariance (test oracle).

    Evaluates the back-action integrand directly on the moment grid for
    every entry instead of going through the separable expansion.
    """
    t = dt * np.arange(1, n + 1)
    s = moments.t
    h1, h2 = moments.h1, moments.h2
    wmc = d.omega_mc
    phi_eff = wmc * d.phi if phase_inside else d.phi
    gm = d.gamma_m
    pref = measurement_prefactor(d)

    def bracket(tt):
        return ((d.omega_m / wmc) * h1 * np.cos(wmc * (s - tt) - phi_eff)
                - h2_coeff * (d.omega_q / wmc) * h2 * np.sin(wmc * (s - tt)))

    sigma = np.zeros((n, n))
    brk = [bracket(tt) for tt in t]
    egs = np.exp(gm * s)
    for j in range(n):
        for k in range(j + 1):
            mask = s <= t[k] + 1e-12
            sm = s[mask]
            f = egs[mask] * brk[j][mask] * brk[k][mask]
            val = np.trapezoid(f, sm) * math.exp(-0.5 * gm * (t[j] + t[k]))
            sigma[j, k] = sigma[k, j] = pref * val

    tj = t[:, None]
    tk = t[None, :]
    if d.prescription == "classical":
        sigma += corr_th_pairs(d, tj, tk)
    basis = MeasurementBasis(d, moments)
    sigma += corr_xdw_pairs(d, basis, tj, tk, equal_time=equal_time_cross)
    sigma[np.diag_indices(n)] += 1.0 / (2.0 * dt)
    return 0.5 * (sigma + sigma.T)


# ---------------------------------------------------------------------------
# Gaussian machinery
# ---------------------------------------------------------------------------

def record_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; (seed, stream) fully determines the draws."""
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_gaussian(cov: CovarianceModel, rng: np.random.Generator,
                    size: int = 1) -> np.ndarray:
    """Draw `size` record vectors Y = L xi; returns (size, n)."""
    xi = rng.standard_normal((cov.n, size))
    return (cov.chol @ xi).T


def log_density(cov: CovarianceModel, y) -> np.ndarray | float:
    """Gaussian log density of record vectors (standard normalization)."""
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    ys = np.atleast_2d(y)
    w = solve_triangular(cov.chol, ys.T, lower=True, check_finite=False)
    q = np.einsum("ij,ij->j", w, w)
    out = -0.5 * (q + cov.n * LOG_2PI + cov.logdet)
    return float(out[0]) if single else out


def llr(y, cov_sn: CovarianceModel, cov_qg: CovarianceModel,
        mode: str = "ratio"):
    """Model-comparison statistic from one or more record vectors.

    The default is the quotient of the two log densities; mode
    "difference" gives the usual log density difference for sensitivity
    studies (not the default decision variable).
    """
    ls = log_density(cov_sn, y)
    lq = log_density(cov_qg, y)
    if mode == "ratio":
        if np.any(np.asarray(lq) == 0.0):
            raise ZeroDivisionError("log density under the qg model is zero")
        return ls / lq
    if mode == "difference":
        return ls - lq
    raise ValueError(f"unknown mode {mode!r}")


def _chol_ratio(cov_num: CovarianceModel, cov_den: CovarianceModel) -> np.ndarray:
    """L_num^{-1} L_den, the whitening mismatch matrix."""
    return solve_triangular(cov_num.chol, cov_den.chol, lower=True,
                            check_finite=False)


def mc_llr_samples(cov_sn: CovarianceModel, cov_qg: CovarianceModel,
                   m_datasets: int, seed: int, data_model: str,
                   mode: str = "ratio", chunk: int = 4096) -> np.ndarray:
    """Monte-Carlo draws of the comparison statistic under one data model.

    Datasets are never materialized: for Y = L_m xi the two quadratic
    forms reduce to |xi|^2 and |(L_i^{-1} L_m) xi|^2.
    """
    n = cov_sn.n
    if cov_qg.n != n or abs(cov_qg.dt - cov_sn.dt) > 1e-12:
        raise ValueError("covariances must share one grid")
    if data_model == "sn":
        mis = _chol_ratio(cov_qg, cov_sn)
        stream = 0
    elif data_model == "qg":
        mis = _chol_ratio(cov_sn, cov_qg)
        stream = 1
    else:
        raise ValueError("data_model must be 'sn' or 'qg'")
    c_sn = cov_sn.n * LOG_2PI + cov_sn.logdet
    c_qg = cov_qg.n * LOG_2PI + cov_qg.logdet
    rng = record_rng(seed, stream)
    out = np.empty(m_datasets)
    done = 0
    while done < m_datasets:
        b = min(chunk, m_datasets - done)
        xi = rng.standard_normal((n, b))
        q_own = np.einsum("ij,ij->j", xi, xi)
        w = mis @ xi
        q_other = np.einsum("ij,ij->j", w, w)
        if data_model == "sn":
            lsn = -0.5 * (q_own + c_sn)
            lqg = -0.5 * (q_other + c_qg)
        else:
            lqg = -0.5 * (q_own + c_qg)
            lsn = -0.5 * (q_other + c_sn)
        if mode == "ratio":
            out[done:done + b] = lsn / lqg
        else:
            out[done:done + b] = lsn - lqg
        done += b
    return out


# ---------------------------------------------------------------------------
# Balanced-threshold error rates
# ---------------------------------------------------------------------------

@dataclass
class ErrorReport:
    """Balanced decision point between the two statistic distributions."""

    n_avg: int
    n_decisions: int
    threshold: float
    false_alarm: float
    false_dismissal: float
    f_empirical: float
    d_empirical: float
    f_wilson: tuple
    d_wilson: tuple
    bandwidth_sn: float
    bandwidth_qg: float
    seed: int

    def as_dict(self) -> dict:
        return {
            "n_avg": self.n_avg, "n_decisions": self.n_decisions,
            "threshold": self.threshold, "false_alarm": self.false_alarm,
            "false_dismissal": self.false_dismissal,
            "f_empirical": self.f_empirical, "d_empirical": self.d_empirical,
            "f_wilson_low": self.f_wilson[0], "f_wilson_high": self.f_wilson[1],
            "d_wilson_low": self.d_wilson[0], "d_wilson_high": self.d_wilson[1],
            "bandwidth_sn": self.bandwidth_sn, "bandwidth_qg": self.bandwidth_qg,
            "seed": self.seed,
        }


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple:
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, center - half), min(1.0, center + half))


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x)
    n = len(x)
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    scale = min(sd, iqr / 1.349) if iqr > 0 else sd
    if scale <= 0:
        scale = max(abs(float(np.mean(x))), 1e-12)
    return 0.9 * scale * n ** (-0.2)


def _kde_cdf(x_eval, samples, bw):
    from scipy.special import ndtr
    return float(np.mean(ndtr((x_eval - samples) / bw)))


def group_average(z: np.ndarray, n_avg: int) -> np.ndarray:
    m = (len(z) // n_avg) * n_avg
    return z[:m].reshape(-1, n_avg).mean(axis=1)


def balanced_threshold(z_sn: np.ndarray, z_qg: np.ndarray,
                       bandwidth_scale: float = 1.0):
    """Threshold where the two smoothed error rates cross.

    The sn model is selected for statistic values below the threshold
    (its distribution sits lower).  Returns (rho, f, d, bw_sn, bw_qg)
    with the rates from the kernel-smoothed distribution functions.
    """
    bw_sn = silverman_bandwidth(z_sn) * bandwidth_scale
    bw_qg = silverman_bandwidth(z_qg) * bandwidth_scale
    lo = min(z_sn.min(), z_qg.min()) - 3 * max(bw_sn, bw_qg)
    hi = max(z_sn.max(), z_qg.max()) + 3 * max(bw_sn, bw_qg)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        f = _kde_cdf(mid, z_qg, bw_qg)
        dd = 1.0 - _kde_cdf(mid, z_sn, bw_sn)
        if f < dd:
            lo = mid
        else:
            hi = mid
    rho = 0.5 * (lo + hi)
    return (rho, _kde_cdf(rho, z_qg, bw_qg), 1.0 - _kde_cdf(rho, z_sn, bw_sn),
            bw_sn, bw_qg)


def mc_error_rates(cov_sn: CovarianceModel, cov_qg: CovarianceModel,
                   n_avg: int, m_datasets: int, seed: int,
                   mode: str = "ratio",
                   z_cache: tuple | None = None) -> ErrorReport:
    """Balanced false-alarm/false-dismissal rates by Monte Carlo.

    Draws `m_datasets` statistics per model, averages disjoint groups of
    `n_avg`, smooths both distributions (Silverman kernel bandwidth) and
    locates the balanced threshold by bisection.  Pass `z_cache`
    (z_sn, z_qg) to reuse base draws across n_avg values.
    """
    if m_datasets < 1000:
        raise ValueError("need at least 1000 datasets per model")
    if z_cache is None:
        z_sn = mc_llr_samples(cov_sn, cov_qg, m_datasets, seed, "sn", mode)
        z_qg = mc_llr_samples(cov_sn, cov_qg, m_datasets, seed, "qg", mode)
    else:
        z_sn, z_qg = z_cache
        if len(z_sn) < m_datasets or len(z_qg) < m_datasets:
            raise ValueError("z_cache smaller than m_datasets")
        z_sn = z_sn[:m_datasets]
        z_qg = z_qg[:m_datasets]
    zb_sn = group_average(z_sn, n_avg)
    zb_qg = group_average(z_qg, n_avg)
    rho, f, dd, bw_sn, bw_qg = balanced_threshold(zb_sn, zb_qg)
    k_f = int(np.sum(zb_qg < rho))
    k_d = int(np.sum(zb_sn > rho))
    nd = len(zb_sn)
    return ErrorReport(
        n_avg=n_avg, n_decisions=nd, threshold=rho, false_alarm=f,
        false_dismissal=dd, f_empirical=k_f / nd, d_empirical=k_d / nd,
        f_wilson=wilson_interval(k_f, nd), d_wilson=wilson_interval(k_d, nd),
        bandwidth_sn=bw_sn, bandwidth_qg=bw_qg, seed=seed)


def naive_repetition_bound(cov: CovarianceModel | None = None,
                           significance: float = 3.0,
                           accuracy: float = 0.1) -> dict:
    """Repetitions needed to pin every covariance entry directly.

    Fourth moments factor into pairs for Gaussian records, so the
    entrywise estimator variance is S_jj S_kk + S_jk^2 and the
    mean-to-spread ratio is bounded by 1/sqrt(2); at that bound,
    requiring `significance` sigmas inside a relative `accuracy` gives
    N = ceil(2 (significance/accuracy)^2).
    """
    n_min = math.ceil(2.0 * (significance / accuracy) ** 2)
    out = {"n_min": int(n_min), "significance": significance, "accuracy": accuracy}
    if cov is not None:
        s = cov.sigma
        dd = np.diag(s)
        ratio = np.abs(s) / np.sqrt(np.outer(dd, dd) + s ** 2)
        out["ratio_max"] = float(ratio.max())
        out["ratio_bound"] = 1.0 / math.sqrt(2.0)
    return out


def squeeze_sweep(d: DerivedParams, levels_db, target: float = 0.01,
                  seed: int = 0, n: int = 800, dt: float = 0.05,
                  m_datasets: int = 20000, n_avg_max: int = 60,
                  min_variance: float = 1e3,
                  theta0: float = math.pi / 2.0) -> list:
    """Repetitions needed per initial squeezing level.

    Each level fixes the small quadrature variance at `min_variance`
    zero-point units and enlarges the other; the balanced error rate is
    driven below `target` by raising the number of averaged datasets.
    Returns a list of dicts (level_db, n_required, rate, threshold).
    """
    from .params import derive
    from .moments import initial_squeezed_thermal, integrate_moments
    results = []
    d_sn = d if d.model == "sn" else derive(d.params.with_model("sn"))
    d_qg = derive(d.params.with_model("qg"))
    for level in levels_db:
        init = initial_squeezed_thermal(level, min_variance=min_variance,
                                        theta0=theta0)
        t_obs = n * dt
        mom_sn = integrate_moments(init, d_sn, t_obs + 2 * dt, dt=dt)
        mom_qg = integrate_moments(init, d_qg, t_obs + 2 * dt, dt=dt)
        cov_sn = build_covariance(d_sn, mom_sn, n, dt)
        cov_qg = build_covariance(d_qg, mom_qg, n, dt)
        z_sn = mc_llr_samples(cov_sn, cov_qg, m_datasets, seed, "sn")
        z_qg = mc_llr_samples(cov_sn, cov_qg, m_datasets, seed, "qg")
        found = None
        for n_avg in range(1, n_avg_max + 1):
            rep = mc_error_rates(cov_sn, cov_qg, n_avg, m_datasets, seed,
                                 z_cache=(z_sn, z_qg))
            if max(rep.false_alarm, rep.false_dismissal) < target:
                found = (n_avg, rep)
                break
        if found is None:
            results.append({"level_db": float(level), "n_required": None,
                            "rate": None, "threshold": None,
                            "note": f"target not reached by n_avg={n_avg_max}"})
        else:
            n_req, rep = found
            results.append({"level_db": float(level), "n_required": int(n_req),
                            "rate": float(max(rep.false_alarm, rep.false_dismissal)),
                            "threshold": float(rep.threshold)})
    return results


# ---------------------------------------------------------------------------
# Covariance cache
# ---------------------------------------------------------------------------

def cache_dir(explicit: str | None = None) -> str | None:
    return explicit if explicit is not None else os.environ.get("CCSN_CACHE_DIR")


def cache_path(key: str, model: str, directory: str) -> str:
    return os.path.join(directory, f"cov_{model}_{key}.npz")


def load_cached(key: str, model: str, directory: str | None):
    if directory is None:
        return None
    path = cache_path(key, model, directory)
    if os.path.exists(path):
        return CovarianceModel.load(path)
    return None


def store_cached(cov: CovarianceModel, directory: str | None):
    if directory is None:
        return None
    os.makedirs(directory, exist_ok=True)
    path = cache_path(cov.key, cov.model, directory)
    cov.save(path)
    return path
