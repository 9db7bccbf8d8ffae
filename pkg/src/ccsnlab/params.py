"""System configuration and derived quantities.

All downstream modules work in nondimensional units: covariances are
scaled by the ground-state values of the covariance-oscillation mode,
times are in seconds (the rates involved are O(1) rad/s at the default
configuration), and the optical record is scaled so the white
measurement-noise floor is 1/(2*dt) per sample.  Conversion to SI
happens only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .constants import HBAR, KB, C_LIGHT, TWO_PI

PRESCRIPTIONS = ("classical", "quantum")
MODELS = ("sn", "qg")


class ConfigError(ValueError):
    """Raised for malformed configuration input (CLI exit code 2)."""


@dataclass(frozen=True)
class SystemParams:
    """Physical configuration of the measured oscillator.

    Angular frequencies are rad/s; ``omega_sn`` is the self-gravity
    frequency scale and may be zero.  ``gamma_cav`` overrides the
    finesse-derived cavity decay rate when set.
    """

    mass: float                 # kg
    omega_m: float              # rad/s
    gamma_m: float              # rad/s
    omega_sn: float             # rad/s
    temperature: float          # K
    cavity_length: float        # m
    wavelength: float           # m
    finesse: float
    power: float                # W (intracavity)
    prescription: str = "classical"
    model: str = "sn"
    gamma_cav: float | None = None  # rad/s, optional direct override

    def __post_init__(self):
        for name in ("mass", "omega_m", "gamma_m", "temperature",
                     "cavity_length", "wavelength", "finesse"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")
        for name in ("omega_sn", "power"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be nonnegative, got {v!r}")
        if self.gamma_m >= 2.0 * self.omega_m:
            raise ValueError(
                f"overdamped mechanics: gamma_m={self.gamma_m} >= 2*omega_m={2 * self.omega_m}"
            )
        if self.prescription not in PRESCRIPTIONS:
            raise ValueError(f"prescription must be one of {PRESCRIPTIONS}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.gamma_cav is not None and self.gamma_cav <= 0:
            raise ValueError("gamma_cav override must be positive")

    def with_model(self, model: str) -> "SystemParams":
        return replace(self, model=model)

    def with_prescription(self, prescription: str) -> "SystemParams":
        return replace(self, prescription=prescription)


@dataclass(frozen=True)
class ScalingConstants:
    """Zero-point scales of the covariance-oscillation mode."""

    vxx_vac: float   # m^2, hbar/(2 M omega_q)
    vpp_vac: float   # kg^2 m^2 / s^2, hbar M omega_q / 2
    time_scale: float  # s, 1/omega_q

    @property
    def x_zp(self) -> float:
        return math.sqrt(self.vxx_vac)

    @property
    def p_zp(self) -> float:
        return math.sqrt(self.vpp_vac)


@dataclass(frozen=True)
class DerivedParams:
    """All secondary quantities needed by the dynamics and spectra."""

    params: SystemParams
    omega_sn_eff: float   # rad/s, forced to 0 for the qg model
    omega_q: float        # rad/s, covariance oscillation frequency
    omega_mc: float       # rad/s, damped mean-motion frequency
    phi: float            # rad, loss angle, tan(phi) = -gamma_m/(2 omega_mc)
    omega_0: float        # rad/s, optical carrier
    gamma_cav: float      # rad/s, cavity decay
    g_coupling: float     # sqrt(P omega_0/(hbar L c))
    alpha: float          # 2 G / sqrt(gamma_cav)
    lambda_q: float       # dimensionless measurement strength
    lambda_star: float    # rad/s, lambda_q * omega_q
    q_m: float            # omega_m / gamma_m
    q_q: float            # omega_q / gamma_m
    kappa: float          # sqrt(1 + lambda_q^4)
    lambda_th: float      # 4 kB T / (hbar omega_q q_m)

    @property
    def mass(self) -> float:
        return self.params.mass

    @property
    def omega_m(self) -> float:
        return self.params.omega_m

    @property
    def gamma_m(self) -> float:
        return self.params.gamma_m

    @property
    def temperature(self) -> float:
        return self.params.temperature

    @property
    def prescription(self) -> str:
        return self.params.prescription

    @property
    def model(self) -> str:
        return self.params.model

    @property
    def lambda_q2(self) -> float:
        return self.lambda_q ** 2

    @property
    def record_coupling(self) -> float:
        """alpha * x_zp: gain of the mean displacement in the scaled record."""
        return self.lambda_star / math.sqrt(2.0 * self.omega_q)

    @property
    def coth_q(self) -> float:
        return 1.0 / math.tanh(HBAR * self.omega_q / (2.0 * KB * self.temperature))

    @property
    def coth_m(self) -> float:
        return 1.0 / math.tanh(HBAR * self.omega_m / (2.0 * KB * self.temperature))

    def scaling(self) -> ScalingConstants:
        return ScalingConstants(
            vxx_vac=HBAR / (2.0 * self.mass * self.omega_q),
            vpp_vac=HBAR * self.mass * self.omega_q / 2.0,
            time_scale=1.0 / self.omega_q,
        )

    def as_dict(self) -> dict:
        return {
            "omega_sn_eff_rad_s": self.omega_sn_eff,
            "omega_q_rad_s": self.omega_q,
            "omega_q_hz": self.omega_q / TWO_PI,
            "omega_mc_rad_s": self.omega_mc,
            "loss_angle_rad": self.phi,
            "omega_0_rad_s": self.omega_0,
            "gamma_cav_rad_s": self.gamma_cav,
            "g_coupling": self.g_coupling,
            "alpha": self.alpha,
            "lambda_q": self.lambda_q,
            "lambda_q_sq": self.lambda_q2,
            "lambda_star_rad_s": self.lambda_star,
            "q_m": self.q_m,
            "q_q": self.q_q,
            "kappa": self.kappa,
            "lambda_th": self.lambda_th,
            "model": self.model,
            "prescription": self.prescription,
        }


def derive(params: SystemParams) -> DerivedParams:
    """Populate every derived quantity from a validated configuration.

    The finesse-to-decay convention is the half-linewidth one,
    gamma = pi c / (2 L F); pass ``gamma_cav`` in SystemParams to use a
    measured decay rate instead.
    """
    omega_sn_eff = 0.0 if params.model == "qg" else params.omega_sn
    omega_q = math.hypot(params.omega_m, omega_sn_eff)
    wmc2 = params.omega_m ** 2 - params.gamma_m ** 2 / 4.0
    if wmc2 <= 0.0:
        raise ValueError("omega_mc undefined: gamma_m too large")
    omega_mc = math.sqrt(wmc2)
    phi = math.atan(-params.gamma_m / (2.0 * omega_mc))
    omega_0 = TWO_PI * C_LIGHT / params.wavelength
    gamma_cav = params.gamma_cav
    if gamma_cav is None:
        gamma_cav = math.pi * C_LIGHT / (2.0 * params.cavity_length * params.finesse)
    g_coupling = math.sqrt(params.power * omega_0 / (HBAR * params.cavity_length * C_LIGHT))
    alpha = 2.0 * g_coupling / math.sqrt(gamma_cav)
    lambda_q = math.sqrt(HBAR * alpha ** 2 / (params.mass * omega_q ** 2))
    lambda_star = lambda_q * omega_q
    kappa = math.sqrt(1.0 + lambda_q ** 4)
    q_m = params.omega_m / params.gamma_m
    q_q = omega_q / params.gamma_m
    lambda_th = 4.0 * KB * params.temperature / (HBAR * omega_q * q_m)
    return DerivedParams(
        params=params,
        omega_sn_eff=omega_sn_eff,
        omega_q=omega_q,
        omega_mc=omega_mc,
        phi=phi,
        omega_0=omega_0,
        gamma_cav=gamma_cav,
        g_coupling=g_coupling,
        alpha=alpha,
        lambda_q=lambda_q,
        lambda_star=lambda_star,
        q_m=q_m,
        q_q=q_q,
        kappa=kappa,
        lambda_th=lambda_th,
    )


def nondimensionalize(params: SystemParams | DerivedParams) -> ScalingConstants:
    d = params if isinstance(params, DerivedParams) else derive(params)
    return d.scaling()


# ---------------------------------------------------------------------------
# Plain-text configuration files: one ``key = value`` per line, '#' comments.
# Frequencies are ordinary Hz, power is nW, wavelength is nm.
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = (
    "mass_kg", "omega_m_hz", "gamma_m_hz", "omega_sn_hz", "temperature_k",
    "cavity_length_m", "wavelength_nm", "finesse", "power_nw",
    "prescription", "model",
)
_OPTIONAL_KEYS = ("gamma_cav_hz",)


def parse_config_text(text: str, source: str = "<config>") -> SystemParams:
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().lower()
        val = val.strip()
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key not in _REQUIRED_KEYS and key not in _OPTIONAL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = val
        lines[key] = lineno

    missing = [k for k in _REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")

    def num(key: str) -> float:
        try:
            return float(values[key])
        except ValueError:
            raise ConfigError(
                f"{source}:{lines[key]}: {key} must be numeric, got {values[key]!r}"
            ) from None

    gamma_cav = None
    if "gamma_cav_hz" in values:
        gamma_cav = TWO_PI * num("gamma_cav_hz")
    try:
        return SystemParams(
            mass=num("mass_kg"),
            omega_m=TWO_PI * num("omega_m_hz"),
            gamma_m=TWO_PI * num("gamma_m_hz"),
            omega_sn=TWO_PI * num("omega_sn_hz"),
            temperature=num("temperature_k"),
            cavity_length=num("cavity_length_m"),
            wavelength=1e-9 * num("wavelength_nm"),
            finesse=num("finesse"),
            power=1e-9 * num("power_nw"),
            prescription=values["prescription"].lower(),
            model=values["model"].lower(),
            gamma_cav=gamma_cav,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> SystemParams:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def table_defaults(**overrides) -> SystemParams:
    """Benchmark configuration of the 0.2 kg mHz oscillator."""
    base = dict(
        mass=0.2,
        omega_m=TWO_PI * 4e-3,
        gamma_m=TWO_PI * 4e-10,
        omega_sn=TWO_PI * 8.19e-2,
        temperature=1e-3,
        cavity_length=2.0,
        wavelength=1064e-9,
        finesse=300.0,
        power=100e-9,
        prescription="classical",
        model="sn",
    )
    base.update(overrides)
    return SystemParams(**base)
