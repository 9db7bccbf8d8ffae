import math

import numpy as np
import pytest

import ccsnlab as cl
from ccsnlab.constants import HBAR, C_LIGHT, TWO_PI


def test_omega_q_value(d100):
    # independent arithmetic: quadrature sum of the two frequency scales
    expected = math.hypot(TWO_PI * 4e-3, TWO_PI * 8.19e-2)
    assert abs(d100.omega_q - expected) < 1e-12 * expected
    assert abs(d100.omega_q - 0.5152) < 5e-4
    assert abs(d100.omega_q / TWO_PI - 0.08200) < 5e-6


def test_qg_model_forces_mechanical_frequency():
    d = cl.derive(cl.table_defaults(model="qg"))
    assert d.omega_q == d.params.omega_m
    assert d.omega_sn_eff == 0.0


def test_quality_factor(d100):
    assert abs(d100.q_m - 1e7) < 1e-4


def test_zero_point_scale_product():
    for power in (1e-9, 1e-7, 1e-5):
        for mass in (0.01, 0.2, 3.0):
            d = cl.derive(cl.table_defaults(power=power, mass=mass))
            sc = d.scaling()
            assert abs(sc.vxx_vac * sc.vpp_vac - HBAR ** 2 / 4.0) \
                < 1e-12 * HBAR ** 2


def test_coupling_strength_dual_path(d100):
    # dimensional route, written out from first principles
    p = d100.params
    omega_0 = TWO_PI * C_LIGHT / p.wavelength
    gamma = math.pi * C_LIGHT / (2.0 * p.cavity_length * p.finesse)
    alpha2 = 4.0 * p.power * omega_0 / (HBAR * p.cavity_length * C_LIGHT) / gamma
    lq2_dim = HBAR * alpha2 / (p.mass * d100.omega_q ** 2)
    # nondimensional route through the derived rate
    lq2_nod = (d100.lambda_star / d100.omega_q) ** 2
    assert abs(lq2_dim - lq2_nod) < 1e-12 * lq2_dim
    assert abs(lq2_dim - d100.lambda_q2) < 1e-12 * lq2_dim


def test_zero_self_gravity_scales_match_mechanical():
    d = cl.derive(cl.table_defaults(omega_sn=0.0))
    sc = d.scaling()
    ref = HBAR / (2.0 * d.params.mass * d.params.omega_m)
    assert sc.vxx_vac == ref


def test_derive_deterministic(d100):
    d2 = cl.derive(cl.table_defaults())
    for k, v in d100.as_dict().items():
        assert d2.as_dict()[k] == v


def test_frequency_ordering():
    for osn in (0.0, 1e-3, 0.5):
        sn = cl.derive(cl.table_defaults(omega_sn=osn))
        qg = cl.derive(cl.table_defaults(omega_sn=osn, model="qg"))
        assert sn.omega_q >= qg.omega_q
        if osn == 0.0:
            assert sn.omega_q == qg.omega_q
        else:
            assert sn.omega_q > qg.omega_q


def test_kappa_limits_and_monotonicity():
    assert cl.derive(cl.table_defaults(power=0.0)).kappa == 1.0
    prev = 1.0
    for power in np.logspace(-12, -4, 12):
        k = cl.derive(cl.table_defaults(power=float(power))).kappa
        assert k >= prev
        prev = k
    assert prev > 1.0


def test_rejects_overdamped():
    with pytest.raises(ValueError, match="overdamped"):
        cl.table_defaults(gamma_m=TWO_PI * 1e-2, omega_m=TWO_PI * 4e-3)


@pytest.mark.parametrize("field", ["mass", "temperature", "cavity_length",
                                   "wavelength", "finesse"])
def test_rejects_nonpositive(field):
    with pytest.raises(ValueError, match=field):
        cl.table_defaults(**{field: 0.0})


def test_rejects_bad_tags():
    with pytest.raises(ValueError):
        cl.table_defaults(model="newton")
    with pytest.raises(ValueError):
        cl.table_defaults(prescription="warm")


CONFIG = """
mass_kg = 0.2
omega_m_hz = 4e-3
gamma_m_hz = 4e-10
omega_sn_hz = 8.19e-2
temperature_k = 1e-3
cavity_length_m = 2
wavelength_nm = 1064
finesse = 300
power_nw = 100
prescription = classical
model = sn
"""


def test_config_parse_units():
    p = cl.parse_config_text(CONFIG)
    assert abs(p.omega_m - TWO_PI * 4e-3) < 1e-18
    assert abs(p.wavelength - 1064e-9) < 1e-24
    assert abs(p.power - 100e-9) < 1e-22
    assert p.model == "sn"


def test_config_missing_key_named():
    broken = CONFIG.replace("mass_kg = 0.2\n", "")
    with pytest.raises(cl.ConfigError, match="mass_kg"):
        cl.parse_config_text(broken)


def test_config_bad_line_numbered():
    with pytest.raises(cl.ConfigError, match=":03|:3"):
        cl.parse_config_text("\n\nnot a key value line\n" + CONFIG)


def test_config_gamma_override():
    p = cl.parse_config_text(CONFIG + "gamma_cav_hz = 1e5\n")
    d = cl.derive(p)
    assert abs(d.gamma_cav - TWO_PI * 1e5) < 1e-6
    # default convention when the override is absent
    d0 = cl.derive(cl.parse_config_text(CONFIG))
    assert abs(d0.gamma_cav - math.pi * C_LIGHT / (2 * 2.0 * 300.0)) < 1e-6
