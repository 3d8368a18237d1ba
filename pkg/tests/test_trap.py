import math

import numpy as np
import pytest

from rydsim.trap import (BlockadeModel, ConvergenceError, GaussianCloud,
                         TrapSpec, adiabatic_temperature, average_blockade,
                         blockade_point, localization_sigmas)


# ---------------------------------------------------------------------------
# adiabatic cooling
# ---------------------------------------------------------------------------

def test_adiabatic_cooling_rb():
    # 15.4 uK at 1.1 mK ramped to 0.073 mK -> about 4.0 uK
    assert adiabatic_temperature(15.4, 1.1, 0.073) == pytest.approx(3.97, abs=0.01)


def test_adiabatic_cooling_cs():
    assert adiabatic_temperature(17.3, 2.0, 0.136) == pytest.approx(4.51, abs=0.01)


def test_adiabatic_identity():
    assert adiabatic_temperature(12.3, 0.8, 0.8) == 12.3


def test_adiabatic_rejects_bad_depths():
    with pytest.raises(ValueError):
        adiabatic_temperature(10.0, 0.0, 1.0)


def test_adiabatic_localization_ratio():
    # when T follows the adiabatic law, sigma_f/sigma_i = (U_i/U_f)^(1/4)
    u_i, u_f, t_i = 1.1, 0.073, 15.4
    t_f = adiabatic_temperature(t_i, u_i, u_f)
    si = localization_sigmas(TrapSpec(1.7, 1064.0, u_i, t_i))
    sf = localization_sigmas(TrapSpec(1.7, 1064.0, u_f, t_f))
    expected = (u_i / u_f) ** 0.25
    assert sf[0] / si[0] == pytest.approx(expected, rel=1e-12)
    assert sf[1] / si[1] == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# localization
# ---------------------------------------------------------------------------

def test_localization_rb_initial():
    sr, sz = localization_sigmas(TrapSpec(1.7, 1064.0, 1.1, 15.4))
    assert sr == pytest.approx(0.10, abs=0.005)
    assert sz == pytest.approx(0.71, abs=0.005)


def test_localization_cs_initial():
    sr, sz = localization_sigmas(TrapSpec(1.7, 1064.0, 2.0, 17.3))
    assert sr == pytest.approx(0.079, abs=0.0005)
    assert sz == pytest.approx(0.56, abs=0.005)


def test_localization_cs_final():
    sr, sz = localization_sigmas(TrapSpec(1.7, 1064.0, 0.136, 4.3))
    assert sr == pytest.approx(0.15, abs=0.005)
    assert sz == pytest.approx(1.1, abs=0.05)


def test_localization_rb_final():
    sr, sz = localization_sigmas(TrapSpec(1.7, 1064.0, 0.073, 3.2))
    assert sr == pytest.approx(0.18, abs=0.005)
    assert sz == pytest.approx(1.3, abs=0.05)


def test_localization_vanishes_at_zero_temperature():
    sr, sz = localization_sigmas(TrapSpec(1.7, 1064.0, 1.1, 1e-12))
    assert sr < 1e-6 and sz < 1e-6


def test_localization_warns_outside_harmonic_regime():
    with pytest.warns(UserWarning):
        localization_sigmas(TrapSpec(1.7, 1064.0, 0.010, 20.0))


# ---------------------------------------------------------------------------
# point blockade
# ---------------------------------------------------------------------------

def test_blockade_reference_exact():
    m = BlockadeModel.from_reference(12.01, 5.85)
    assert blockade_point(m, 5.85) == 12.01


def test_blockade_c6_value():
    m = BlockadeModel.from_reference(12.01, 5.85)
    assert m.c6_mhz_um6 == pytest.approx(12.01 * 5.85 ** 6, rel=1e-14)
    assert m.c6_mhz_um6 == pytest.approx(4.814e5, rel=1e-3)


def test_blockade_scaling_law():
    m = BlockadeModel.from_reference(12.01, 5.85)
    assert blockade_point(m, 2 * 5.85) == pytest.approx(12.01 / 64.0, rel=1e-14)


# ---------------------------------------------------------------------------
# tweezer-averaged blockade
# ---------------------------------------------------------------------------

def test_average_blockade_delta_limit():
    m = BlockadeModel.from_reference(12.01, 5.85)
    a = GaussianCloud((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    b = GaussianCloud((5.85, 0.0, 0.0), (0.0, 0.0, 0.0))
    for method in ("mc", "quadrature"):
        est = average_blockade(a, b, m, method=method, samples=1000)
        assert est.mean_mhz == pytest.approx(12.01, rel=1e-12)


def test_average_blockade_reduces_to_point_at_tiny_spread():
    m = BlockadeModel.from_reference(12.01, 5.85)
    s = 5.85e-3 * 0.9
    a = GaussianCloud((0.0, 0.0, 0.0), (s, s, s))
    b = GaussianCloud((5.85, 0.0, 0.0), (s, s, s))
    est = average_blockade(a, b, m, method="quadrature")
    assert est.mean_mhz == pytest.approx(12.01, rel=1e-3)


def test_average_blockade_estimators_agree():
    m = BlockadeModel.from_reference(12.01, 5.85)
    a = GaussianCloud((0.0, 0.0, 0.0), (0.18, 0.18, 1.3))
    b = GaussianCloud((5.85, 0.0, 0.0), (0.15, 0.15, 1.1))
    q = average_blockade(a, b, m, method="quadrature")
    mc = average_blockade(a, b, m, method="mc", samples=200_000, seed=9)
    assert abs(q.mean_mhz - mc.mean_mhz) <= 3.0 * mc.stderr_mhz


def test_average_blockade_exceeds_point_at_published_spreads():
    # tweezer-average convention of the source analysis: the axial spread
    # lies along the interatomic axis, so rare close encounters dominate
    m = BlockadeModel.from_reference(12.01, 5.85)
    a = GaussianCloud((0.0, 0.0, 0.0), (1.3, 0.18, 0.18))
    b = GaussianCloud((5.85, 0.0, 0.0), (1.1, 0.15, 0.15))
    est = average_blockade(a, b, m, method="mc", samples=200_000, seed=2)
    assert est.mean_mhz > blockade_point(m, 5.85)


def test_average_blockade_monotone_in_separation():
    m = BlockadeModel.from_reference(12.01, 5.85)
    means = []
    for d in (4.5, 5.0, 5.5, 6.0, 6.5, 7.0):
        a = GaussianCloud((0.0, 0.0, 0.0), (0.15, 0.15, 0.9))
        b = GaussianCloud((d, 0.0, 0.0), (0.15, 0.15, 0.9))
        means.append(average_blockade(a, b, m, method="quadrature").mean_mhz)
    assert all(m1 >= m2 for m1, m2 in zip(means, means[1:]))


def test_average_blockade_convergence_error():
    m = BlockadeModel.from_reference(12.01, 5.85)
    a = GaussianCloud((0.0, 0.0, 0.0), (1.5, 1.5, 1.5))
    b = GaussianCloud((5.85, 0.0, 0.0), (1.5, 1.5, 1.5))
    with pytest.raises(ConvergenceError):
        average_blockade(a, b, m, method="mc", samples=1000, seed=0,
                         rel_tol=1e-6)


def test_trap_spec_validation():
    with pytest.raises(ValueError):
        TrapSpec(0.0, 1064.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        GaussianCloud((0, 0, 0), (-0.1, 0.1, 0.1))
