"""Oracle tests for the log-scale special functions.

The reference oracle is mpmath at 50 decimal digits, entirely independent
of the scipy-backed implementation under test.  Frozen constants below were
produced by the closed forms stated next to them.
"""

import mpmath as mp
import numpy as np
import pytest

from skewbfa.specfun import (
    bessel_eval,
    digamma,
    dlog_bessel_k_dorder,
    log_bessel_k,
    log_gamma,
)

mp.mp.dps = 50


def oracle_log_k(order, arg):
    return float(mp.log(mp.besselk(mp.mpf(order), mp.mpf(arg))))


def oracle_dlog_k_dorder(order, arg):
    f = lambda v: mp.log(mp.besselk(v, mp.mpf(arg)))
    return float(mp.diff(f, mp.mpf(order), h=mp.mpf("1e-10")))


# log K_{1/2}(1) = log(sqrt(pi/2) * exp(-1)), closed half-integer form
LOG_K_HALF_AT_1 = -0.7742086473552725
# log K_{3/2}(2) = log(K_{1/2}(2) * (1 + 1/2)), forward recurrence from the half form
LOG_K_3HALF_AT_2 = -1.7153171295270808
# digamma values: psi(1) = -euler_gamma, psi(2) = 1 - euler_gamma, psi(1/2) = -euler_gamma - 2 log 2
DIGAMMA_1 = -0.5772156649015329
DIGAMMA_2 = 0.4227843350984671
DIGAMMA_HALF = -1.9635100260214235


class TestLogBesselK:
    def test_half_integer_closed_form_at_1(self):
        assert log_bessel_k(0.5, 1.0) == pytest.approx(LOG_K_HALF_AT_1, rel=1e-12)
        closed = np.log(np.sqrt(np.pi / 2.0)) - 1.0
        assert log_bessel_k(0.5, 1.0) == pytest.approx(closed, rel=1e-12)

    def test_recurrence_value_at_2(self):
        assert log_bessel_k(1.5, 2.0) == pytest.approx(LOG_K_3HALF_AT_2, rel=1e-12)

    @pytest.mark.parametrize("order", [0.0, 0.3, 0.5, 1.0, 2.5, 20.0, 137.5, 500.0])
    @pytest.mark.parametrize("arg", [1e-6, 1e-3, 0.01, 0.5, 1.0, 2.0, 10.0, 100.0, 1e4, 1e6])
    def test_against_mpmath_oracle(self, order, arg):
        ref = oracle_log_k(order, arg)
        assert log_bessel_k(order, arg) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("order", [0.5, 1.0, 3.7, 42.0, 250.3, 500.0])
    @pytest.mark.parametrize("arg", [1e-5, 0.1, 1.0, 30.0, 1e3])
    def test_order_symmetry(self, order, arg):
        plus = log_bessel_k(order, arg)
        minus = log_bessel_k(-order, arg)
        assert abs(plus - minus) <= 1e-12 * abs(plus)

    @pytest.mark.parametrize("order", [0.3, 1.0, 1.7, 5.5, 12.0, 19.0])
    @pytest.mark.parametrize("arg", [0.01, 0.5, 1.0, 35.0, 1000.0])
    def test_three_term_recurrence(self, order, arg):
        # K_{v+1}(x) = K_{v-1}(x) + (2v/x) K_v(x), checked in log space
        lhs = log_bessel_k(order + 1.0, arg)
        rhs = np.logaddexp(
            log_bessel_k(order - 1.0, arg),
            np.log(2.0 * order / arg) + log_bessel_k(order, arg),
        )
        assert abs(lhs - rhs) <= 1e-9

    @pytest.mark.parametrize("arg", [0.05, 0.7, 1.0, 4.0, 90.0])
    def test_half_integer_family(self, arg):
        base = 0.5 * np.log(np.pi / (2.0 * arg)) - arg
        closed = {
            0.5: base,
            1.5: base + np.log1p(1.0 / arg),
            2.5: base + np.log1p(3.0 / arg + 3.0 / arg**2),
        }
        for order, expected in closed.items():
            assert log_bessel_k(order, arg) == pytest.approx(expected, rel=1e-10)

    def test_array_arg_matches_scalar(self):
        args = np.array([1e-4, 0.3, 2.0, 55.0, 1e5])
        vec = log_bessel_k(137.5, args)
        scal = np.array([log_bessel_k(137.5, float(a)) for a in args])
        np.testing.assert_allclose(vec, scal, rtol=1e-14)

    def test_array_order_matches_scalar(self):
        orders = np.array([-3.5, 0.0, 0.5, 7.0, 160.2])
        vec = log_bessel_k(orders, 2.5)
        scal = np.array([log_bessel_k(float(v), 2.5) for v in orders])
        np.testing.assert_allclose(vec, scal, rtol=1e-14)

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            log_bessel_k(1.0, bad)

    def test_nonfinite_order_rejected(self):
        with pytest.raises(ValueError):
            log_bessel_k(np.nan, 1.0)

    def test_bessel_eval_record(self):
        ev = bessel_eval(-2.0, 3.0)
        assert ev.order == -2.0 and ev.arg == 3.0
        assert ev.log_value == pytest.approx(log_bessel_k(2.0, 3.0), rel=1e-14)
        assert np.isfinite(ev.log_value)


class TestDlogBesselKDorder:
    @pytest.mark.parametrize("arg", [0.01, 1.0, 10.0, 500.0])
    def test_zero_order_is_zero(self, arg):
        assert dlog_bessel_k_dorder(0.0, arg) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("order,arg", [(0.5, 1.0), (2.0, 0.3), (7.5, 12.0), (80.0, 5.0), (200.0, 40.0)])
    def test_against_mpmath_derivative(self, order, arg):
        ref = oracle_dlog_k_dorder(order, arg)
        assert dlog_bessel_k_dorder(order, arg) == pytest.approx(ref, abs=1e-7)

    def test_step_halved_fd_oracle(self):
        # Richardson-extrapolated central difference of the mpmath log K
        order, arg = 0.5, 1.0
        h = 1e-4
        d_h = (oracle_log_k(order + h, arg) - oracle_log_k(order - h, arg)) / (2 * h)
        d_h2 = (oracle_log_k(order + h / 2, arg) - oracle_log_k(order - h / 2, arg)) / h
        oracle = (4.0 * d_h2 - d_h) / 3.0
        assert dlog_bessel_k_dorder(order, arg) == pytest.approx(oracle, abs=1e-7)

    @pytest.mark.parametrize("order,arg", [(0.5, 1.0), (3.0, 2.0), (25.0, 0.7)])
    def test_odd_in_order(self, order, arg):
        plus = dlog_bessel_k_dorder(order, arg)
        minus = dlog_bessel_k_dorder(-order, arg)
        assert minus == pytest.approx(-plus, rel=1e-9, abs=1e-12)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            dlog_bessel_k_dorder(1.0, -2.0)


class TestDigamma:
    def test_frozen_values(self):
        assert digamma(1.0) == pytest.approx(DIGAMMA_1, rel=1e-12)
        assert digamma(2.0) == pytest.approx(DIGAMMA_2, rel=1e-12)
        assert digamma(0.5) == pytest.approx(DIGAMMA_HALF, rel=1e-12)

    @pytest.mark.parametrize("x", list(np.geomspace(0.1, 100.0, 17)))
    def test_recurrence(self, x):
        assert digamma(x + 1.0) - digamma(x) == pytest.approx(1.0 / x, abs=1e-12)

    @pytest.mark.parametrize("x", [0.17, 1.0, 3.3, 42.0])
    def test_against_mpmath(self, x):
        assert digamma(x) == pytest.approx(float(mp.digamma(mp.mpf(x))), rel=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -3.0, np.nan])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            digamma(bad)


class TestLogGamma:
    @pytest.mark.parametrize("x", [0.3, 1.0, 2.0, 11.5, 250.0])
    def test_against_mpmath(self, x):
        assert log_gamma(x) == pytest.approx(float(mp.log(mp.gamma(mp.mpf(x)))), rel=1e-13, abs=1e-13)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            log_gamma(-1.0)
