import math

import numpy as np
import pytest

from twistlab import spin_core as sc
from twistlab.spin_core import (Direction, X_AXIS, Z_AXIS, coherent_state,
                                collective_operator, expectation, ghz_state,
                                husimi_q, oat_evolve, rotate, variance)


def overlap_mod(a, b):
    return abs(np.vdot(a.amplitudes, b.amplitudes))


class TestDirection:
    def test_round_trip_angles(self):
        for xi in (0.3, 1.2, 2.8):
            for theta in (-2.5, 0.0, 0.4, 3.0):
                d = Direction.from_angles(xi, theta)
                assert abs(d.xi - xi) < 1e-12
                assert abs(d.theta - theta) < 1e-12

    def test_unit_norm_enforced(self):
        with pytest.raises(ValueError):
            Direction(1.0, 1.0, 0.0)
        d = Direction.from_vector(1.0, 1.0, 0.0)
        assert abs(np.linalg.norm(d.as_array()) - 1.0) < 1e-12

    def test_stereographic(self):
        assert Direction.from_angles(math.pi / 2, 0.0).stereographic() == pytest.approx(1.0)
        assert Direction(0.0, 0.0, 1.0).stereographic() == 0.0
        assert math.isinf(abs(Direction(0.0, 0.0, -1.0).stereographic()))


class TestCoherentState:
    def test_north_pole(self):
        s = coherent_state(2, 0.0)
        assert np.allclose(s.amplitudes, [1.0, 0.0, 0.0], atol=1e-15)

    def test_single_qubit_plus(self):
        s = coherent_state(1, 1.0)
        assert np.allclose(s.amplitudes, [1 / math.sqrt(2)] * 2, atol=1e-14)

    def test_binomial_n4(self):
        s = coherent_state(4, 1.0)
        expected = [0.25, 0.5, math.sqrt(6) / 4, 0.5, 0.25]
        assert np.allclose(s.amplitudes, expected, atol=1e-14)

    def test_south_pole_infinity(self):
        s = coherent_state(3, math.inf)
        assert s.amplitudes[-1] == 1.0

    def test_extreme_zeta_and_large_n(self):
        for zeta in (1e12, 1e-12, 1e12j):
            s = coherent_state(300, zeta)
            assert abs(np.linalg.norm(s.amplitudes) - 1.0) < 1e-12

    def test_invalid_state_rejected(self):
        with pytest.raises(ValueError):
            sc.CollectiveState(2, np.array([1.0, 1.0, 0.0]))
        with pytest.raises(ValueError):
            sc.CollectiveState(2, np.array([1.0, 0.0]))


class TestOperators:
    def test_jz_diagonal(self):
        jz = collective_operator(2, "jz").matrix
        assert np.allclose(jz, np.diag([1.0, 0.0, -1.0]))

    def test_jplus_ladder(self):
        jp = collective_operator(2, "jplus", ).matrix
        nz = jp[np.abs(jp) > 0]
        assert np.allclose(nz, math.sqrt(2))

    def test_parity_is_all_spin_flip(self):
        p = collective_operator(3, "parity_x").matrix
        e0 = np.zeros(4)
        e0[0] = 1.0
        assert np.allclose(p @ e0, np.eye(4)[3])

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 13, 21, 30])
    def test_su2_algebra(self, n):
        jx = collective_operator(n, "jx").matrix
        jy = collective_operator(n, "jy").matrix
        jz = collective_operator(n, "jz").matrix
        jp = collective_operator(n, "jplus").matrix
        jm = collective_operator(n, "jminus").matrix
        assert np.max(np.abs(jx @ jy - jy @ jx - 1j * jz)) < 1e-12
        assert np.max(np.abs(jp - (jx + 1j * jy))) < 1e-12
        assert np.max(np.abs(jm - (jx - 1j * jy))) < 1e-12
        j = n / 2.0
        casimir = jx @ jx + jy @ jy + jz @ jz
        assert np.max(np.abs(casimir - j * (j + 1) * np.eye(n + 1))) < 1e-12

    @pytest.mark.parametrize("n", [2, 5, 12, 30])
    def test_parity_properties(self, n):
        p = collective_operator(n, "parity_x").matrix
        jx = collective_operator(n, "jx").matrix
        assert np.max(np.abs(p @ p - np.eye(n + 1))) < 1e-12
        assert np.max(np.abs(p @ jx - jx @ p)) < 1e-12

    def test_dot_needs_direction(self):
        with pytest.raises(ValueError):
            collective_operator(3, "dot")
        with pytest.raises(ValueError):
            collective_operator(3, "nonsense")

    def test_hermitian_flag_checked(self):
        with pytest.raises(ValueError):
            sc.CollectiveOperator(1, np.array([[0.0, 1.0], [0.0, 0.0]]), hermitian=True)


class TestRotate:
    def test_zero_angle_identity(self):
        s = coherent_state(6, 0.7 + 0.2j)
        r = rotate(s, Direction.from_angles(1.0, 2.0), 0.0)
        assert np.max(np.abs(r.amplitudes - s.amplitudes)) < 1e-14

    def test_z_rotation_shifts_azimuth(self):
        for n, phi in ((5, 0.7), (12, -1.3)):
            rotated = rotate(coherent_state(n, 1.0), Z_AXIS, phi)
            target = coherent_state(n, np.exp(1j * phi))
            assert abs(overlap_mod(rotated, target) - 1.0) < 1e-12

    def test_x_pi_on_x_polarized(self):
        s = coherent_state(4, 1.0)
        r = rotate(s, X_AXIS, math.pi)
        assert abs(overlap_mod(r, s) - 1.0) < 1e-12

    def test_additivity(self):
        s = coherent_state(9, 0.3 - 1.1j)
        d = Direction.from_angles(0.9, -2.1)
        once = rotate(s, d, 0.8 + 0.5)
        twice = rotate(rotate(s, d, 0.8), d, 0.5)
        assert np.max(np.abs(once.amplitudes - twice.amplitudes)) < 1e-11

    def test_norm_preserved(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            n = int(rng.integers(2, 40))
            amps = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
            s = sc.CollectiveState(n, amps / np.linalg.norm(amps))
            d = Direction.from_angles(rng.uniform(0, math.pi), rng.uniform(-math.pi, math.pi))
            r = rotate(s, d, rng.uniform(-3, 3))
            assert abs(np.linalg.norm(r.amplitudes) - 1.0) < 1e-12


class TestOatEvolve:
    def test_zero_time_identity(self):
        s = coherent_state(7, 1.0)
        assert np.array_equal(oat_evolve(s, 0.0).amplitudes, s.amplitudes)

    def test_yurke_stoler_cat(self):
        s = oat_evolve(coherent_state(4, 1.0), math.pi / 2, sign=1)
        # equal-weight superposition of the two antipodal equatorial coherent states
        for zeta in (1.0, -1.0):
            w = abs(np.vdot(coherent_state(4, zeta).amplitudes, s.amplitudes)) ** 2
            assert abs(w - 0.5) < 1e-12
        expected = np.array([0.25, -0.5j, math.sqrt(6) / 4, -0.5j, 0.25])
        assert np.max(np.abs(s.amplitudes - expected)) < 1e-14

    def test_untwist_inverts_twist(self):
        s = coherent_state(11, 0.4 + 0.9j)
        round_trip = oat_evolve(oat_evolve(s, 0.37, sign=1), 0.37, sign=-1)
        assert np.max(np.abs(round_trip.amplitudes - s.amplitudes)) < 1e-14

    def test_sign_validated(self):
        with pytest.raises(ValueError):
            oat_evolve(coherent_state(2, 1.0), 0.1, sign=2)


class TestMoments:
    def test_x_polarized_is_jx_eigenstate(self):
        for n in (2, 7, 20):
            s = coherent_state(n, 1.0)
            jx = collective_operator(n, "jx")
            assert abs(expectation(s, jx) - n / 2) < 1e-12
            assert variance(s, jx) < 1e-12

    def test_binomial_jz_variance(self):
        for n in (2, 9, 33):
            s = coherent_state(n, 1.0)
            assert abs(variance(s, collective_operator(n, "jz")) - n / 4) < 1e-10

    def test_ghz_parity_signal(self):
        n = 6
        for phi in (0.13, 0.7, 1.9):
            state = rotate(ghz_state(n), Z_AXIS, phi)
            val = expectation(state, collective_operator(n, "parity_x"))
            assert abs(val - math.cos(n * phi)) < 1e-12

    def test_non_hermitian_rejected(self):
        s = coherent_state(2, 1.0)
        with pytest.raises(ValueError):
            expectation(s, collective_operator(2, "jplus"))
        with pytest.raises(ValueError):
            variance(s, collective_operator(2, "jminus"))


class TestHusimi:
    def test_self_overlap_is_one(self):
        s = coherent_state(8, 1.0)
        assert husimi_q(s, math.pi / 2, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_antipode_vanishes(self):
        s = coherent_state(8, 1.0)
        assert husimi_q(s, math.pi / 2, math.pi) < 1e-12

    def test_resolution_of_identity(self):
        # midpoint quadrature of (N+1)/(4 pi) * Q over the sphere
        n = 5
        state = oat_evolve(coherent_state(n, 1.0), 0.4)
        nx, nt = 240, 480
        xi = (np.arange(nx) + 0.5) * math.pi / nx
        th = -math.pi + (np.arange(nt) + 0.5) * 2 * math.pi / nt
        q = husimi_q(state, xi[:, None], th[None, :])
        integral = np.sum(q * np.sin(xi)[:, None]) * (math.pi / nx) * (2 * math.pi / nt)
        assert abs(integral * (n + 1) / (4 * math.pi) - 1.0) < 1e-3

    def test_values_in_unit_interval(self):
        s = oat_evolve(coherent_state(12, 1.0), 1.1)
        q = husimi_q(s, np.linspace(0, math.pi, 40)[:, None],
                     np.linspace(-math.pi, math.pi, 40)[None, :])
        assert np.all(q >= 0.0) and np.all(q <= 1.0 + 1e-12)
