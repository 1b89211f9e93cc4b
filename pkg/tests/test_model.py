import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_shield.model import (NoiseBounds, VehicleParams, build_closed_loop,
                                  build_continuous, build_discrete, build_plant,
                                  build_error_dynamics, observability_rank,
                                  recover_delta)

pos = st.floats(0.05, 3.0, allow_nan=False)


@pytest.fixture(scope="module")
def plant():
    return build_plant(VehicleParams())


class TestContinuous:
    def test_case_study_entries(self):
        cont = build_continuous(VehicleParams(h=0.5, tau=0.1))
        assert cont.A_c[0, 2] == -0.5
        assert cont.A_c[2, 2] == -10.0
        assert cont.A_c[4, 4] == -10.0

    def test_structural_zero_columns(self):
        cont = build_continuous(VehicleParams(h=1.3, tau=0.4))
        assert not cont.A_c[:, 0].any()
        assert not cont.A_c[:, 1].any()

    def test_unit_params(self):
        cont = build_continuous(VehicleParams(h=1.0, tau=1.0))
        assert cont.A_c[0, 2] == -1.0
        assert np.allclose(cont.B_c1.ravel(), [0, 0, 1, 0, 0])

    def test_radar_row(self):
        cont = build_continuous(VehicleParams(h=0.5))
        assert np.allclose(cont.C[1], [0, 0, -0.5, 1, 0])


class TestDiscrete:
    def test_input_filter_pole(self, plant):
        assert abs(plant.a_u - math.exp(-0.2)) < 1e-15
        assert abs(plant.a_u - 0.8187307530779818) < 1e-15

    def test_first_order_limit(self):
        params = VehicleParams(Ts=1e-3)
        cont = build_continuous(params)
        plant = build_discrete(cont, params)
        assert np.abs(plant.A - np.eye(5) - cont.A_c * 1e-3).max() < 1e-3

    @settings(max_examples=30, deadline=None)
    @given(h=pos, Ts=pos)
    def test_bu_complements_au(self, h, Ts):
        params = VehicleParams(h=h, Ts=Ts)
        plant = build_discrete(build_continuous(params), params)
        assert abs(plant.b_u - (1.0 - plant.a_u)) < 1e-12

    @settings(max_examples=20, deadline=None)
    @given(h=pos, tau=pos, Ts=st.floats(0.01, 0.5))
    def test_observable_for_all_params(self, h, tau, Ts):
        plant = build_plant(VehicleParams(h=h, tau=tau, Ts=Ts))
        assert observability_rank(plant) == 5

    def test_gamma_pseudoinverse_pattern(self, plant):
        assert np.array_equal(plant.Gamma_pinv,
                              np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0]]))
        assert np.allclose(plant.Gamma_pinv @ plant.Gamma, np.eye(2))
        assert np.allclose(plant.igg, np.diag([0.0, 1.0, 1.0, 0.0]))


class TestClosedLoop:
    def test_zero_gain_blocks(self, plant):
        cl = build_closed_loop(plant, [0.0, 0.0])
        assert not cl.Acal[5, :5].any()
        for B in (cl.B2, cl.B4, cl.B5, cl.B6):
            assert not B[5].any()
        assert cl.B1[5, 0] == plant.b_u
        assert cl.B3[5, 0] == plant.b_u

    def test_case_study_gain_entry(self, plant):
        cl = build_closed_loop(plant, [0.2, 0.7])
        assert abs(cl.Acal[5, 0] - plant.b_u * 0.2) < 1e-15

    def test_top_left_block_is_plant(self, plant):
        cl = build_closed_loop(plant, [0.37, 0.11])
        assert np.array_equal(cl.Acal[:5, :5], plant.A)

    @settings(max_examples=30, deadline=None)
    @given(kp=st.floats(-2, 2), kd=st.floats(-2, 2))
    def test_residual_channel_mirrors_noise_channel(self, kp, kd):
        plant = build_plant(VehicleParams())
        cl = build_closed_loop(plant, [kp, kd])
        assert np.array_equal(cl.B5, -cl.B4)


class TestErrorDynamics:
    def test_zero_gain(self, plant):
        err = build_error_dynamics(plant, np.zeros((5, 4)))
        assert np.array_equal(err.A_err, plant.A)
        assert not err.B_we.any()
        assert not err.B_r.any()

    def test_attack_free_equals_direct_form(self, plant):
        # with no injection, the residual-substituted recursion collapses to
        # the plain attack-free error recursion
        from platoon_shield.fixtures import baseline_design

        rng = np.random.default_rng(0)
        L = baseline_design()["L"]
        err = build_error_dynamics(plant, L)
        e_a = rng.normal(size=5)
        e_b = e_a.copy()
        for k in range(200):
            wu = rng.uniform(-0.01, 0.01)
            we = rng.uniform(-0.05, 0.05, size=4)
            r = plant.C_e @ e_a + we  # delta = 0
            e_a = (err.A_err @ e_a + err.B_wu.ravel() * wu + err.B_we @ we
                   + err.B_r @ r)
            e_b = (plant.A - L @ plant.C_e) @ e_b - plant.B2.ravel() * wu - L @ we
            assert np.abs(e_a - e_b).max() < 1e-12


class TestRecoverDelta:
    def test_attack_free_residual_maps_to_zero(self, plant):
        rng = np.random.default_rng(1)
        e = rng.normal(size=5)
        we = rng.normal(size=4)
        r = plant.C_e @ e + we
        assert np.abs(recover_delta(r, e, we, plant)).max() < 1e-12

    def test_pattern(self, plant):
        d = recover_delta(np.array([1.0, 0.0, 0.0, 2.0]), np.zeros(5),
                          np.zeros(4), plant)
        assert np.allclose(d, [1.0, 2.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_round_trip(self, seed):
        plant = build_plant(VehicleParams())
        rng = np.random.default_rng(seed)
        e = rng.normal(size=5)
        we = rng.normal(size=4)
        delta = rng.normal(size=2)
        r = plant.C_e @ e + we + plant.Gamma @ delta
        assert np.abs(recover_delta(r, e, we, plant) - delta).max() < 1e-12


def test_bounds_validation():
    with pytest.raises(ValueError):
        NoiseBounds(w2_bar=0.0)
    with pytest.raises(ValueError):
        VehicleParams(h=-1.0)
