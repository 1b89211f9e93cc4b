import numpy as np
import pytest

from platoon_shield import synthesis
from platoon_shield.fixtures import baseline_design
from platoon_shield.model import VehicleParams, build_plant

from conftest import QUICK_REACH


class TestEstimatorMonitor:
    def test_design_verifies(self, quick_estimator):
        assert quick_estimator.verification.passed
        assert quick_estimator.verification.worst() >= -1e-6

    def test_f2_necessary_condition(self, quick_estimator):
        assert quick_estimator.f2 > 0

    def test_budgets(self, quick_estimator):
        s = quick_estimator.scalars
        assert s["a1"] + s["a2"] + s["a3"] >= s["a"] - 1e-9
        assert s["c1"] + s["c2"] >= s["c"] - 1e-9

    def test_gain_recovery_identity(self, quick_estimator):
        # L is recovered from the linearizing substitution; P_e L must be
        # reproducible from the stored pieces
        est = quick_estimator
        Y = est.P_e @ est.L
        assert np.all(np.isfinite(Y))
        assert np.abs(est.P_e @ est.L - Y).max() < 1e-12

    def test_monitor_is_spd(self, quick_estimator):
        assert np.linalg.eigvalsh(quick_estimator.Pi).min() >= 1e-8 - 1e-12

    def test_weight_validation(self, plant, bounds):
        with pytest.raises(ValueError):
            synthesis.synthesize_estimator_monitor(plant, bounds, weights=(0.5, 0.4))

    def test_monitor_weight_monotonicity(self, plant, bounds, quick_estimator):
        # more objective weight on the monitor never shrinks its volume
        heavy = synthesis.synthesize_estimator_monitor(
            plant, bounds, weights=(0.5, 0.5),
            a_grid=(quick_estimator.scalars["a"],),
            c_grid=(quick_estimator.scalars["c"],),
            a3_grid=(quick_estimator.scalars["a3"],),
            tau1_grid=(quick_estimator.scalars["tau1"],),
            refinement_rounds=0, threads=1)
        light_logdet = np.linalg.slogdet(
            quick_estimator.Pi + 1e-12 * np.eye(4))[1]
        heavy_logdet = np.linalg.slogdet(heavy.Pi + 1e-12 * np.eye(4))[1]
        assert heavy_logdet >= light_logdet - 1e-3


class TestMonitorGivenGain:
    def test_baseline_gain_monitor(self, plant, bounds):
        base = baseline_design()
        res = synthesis.synthesize_monitor_given_L(
            plant, bounds, base["L"], c_grid=(0.992, 0.995, 0.999),
            refinement_rounds=0, threads=2)
        assert res.verification.passed
        assert np.linalg.eigvalsh(res.Pi).min() > 0
        # comparable role to the stored baseline monitor: same order of
        # magnitude of the dominant entries, no entrywise match asserted
        assert 1e-3 < np.abs(res.Pi).max() < 1e2

    def test_tighter_bounds_tighter_monitor(self, plant, bounds):
        from platoon_shield.model import NoiseBounds

        base = baseline_design()
        loose = synthesis.synthesize_monitor_given_L(
            plant, bounds, base["L"], c_grid=(0.995,),
            refinement_rounds=0, threads=1)
        small = NoiseBounds(u_bar=bounds.u_bar, w1_bar=bounds.w1_bar,
                            w2_bar=bounds.w2_bar / 100.0,
                            w3_bar=bounds.w3_bar / 100.0)
        tight = synthesis.synthesize_monitor_given_L(
            plant, small, base["L"], c_grid=(0.995,),
            refinement_rounds=0, threads=1)
        loose_ld = np.linalg.slogdet(loose.Pi)[1]
        tight_ld = np.linalg.slogdet(tight.Pi)[1]
        assert tight_ld > loose_ld


class TestController:
    def test_verifies(self, quick_controller):
        assert quick_controller.verification.passed

    def test_gain_constraints_hold_exactly(self, quick_controller):
        kp, kd = quick_controller.K.ravel()
        tau = 0.1
        assert kp > 0 and kd > 0
        assert kd > kp * tau
        assert kd < 1.0 / (3.0 * tau)

    def test_decay_constraints(self, quick_controller):
        rep = synthesis.gain_constraint_report(quick_controller.K, 0.1, -0.01)
        assert all(v for k, v in rep.items() if isinstance(v, bool))
        assert rep["max_re_eig"] < -0.01

    def test_certificate_block_structure(self, quick_controller):
        P = quick_controller.P_zeta
        assert np.allclose(P[:5, 5], 0.0)
        assert P[5, 5] == quick_controller.x_tilde
        assert np.allclose(quick_controller.K_tilde,
                           quick_controller.x_tilde * quick_controller.K)

    def test_parameter_errors_before_solving(self, plant, bounds, quick_estimator):
        est = quick_estimator
        with pytest.raises(ValueError):
            synthesis.synthesize_controller(
                plant, bounds, Pi=est.Pi, P_e=est.P_e, alpha_e=est.alpha_inf_e,
                lambda_max=0.01)
        with pytest.raises(ValueError):
            # tau too large for the requested decay
            slow = build_plant(VehicleParams(tau=40.0))
            synthesis.synthesize_controller(
                slow, bounds, Pi=est.Pi, P_e=est.P_e, alpha_e=est.alpha_inf_e,
                lambda_max=-0.01)


class TestEigAe:
    def test_zero_gain_spectrum(self):
        eigs = sorted(synthesis.eig_Ae([0.0, 0.0], 0.1).real)
        assert np.allclose(sorted(np.abs(eigs)), [0.0, 0.0, 10.0], atol=1e-9)

    def test_polynomial_residual(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            kp, kd = rng.uniform(0.01, 2.0, size=2)
            tau = float(rng.uniform(0.05, 0.5))
            eigs = synthesis.eig_Ae([kp, kd], tau)
            res = tau * eigs ** 3 + eigs ** 2 + kd * eigs + kp
            assert np.abs(res).max() < 1e-10

    def test_baseline_gain_is_stable(self):
        eigs = synthesis.eig_Ae([0.2, 0.7], 0.1)
        assert eigs.real.max() < 0

    def test_decay_bound_arithmetic(self):
        # at lambda_max = -0.01, tau = 0.1 the stated bounds evaluate to
        # k_d in (0.01997, 10/3)
        lam, tau = -0.01, 0.1
        assert abs((-2 * lam - 3 * tau * lam ** 2) - 0.01997) < 1e-12
        assert abs(1.0 / (3 * tau) - 10.0 / 3.0) < 1e-12


class TestErrorReach:
    def test_baseline_error_certificate(self, plant, bounds):
        base = baseline_design()
        P_e, a, alpha_e, sol = synthesis.error_reach_given_design(
            plant, bounds, base["L"], base["Pi"], a_grid=QUICK_REACH,
            refinement_rounds=0, threads=2)
        assert sol.verification.passed
        assert alpha_e == synthesis.alpha_inf_e(a)
        assert np.linalg.eigvalsh(P_e).min() > 0


def test_k_bar_star_definition():
    P = np.eye(5)
    # already inside the asymptotic set
    assert synthesis.k_bar_star(0.5, P, 3.0, 1e-3, np.zeros(5)) == 1
    # needs (k-1) >= log(eps / (v1 - abar)) / log(c)
    e1 = np.array([2.0, 0, 0, 0, 0])  # v1 = 4
    k = synthesis.k_bar_star(0.5, P, 3.0, 1e-3, e1)
    assert 0.5 ** (k - 1) * (4.0 - 3.0) <= 1e-3
    assert 0.5 ** (k - 2) * (4.0 - 3.0) > 1e-3
