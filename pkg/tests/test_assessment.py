import numpy as np
import pytest

from platoon_shield import assessment, sdp
from platoon_shield.lti import (Ellipsoid, HalfSpace,
                                distance_to_halfspace_oracle,
                                distance_to_halfspace_paper)
from platoon_shield.model import VehicleParams, build_closed_loop

from conftest import QUICK_REACH


@pytest.fixture(scope="module")
def quick_reach(plant, bounds, quick_estimator, quick_controller):
    cl = build_closed_loop(plant, quick_controller.K)
    return assessment.reach_ellipsoid(
        cl, bounds, quick_estimator.Pi, quick_estimator.P_e,
        quick_estimator.alpha_inf_e, a_grid=QUICK_REACH,
        refinement_rounds=0, threads=2)


class TestProjection:
    def test_block_diagonal_certificate(self):
        X = np.diag([1.0, 2.0, 3.0, 4.0, 5.0])
        P = np.zeros((6, 6))
        P[:5, :5] = X
        P[5, 5] = 7.0
        P_x, alpha = assessment.project_to_state(P, 2.0)
        assert np.allclose(P_x, X)
        assert alpha == 2.0

    def test_identity(self):
        P_x, alpha = assessment.project_to_state(np.eye(6), 1.0)
        assert np.allclose(P_x, np.eye(5))

    def test_level_unchanged_and_shadow_contained(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(6, 6))
        P = A @ A.T + np.eye(6)
        alpha = 3.3
        P_x, alpha_out = assessment.project_to_state(P, alpha)
        assert alpha_out == alpha
        pts = Ellipsoid(P, alpha).boundary_samples(10_000, seed=4)[:, :5]
        vals = np.einsum("ij,jk,ik->i", pts, P_x, pts)
        assert vals.max() <= alpha + 1e-9

    def test_invalid_certificate(self):
        P = np.eye(6)
        P[5, 5] = -1.0
        with pytest.raises(ValueError):
            assessment.project_to_state(P, 1.0)


class TestCriticalStates:
    def test_half_space_patterns(self):
        cs = assessment.CriticalStates.from_params(VehicleParams(h=0.5, s_i=3.0,
                                                                 v_max=35.0))
        collision, overspeed = cs.half_spaces
        assert np.allclose(collision.c, [-1.0, -0.5, 0.0, 0.0, 0.0])
        assert collision.b == 3.0
        assert np.allclose(overspeed.c, [0.0, 1.0, 0.0, 0.0, 0.0])
        assert overspeed.b == 35.0


class TestAssess:
    def test_identity_certificate_closed_form(self):
        cs = assessment.CriticalStates.from_params(VehicleParams())
        verdict = assessment.assess(np.eye(5), 1.0, cs)
        # unit ball vs both planes, distances by hand
        d1 = (3.0 - np.sqrt(1.25)) / 1.25
        assert abs(verdict.per_halfspace["collision"]["formula"] - d1) < 1e-12
        assert abs(verdict.per_halfspace["overspeed"]["formula"] - 34.0) < 1e-12
        assert verdict.resilient
        assert verdict.d_inf == min(v["formula"] for v in verdict.per_halfspace.values())

    def test_delegation_identity(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(5, 5))
        P = A @ A.T + np.eye(5)
        alpha = 2.0
        cs = assessment.CriticalStates.from_params(VehicleParams())
        verdict = assessment.assess(P, alpha, cs)
        E = Ellipsoid(P, alpha)
        for name, hs in zip(cs.names, cs.half_spaces):
            assert verdict.per_halfspace[name]["formula"] == \
                distance_to_halfspace_paper(E, hs)
            assert verdict.per_halfspace[name]["oracle"] == \
                distance_to_halfspace_oracle(E, hs)

    def test_oracle_monotone_in_level(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(5, 5))
        P = A @ A.T + np.eye(5)
        cs = assessment.CriticalStates.from_params(VehicleParams())
        small = assessment.assess(P, 1.0, cs)
        large = assessment.assess(P, 4.0, cs)
        for name in cs.names:
            assert large.per_halfspace[name]["oracle"] < \
                small.per_halfspace[name]["oracle"]

    def test_sign_mismatch_flag(self):
        # a certificate close to the collision plane: inflate the level until
        # the oracle goes negative while the reported formula stays positive
        cs = assessment.CriticalStates.from_params(VehicleParams())
        verdict = assessment.assess(np.eye(5), 100.0, cs)
        oracle = verdict.d_inf_oracle
        formula = verdict.d_inf
        assert oracle < 0 < formula
        assert verdict.sign_mismatch


class TestReach:
    def test_certificate_verifies(self, quick_reach):
        assert quick_reach.verification.passed
        assert quick_reach.alpha_inf == sdp.alpha_inf(quick_reach.a, 6)

    def test_mc_trajectories_stay_inside_certified_set(self, plant, bounds,
                                                       quick_estimator,
                                                       quick_reach):
        # the certified extended-state set must contain trajectories driven by
        # admissible channel noises with the residual and error channels off
        from platoon_shield.lti import mc_reach_sample
        from platoon_shield.model import build_closed_loop

        est = quick_estimator
        K = quick_reach  # noqa: F841  (kept for fixture ordering)
        cl = build_closed_loop(plant, np.array([[0.2, 0.7]]))
        fam = assessment.zeta_reach_family(cl, bounds, est.Pi, est.P_e,
                                           est.alpha_inf_e, 1e-3)
        res = sdp.grid_search(fam, sdp.GridSpec(axes={"a": (0.95, 0.99)},
                                                refinement_rounds=0), threads=2)
        assert res.feasible
        a = res.best_scalars["a"]
        P = res.best.assignment["P"]
        states = mc_reach_sample(
            cl.Acal,
            [cl.B1, cl.B2, cl.B3],
            [np.array([[1.0 / bounds.u_bar]]), np.eye(2) / bounds.w1_bar,
             np.array([[1.0 / bounds.w2_bar]])],
            horizon=300, n_runs=200, seed=0)
        V = np.einsum("rkj,jl,rkl->rk", states, P, states)
        alpha = sdp.alpha_k(a, 6, 0.0, np.arange(1, 302))
        assert float((V - alpha[None, :]).max()) <= 1e-6
