import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_shield.lti import (Ellipsoid, HalfSpace, SingularBlockError,
                                UnstableSimulationError, discretize,
                                distance_to_halfspace_oracle,
                                distance_to_halfspace_paper, expm,
                                mc_reach_sample, project_ellipsoid,
                                sample_in_ellipsoid)


def taylor_expm(M, terms=60):
    """Independent truncated-series oracle."""
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


def random_spd(n, rng, scale=1.0):
    A = rng.normal(size=(n, n))
    return A @ A.T + scale * np.eye(n)


class TestExpm:
    def test_zero_matrix(self):
        assert np.array_equal(expm(np.zeros((5, 5))), np.eye(5))

    def test_nilpotent_closed_form(self):
        M = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.allclose(expm(M), np.array([[1.0, 1.0], [0.0, 1.0]]), atol=1e-15)

    def test_matches_taylor_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            M = rng.normal(size=(5, 5))
            M *= 1.0 / max(1.0, np.linalg.norm(M, 2))
            E = expm(M)
            T = taylor_expm(M)
            assert np.abs(E - T).max() <= 1e-12 * max(1.0, np.abs(T).max())

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            expm(np.zeros((2, 3)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_group_property(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(4, 4))
        M *= 5.0 / max(5.0, np.linalg.norm(M, 2))
        assert np.abs(expm(M) @ expm(-M) - np.eye(4)).max() < 1e-9


class TestDiscretize:
    def test_scalar_closed_form(self):
        A, (B,) = discretize(np.array([[-1.0]]), [np.array([[1.0]])], 0.1)
        assert abs(A[0, 0] - np.exp(-0.1)) < 1e-15
        assert abs(B[0, 0] - (1.0 - np.exp(-0.1))) < 1e-14

    def test_zero_dynamics(self):
        Bc = np.array([[1.0], [2.0]])
        A, (B,) = discretize(np.zeros((2, 2)), [Bc], 0.3)
        assert np.allclose(A, np.eye(2))
        assert np.allclose(B, 0.3 * Bc)

    def test_input_filter_closed_form(self):
        # the control filter du = (-u + eps)/h discretizes to
        # a_u = exp(-Ts/h), b_u = 1 - a_u
        h, Ts = 0.5, 0.1
        A, (B,) = discretize(np.array([[-1.0 / h]]), [np.array([[1.0 / h]])], Ts)
        assert abs(A[0, 0] - np.exp(-Ts / h)) < 1e-15
        assert abs(B[0, 0] - (1.0 - np.exp(-Ts / h))) < 1e-14

    @pytest.mark.parametrize("Ts", [1e-2, 1e-3])
    def test_small_step_consistency(self, Ts):
        rng = np.random.default_rng(3)
        Ac = rng.normal(size=(4, 4))
        Bc = rng.normal(size=(4, 2))
        A, (B,) = discretize(Ac, [Bc], Ts)
        assert np.abs((A - np.eye(4)) / Ts - Ac).max() < 2.0 * Ts * np.abs(Ac).max() ** 2
        assert np.abs(B / Ts - Bc).max() < 2.0 * Ts * max(1.0, np.abs(Ac).max() * np.abs(Bc).max())


class TestEllipsoid:
    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            Ellipsoid(np.diag([1.0, -1.0]), 1.0)

    def test_rejects_nonpositive_level(self):
        with pytest.raises(ValueError):
            Ellipsoid(np.eye(2), 0.0)

    def test_boundary_samples_on_boundary(self):
        rng = np.random.default_rng(5)
        E = Ellipsoid(random_spd(4, rng), 2.5)
        pts = E.boundary_samples(200, seed=1)
        vals = np.einsum("ij,jk,ik->i", pts, E.P, pts)
        assert np.abs(vals - 2.5).max() < 1e-9


class TestProjection:
    def test_block_diagonal(self):
        P = np.diag([2.0, 3.0, 5.0])
        E = project_ellipsoid(Ellipsoid(P, 1.0), [0, 1])
        assert np.allclose(E.P, np.diag([2.0, 3.0]))
        assert E.alpha == 1.0

    def test_identity_to_axis(self):
        E = project_ellipsoid(Ellipsoid(np.eye(2), 1.0), [0])
        assert np.allclose(E.P, [[1.0]])

    def test_containment_of_shadows(self):
        rng = np.random.default_rng(11)
        P = random_spd(3, rng)
        E = Ellipsoid(P, 1.7)
        proj = project_ellipsoid(E, [0, 1])
        pts = E.boundary_samples(10_000, seed=2)[:, :2]
        vals = np.einsum("ij,jk,ik->i", pts, proj.P, pts)
        assert vals.max() <= proj.alpha + 1e-9

    def test_singular_block_raises(self):
        P = np.diag([1.0, 1.0, 1.0])
        P[2, 2] = 1e-30
        with pytest.raises((SingularBlockError, ValueError)):
            project_ellipsoid(Ellipsoid(P + 1e-15 * np.eye(3), 1.0), [0, 1])


class TestDistances:
    def test_unit_sphere_plane(self):
        E = Ellipsoid(np.eye(3), 1.0)
        H = HalfSpace(np.array([1.0, 0.0, 0.0]), 2.0)
        assert abs(distance_to_halfspace_paper(E, H) - 1.0) < 1e-12
        assert abs(distance_to_halfspace_oracle(E, H) - 1.0) < 1e-12

    def test_level_enters_formula_directly(self):
        # with alpha = 4 the reported formula gives 2 - sqrt(1/4) = 1.5 while
        # the support oracle gives (2 - sqrt(4))/1 = 0
        E = Ellipsoid(np.eye(3), 4.0)
        H = HalfSpace(np.array([1.0, 0.0, 0.0]), 2.0)
        assert abs(distance_to_halfspace_paper(E, H) - 1.5) < 1e-12
        assert abs(distance_to_halfspace_oracle(E, H) - 0.0) < 1e-12

    def test_intersection_is_negative(self):
        E = Ellipsoid(np.eye(2), 1.0)
        H = HalfSpace(np.array([1.0, 0.0]), 0.5)
        assert abs(distance_to_halfspace_oracle(E, H) + 0.5) < 1e-12

    def test_axis_aligned_closed_form(self):
        E = Ellipsoid(np.diag([1.0, 4.0]), 1.0)
        H = HalfSpace(np.array([0.0, 1.0]), 1.0)
        assert abs(distance_to_halfspace_oracle(E, H) - 0.5) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_oracle_matches_support_function(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        P = random_spd(n, rng)
        alpha = float(rng.uniform(0.1, 10.0))
        c = rng.normal(size=n)
        b = float(rng.uniform(-5.0, 5.0))
        E = Ellipsoid(P, alpha)
        H = HalfSpace(c, b)
        support = np.sqrt(alpha * c @ np.linalg.solve(P, c))
        expected = (b - support) / np.linalg.norm(c)
        assert abs(distance_to_halfspace_oracle(E, H) - expected) < 1e-10


class TestMcReach:
    def test_no_inputs_stays_at_origin(self):
        states = mc_reach_sample(np.eye(2) * 0.5, [], [], 10, 4, seed=0)
        assert np.abs(states).max() == 0.0

    def test_static_unit_ball_image(self):
        states = mc_reach_sample(np.zeros((2, 2)), [np.eye(2)], [np.eye(2)],
                                 50, 100, seed=1)
        norms = np.linalg.norm(states.reshape(-1, 2), axis=1)
        assert norms.max() <= 1.0 + 1e-12

    def test_scalar_geometric_bound(self):
        states = mc_reach_sample(np.array([[0.5]]), [np.array([[1.0]])],
                                 [np.array([[1.0]])], 500, 1000, seed=2,
                                 on_boundary=True)
        m = np.abs(states).max()
        assert m <= 2.0 + 1e-9   # geometric series bound 1/(1 - 0.5)
        assert m >= 1.9          # and the bound is approached

    def test_overflow_guard(self):
        with pytest.raises(UnstableSimulationError):
            mc_reach_sample(np.array([[1.5]]), [np.array([[1.0]])],
                            [np.array([[1.0]])], 200, 10, seed=3)

    def test_deterministic_in_seed(self):
        a = mc_reach_sample(np.eye(2) * 0.3, [np.eye(2)], [np.eye(2)], 20, 8, seed=9)
        b = mc_reach_sample(np.eye(2) * 0.3, [np.eye(2)], [np.eye(2)], 20, 8, seed=9)
        assert np.array_equal(a, b)


def test_sample_in_ellipsoid_respects_bound():
    rng = np.random.default_rng(7)
    W = random_spd(3, rng)
    w = sample_in_ellipsoid(W, 500, rng)
    q = np.einsum("ij,jk,ik->i", w, W, w)
    assert q.max() <= 1.0 + 1e-12
