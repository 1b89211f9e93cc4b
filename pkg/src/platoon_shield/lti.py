"""Dense LTI kernels: matrix exponential, exact discretization, origin-centered
ellipsoid geometry, and Monte-Carlo reachability sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class SingularBlockError(ValueError):
    """Raised when a projection block is numerically singular."""


class UnstableSimulationError(RuntimeError):
    """Raised when a sampled trajectory exceeds the overflow guard."""


def _as_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def expm(M) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a degree-13 Pade
    approximant (scipy backend)."""
    return scipy.linalg.expm(_as_square(M))


def discretize(Ac, Bc_list, Ts: float):
    """Exact zero-order-hold discretization of dx = Ac x + sum_i Bc_i u_i.

    Uses the augmented block exponential exp([[Ac, I], [0, 0]]*Ts) so the
    integral term is computed to machine precision.  Returns (A, [B_i]).
    """
    Ac = _as_square(Ac)
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    n = Ac.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = Ac
    aug[:n, n:] = np.eye(n)
    E = expm(aug * Ts)
    A = E[:n, :n]
    S = E[:n, n:]  # integral of expm(Ac * s) over [0, Ts]
    Bs = []
    for Bc in Bc_list:
        Bc = np.atleast_2d(np.asarray(Bc, dtype=float))
        if Bc.shape[0] != n:
            Bc = Bc.T
        if Bc.shape[0] != n:
            raise ValueError(f"input matrix has {Bc.shape} rows, expected {n}")
        Bs.append(S @ Bc)
    return A, Bs


def symmetrize(P) -> np.ndarray:
    P = _as_square(P)
    return (P + P.T) / 2.0


def is_spd(P, rtol: float = 1e-10) -> bool:
    P = np.asarray(P, dtype=float)
    scale = max(1.0, float(np.abs(P).max()))
    if np.abs(P - P.T).max() > rtol * scale:
        return False
    return float(np.linalg.eigvalsh(symmetrize(P)).min()) > 0.0


@dataclass(frozen=True)
class Ellipsoid:
    """Origin-centered set {z : z' P z <= alpha} with SPD shape matrix P."""

    P: np.ndarray
    alpha: float

    def __post_init__(self):
        P = symmetrize(self.P)
        if not is_spd(P):
            raise ValueError("shape matrix must be symmetric positive definite")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "P", P)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def contains(self, z, slack: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float)
        return float(z @ self.P @ z) <= self.alpha + slack

    def boundary_samples(self, n: int, seed: int = 0) -> np.ndarray:
        """n points on the boundary {z' P z = alpha}, rows are points."""
        rng = np.random.default_rng(seed)
        d = self.dim
        u = rng.normal(size=(n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # map unit sphere through P^{-1/2} * sqrt(alpha)
        w, V = np.linalg.eigh(self.P)
        T = V @ np.diag(1.0 / np.sqrt(w)) @ V.T * np.sqrt(self.alpha)
        return u @ T


@dataclass(frozen=True)
class HalfSpace:
    """Set {x : c' x > b}."""

    c: np.ndarray
    b: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        if not np.any(c):
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "c", c)


def project_ellipsoid(E: Ellipsoid, x_dims) -> Ellipsoid:
    """Shadow of E on the coordinates in x_dims: shape Q1 - Q2 Q3^{-1} Q2',
    same level alpha."""
    x_dims = list(x_dims)
    n = E.dim
    y_dims = [i for i in range(n) if i not in x_dims]
    if not y_dims:
        return E
    Q1 = E.P[np.ix_(x_dims, x_dims)]
    Q2 = E.P[np.ix_(x_dims, y_dims)]
    Q3 = E.P[np.ix_(y_dims, y_dims)]
    sv_min = float(np.linalg.svd(Q3, compute_uv=False).min())
    cond = float(np.abs(E.P).max()) / sv_min if sv_min > 0 else np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularBlockError(
            f"projection block is numerically singular (cond ~ {cond:.2e})"
        )
    shape = Q1 - Q2 @ np.linalg.solve(Q3, Q2.T)
    return Ellipsoid(symmetrize(shape), E.alpha)


def distance_to_halfspace_paper(E: Ellipsoid, H: HalfSpace) -> float:
    """Distance expression used by the assessment verdict:
    (|b| - sqrt(c' P^{-1} c / alpha)) / (c' c).

    Note the level alpha divides inside the square root and the denominator is
    c'c rather than |c|; the geometric oracle below differs on both counts and
    both values are always reported side by side.
    """
    c, b = H.c, H.b
    q = float(c @ np.linalg.solve(E.P, c))
    return (abs(b) - np.sqrt(q / E.alpha)) / float(c @ c)


def distance_to_halfspace_oracle(E: Ellipsoid, H: HalfSpace) -> float:
    """Signed Euclidean distance between E and the hyperplane {c' x = b},
    computed from the explicit support point of E in direction c.  Negative
    values mean the sets intersect."""
    c, b = H.c, H.b
    Pinv_c = np.linalg.solve(E.P, c)
    q = float(c @ Pinv_c)
    x_star = np.sqrt(E.alpha) * Pinv_c / np.sqrt(q)  # maximizes c'x over E
    return float(b - c @ x_star) / float(np.linalg.norm(c))


def sample_in_ellipsoid(W, n: int, rng, on_boundary: bool = False) -> np.ndarray:
    """Rows are samples w with w' W w <= 1 (== 1 when on_boundary)."""
    W = symmetrize(W)
    p = W.shape[0]
    u = rng.normal(size=(n, p))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    if not on_boundary:
        r = rng.uniform(size=(n, 1)) ** (1.0 / p)
        u = u * r
    w, V = np.linalg.eigh(W)
    T = V @ np.diag(1.0 / np.sqrt(w)) @ V.T
    return u @ T


def mc_reach_sample(A, B_list, W_list, horizon: int, n_runs: int, seed: int,
                    on_boundary: bool = False) -> np.ndarray:
    """Monte-Carlo under-approximation of the reachable set of
    x+ = A x + sum_i B_i w_i from the origin, with w_i' W_i w_i <= 1.

    Returns an (n_runs, horizon + 1, n) array of visited states.
    """
    A = _as_square(A)
    n = A.shape[0]
    if len(B_list) != len(W_list):
        raise ValueError("B_list and W_list must have matching lengths")
    Bs = [np.atleast_2d(np.asarray(B, dtype=float)).reshape(n, -1) for B in B_list]
    rng = np.random.default_rng(seed)
    states = np.zeros((n_runs, horizon + 1, n))
    x = np.zeros((n_runs, n))
    for k in range(horizon):
        x = x @ A.T
        for B, W in zip(Bs, W_list):
            w = sample_in_ellipsoid(W, n_runs, rng, on_boundary=on_boundary)
            x = x + w @ B.T
        if np.abs(x).max() > 1e9:
            raise UnstableSimulationError(
                f"state overflow at step {k + 1}: |x| > 1e9"
            )
        states[:, k + 1, :] = x
    return states
