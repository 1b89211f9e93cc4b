"""CACC platoon model: continuous dynamics, exact discretization, measurement
structure, extended closed loop, and estimation-error dynamics.

State ordering is fixed throughout: x = [e_r, v, a, dv, a_prev] where e_r is
the spacing error, v the own velocity, a the own acceleration, dv the relative
velocity to the predecessor and a_prev the predecessor acceleration.  The
extended state is zeta = [x, u] with u the filtered control command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import discretize, expm


@dataclass(frozen=True)
class VehicleParams:
    h: float = 0.5        # time headway [s]
    tau: float = 0.1      # driveline time constant [s]
    Ts: float = 0.1       # sample time [s]
    s_i: float = 3.0      # standstill distance [m]
    L_i: float = 4.5      # vehicle length [m]
    v_max: float = 35.0   # maximum allowed speed [m/s]

    def __post_init__(self):
        for name in ("h", "tau", "Ts", "s_i", "v_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class NoiseBounds:
    u_bar: float = 4.0     # bound on squared feedforward input
    w1_bar: float = 0.01   # radar noise energy bound
    w2_bar: float = 1e-4   # channel noise bound
    w3_bar: float = 0.02   # estimation sensor noise bound

    def __post_init__(self):
        for name in ("u_bar", "w1_bar", "w2_bar", "w3_bar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class ContinuousPlant:
    A_c: np.ndarray   # 5x5
    B_c1: np.ndarray  # 5x1
    B_c2: np.ndarray  # 5x1
    C: np.ndarray     # 2x5


@dataclass(frozen=True)
class DiscretePlant:
    A: np.ndarray        # 5x5
    B1: np.ndarray       # 5x1
    B2: np.ndarray       # 5x1
    a_u: float
    b_u: float
    C: np.ndarray        # 2x5
    C_e: np.ndarray      # 4x5
    Gamma: np.ndarray    # 4x2
    Gamma_pinv: np.ndarray  # 2x4
    params: VehicleParams

    @property
    def gg(self) -> np.ndarray:
        """Gamma Gamma^+ == diag(1, 0, 0, 1)."""
        return self.Gamma @ self.Gamma_pinv

    @property
    def igg(self) -> np.ndarray:
        """I - Gamma Gamma^+ == diag(0, 1, 1, 0)."""
        return np.eye(4) - self.gg


@dataclass(frozen=True)
class ClosedLoopExtended:
    Acal: np.ndarray  # 6x6
    B1: np.ndarray    # 6x1, feedforward input
    B2: np.ndarray    # 6x2, radar noise
    B3: np.ndarray    # 6x1, channel noise
    B4: np.ndarray    # 6x4, estimation sensor noise
    B5: np.ndarray    # 6x4, residual channel
    B6: np.ndarray    # 6x5, estimation error channel
    K: np.ndarray     # 1x2

    @property
    def B_list(self):
        return [self.B1, self.B2, self.B3, self.B4, self.B5, self.B6]


@dataclass(frozen=True)
class ErrorDynamics:
    A_err: np.ndarray  # 5x5: A - L (I - Gamma Gamma^+) C_e
    B_wu: np.ndarray   # 5x1: -B2
    B_we: np.ndarray   # 5x4: -L (I - Gamma Gamma^+)
    B_r: np.ndarray    # 5x4: -L Gamma Gamma^+
    L: np.ndarray      # 5x4

    @property
    def B_list(self):
        return [self.B_wu, self.B_we, self.B_r]


def build_continuous(params: VehicleParams) -> ContinuousPlant:
    h, tau = params.h, params.tau
    A_c = np.array([
        [0.0, 0.0, -h,        1.0, 0.0],
        [0.0, 0.0, 1.0,       0.0, 0.0],
        [0.0, 0.0, -1.0 / tau, 0.0, 0.0],
        [0.0, 0.0, -1.0,      0.0, 1.0],
        [0.0, 0.0, 0.0,       0.0, -1.0 / tau],
    ])
    B_c1 = np.array([[0.0], [0.0], [1.0 / tau], [0.0], [0.0]])
    B_c2 = np.array([[0.0], [0.0], [0.0], [0.0], [1.0 / tau]])
    C = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -h,  1.0, 0.0],
    ])
    return ContinuousPlant(A_c, B_c1, B_c2, C)


GAMMA = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
# Gamma has orthonormal columns, so the Moore-Penrose inverse is just Gamma'.
GAMMA_PINV = GAMMA.T


def build_discrete(cont: ContinuousPlant, params: VehicleParams) -> DiscretePlant:
    A, (B1, B2) = discretize(cont.A_c, [cont.B_c1, cont.B_c2], params.Ts)
    a_u = float(np.exp(-params.Ts / params.h))
    b_u = 1.0 - a_u  # closed form of the ZOH integral for the scalar filter
    C_e = np.hstack([np.eye(4), np.zeros((4, 1))])
    plant = DiscretePlant(A=A, B1=B1, B2=B2, a_u=a_u, b_u=b_u, C=cont.C,
                          C_e=C_e, Gamma=GAMMA, Gamma_pinv=GAMMA_PINV,
                          params=params)
    if observability_rank(plant) != 5:
        raise ValueError("(A, C_e) must be observable")
    return plant


def build_plant(params: VehicleParams) -> DiscretePlant:
    return build_discrete(build_continuous(params), params)


def observability_rank(plant: DiscretePlant) -> int:
    rows = [plant.C_e]
    for _ in range(4):
        rows.append(rows[-1] @ plant.A)
    return int(np.linalg.matrix_rank(np.vstack(rows)))


def build_closed_loop(plant: DiscretePlant, K) -> ClosedLoopExtended:
    K = np.atleast_2d(np.asarray(K, dtype=float)).reshape(1, 2)
    if not np.all(np.isfinite(K)):
        raise ValueError("controller gain must be finite")
    bu = plant.b_u
    Gp = plant.Gamma_pinv
    Acal = np.block([[plant.A, plant.B1],
                     [bu * K @ plant.C, np.array([[plant.a_u]])]])
    B1 = np.vstack([plant.B2, [[bu]]])
    B2 = np.vstack([np.zeros((5, 2)), bu * K])
    B3 = np.vstack([np.zeros((5, 1)), [[bu]]])
    B4 = np.vstack([np.zeros((5, 4)), -bu * K @ Gp])
    B5 = -B4
    B6 = np.vstack([np.zeros((5, 5)), -bu * K @ Gp @ plant.C_e])
    return ClosedLoopExtended(Acal, B1, B2, B3, B4, B5, B6, K)


def build_error_dynamics(plant: DiscretePlant, L) -> ErrorDynamics:
    L = np.asarray(L, dtype=float).reshape(5, 4)
    if not np.all(np.isfinite(L)):
        raise ValueError("estimator gain must be finite")
    igg = plant.igg
    A_err = plant.A - L @ igg @ plant.C_e
    return ErrorDynamics(A_err=A_err, B_wu=-plant.B2, B_we=-L @ igg,
                         B_r=-L @ plant.gg, L=L)


def recover_delta(r, e, w_e, plant: DiscretePlant) -> np.ndarray:
    """Back-substitute the injected signal from a residual sample:
    delta = Gamma^+ (r - C_e e - w_e)."""
    r = np.asarray(r, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    w_e = np.asarray(w_e, dtype=float).ravel()
    return plant.Gamma_pinv @ (r - plant.C_e @ e - w_e)
