"""Gain synthesis: joint estimator/monitor design, monitor design for a fixed
estimator gain, controller design via the block-diagonal certificate, and the
error-reachability certificate for a fixed design.

All programs are only tolerance-feasible on this plant: the spacing-error and
relative-velocity components of the estimation error are unobservable once the
attacked measurement rows are discounted, and the extended closed loop carries
the predecessor-velocity unit eigenvalue.  Certificates are therefore accepted
by eigenvalue verification (see sdp.verify) and the corresponding directions
of the certified shapes sit near the numerical floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .lti import symmetrize
from .model import DiscretePlant, NoiseBounds, build_closed_loop
from .sdp import (GridSpec, LmiProgram, MatrixVar, ScalarVar, bdiag, bm,
                  grid_search)

PSD_MARGIN = 2e-7   # interior margin for the tolerance-feasible programs

A_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
DENSE_TAIL = (0.96, 0.97, 0.975, 0.98, 0.985, 0.99, 0.995, 0.9975, 0.999)
C_GRID = A_GRID + DENSE_TAIL
REACH_A_GRID = A_GRID + DENSE_TAIL
A3_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
TAU1_GRID = A3_GRID

_EPS_OPEN = 1e-8


def alpha_inf_e(a: float) -> float:
    return (3.0 - a) / (1.0 - a)


def alpha_bar_inf_e(c: float) -> float:
    return (2.0 - c) / (1.0 - c)


def alpha_inf_zeta(a: float) -> float:
    return (6.0 - a) / (1.0 - a)


@dataclass(frozen=True)
class EstimatorMonitorFamily:
    """Joint program for (L, Pi): linearized through Y = P_e L with the pair
    (a3, tau1) gridded, solved per grid point (a, c, a3, tau1)."""

    A: np.ndarray
    B2: np.ndarray
    Ce: np.ndarray
    gg: np.ndarray
    igg: np.ndarray
    w2_bar: float
    w3_bar: float
    alpha1: float
    alpha2: float
    eps: float
    psd_margin: float = PSD_MARGIN

    def build(self, scalars: dict) -> LmiProgram | None:
        a, c = scalars["a"], scalars["c"]
        a3, tau1 = scalars["a3"], scalars["tau1"]
        al_e = alpha_inf_e(a)
        alb_e = alpha_bar_inf_e(c)
        if tau1 * (al_e + self.eps) >= 1.0:
            return None  # f2 > 0 is impossible even with tau2 = 0
        A, B2, Ce = self.A, self.B2, self.Ce
        gg, igg = self.gg, self.igg
        s2, s3 = math.sqrt(self.w2_bar), math.sqrt(self.w3_bar)
        kap = 1.0 / (alb_e + self.eps + self.w3_bar)

        def L5(env):
            Pe, Y, Pi = env["Pe"], env["Y"], env["Pi"]
            M12 = A.T @ Pe - Ce.T @ igg.T @ Y.T
            Z = bm([[-s2 * (Pe @ B2), -s3 * (Y @ igg), -Y @ gg]])
            Wa = bdiag([(1 - env["a1"]) * np.eye(1),
                        (1 - env["a2"]) * np.eye(4),
                        (1 - a3) * Pi])
            return bm([[a * Pe, M12, np.zeros((5, 9))],
                       [M12.T, Pe, Z],
                       [np.zeros((9, 5)), Z.T, Wa]])

        def L6(env):
            Pe, Pi, t2 = env["Pe"], env["Pi"], env["tau2"]
            f1 = tau1 * Pe - Ce.T @ Pi @ Ce
            f2 = 1.0 - tau1 * (al_e + self.eps) - t2 * self.w3_bar
            return bm([[f1, -Ce.T @ Pi, np.zeros((5, 1))],
                       [-Pi @ Ce, t2 * np.eye(4) - Pi, np.zeros((4, 1))],
                       [np.zeros((1, 5)), np.zeros((1, 4)), f2]])

        def L7(env):
            Pe, Y = env["Pe"], env["Y"]
            M12 = A.T @ Pe - Ce.T @ Y.T
            return bm([[c * Pe, M12, np.zeros((5, 1)), np.zeros((5, 4))],
                       [M12.T, Pe, -s2 * (Pe @ B2), -s3 * Y],
                       [np.zeros((1, 5)), -s2 * (B2.T @ Pe),
                        (1 - env["c1"]) * np.eye(1), np.zeros((1, 4))],
                       [np.zeros((4, 5)), -s3 * Y.T, np.zeros((4, 1)),
                        (1 - env["c2"]) * np.eye(4)]])

        def L8(env):
            Pe, Pi = env["Pe"], env["Pi"]
            return bm([[kap * Pe - Ce.T @ Pi @ Ce, -Ce.T @ Pi],
                       [-Pi @ Ce, kap * np.eye(4) - Pi]])

        return LmiProgram(
            name=f"estimator_monitor(a={a:g},c={c:g},a3={a3:g},tau1={tau1:g})",
            scalars=[ScalarVar("a1", _EPS_OPEN, 1 - _EPS_OPEN),
                     ScalarVar("a2", _EPS_OPEN, 1 - _EPS_OPEN),
                     ScalarVar("c1", _EPS_OPEN, 1 - _EPS_OPEN),
                     ScalarVar("c2", _EPS_OPEN, 1 - _EPS_OPEN),
                     ScalarVar("tau2", 0.0, None)],
            matrices=[MatrixVar("Pe", 5), MatrixVar("Pi", 4),
                      MatrixVar("Y", (5, 4), spd=False)],
            psd_blocks=[("L5", L5), ("L6", L6), ("L7", L7), ("L8", L8)],
            linear_ineqs=[
                ("a_budget", lambda env: env["a1"] + env["a2"] + a3 - a),
                ("c_budget", lambda env: env["c1"] + env["c2"] - c),
            ],
            logdet_weights={"Pe": self.alpha1, "Pi": self.alpha2},
            psd_margin=self.psd_margin,
        )


@dataclass(frozen=True)
class MonitorGivenGainFamily:
    """Monitor for a fixed estimator gain: maximize log det Pi subject to the
    attack-free reach block and the residual containment block."""

    A: np.ndarray
    B2: np.ndarray
    Ce: np.ndarray
    L: np.ndarray
    w2_bar: float
    w3_bar: float
    eps: float
    psd_margin: float = PSD_MARGIN

    def build(self, scalars: dict) -> LmiProgram:
        c = scalars["c"]
        alb_e = alpha_bar_inf_e(c)
        A, B2, Ce, L = self.A, self.B2, self.Ce, self.L
        s2, s3 = math.sqrt(self.w2_bar), math.sqrt(self.w3_bar)
        kap = 1.0 / (alb_e + self.eps + self.w3_bar)

        def L3(env):
            Pe = env["Pe"]
            M12 = A.T @ Pe - Ce.T @ L.T @ Pe
            return bm([[c * Pe, M12, np.zeros((5, 1)), np.zeros((5, 4))],
                       [M12.T, Pe, -s2 * (Pe @ B2), -s3 * (Pe @ L)],
                       [np.zeros((1, 5)), -s2 * (B2.T @ Pe),
                        (1 - env["c1"]) * np.eye(1), np.zeros((1, 4))],
                       [np.zeros((4, 5)), -s3 * (L.T @ Pe), np.zeros((4, 1)),
                        (1 - env["c2"]) * np.eye(4)]])

        def L4(env):
            Pe, Pi = env["Pe"], env["Pi"]
            return bm([[kap * Pe - Ce.T @ Pi @ Ce, -Ce.T @ Pi],
                       [-Pi @ Ce, kap * np.eye(4) - Pi]])

        return LmiProgram(
            name=f"monitor_given_gain(c={c:g})",
            scalars=[ScalarVar("c1", _EPS_OPEN, 1 - _EPS_OPEN),
                     ScalarVar("c2", _EPS_OPEN, 1 - _EPS_OPEN)],
            matrices=[MatrixVar("Pe", 5), MatrixVar("Pi", 4)],
            psd_blocks=[("L3", L3), ("L4", L4)],
            linear_ineqs=[("c_budget", lambda env: env["c1"] + env["c2"] - c)],
            logdet_weights={"Pi": 1.0},
            psd_margin=self.psd_margin,
        )


@dataclass(frozen=True)
class ControllerFamily:
    """Controller program: certificate restricted to diag(X, x~) and gain
    handled through K~ = x~ K, which makes every block affine."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    a_u: float
    b_u: float
    C: np.ndarray
    Ce: np.ndarray
    Gp: np.ndarray
    u_bar: float
    w1_bar: float
    w2_bar: float
    w3_bar: float
    Pi: np.ndarray
    Pe: np.ndarray
    alpha_e: float       # asymptotic level of the error certificate
    eps: float
    lambda_max: float
    tau: float
    psd_margin: float = PSD_MARGIN

    def build(self, scalars: dict) -> LmiProgram:
        a = scalars["a"]
        A, B1, B2, C, Ce, Gp = self.A, self.B1, self.B2, self.C, self.Ce, self.Gp
        au, bu, lam, tau = self.a_u, self.b_u, self.lambda_max, self.tau
        # unit-ball channel factors (all weights are data here)
        s1 = math.sqrt(self.u_bar)
        sd = math.sqrt(self.w1_bar)
        s2 = math.sqrt(self.w2_bar)
        s3 = math.sqrt(self.w3_bar)
        R5 = np.linalg.inv(np.linalg.cholesky(symmetrize(self.Pi)).T)
        W6 = symmetrize(self.Pe) / (self.alpha_e + self.eps)
        R6 = np.linalg.inv(np.linalg.cholesky(W6).T)
        dims = [1, 2, 1, 4, 4, 5]
        ptot = sum(dims)
        delta = 1e-8

        def PA(env):
            X, xt, Kt = env["X"], env["xt"], env["Kt"]
            return bm([[X @ A, X @ B1], [bu * (Kt @ C), au * xt]])

        def PB(env):
            X, xt, Kt = env["X"], env["xt"], env["Kt"]
            top = bm([[s1 * (X @ B2), np.zeros((5, ptot - 1))]])
            bot = bm([[s1 * bu * xt, sd * bu * Kt, s2 * bu * xt,
                       -s3 * bu * (Kt @ Gp), bu * (Kt @ Gp @ R5),
                       -bu * (Kt @ Gp @ Ce @ R6)]])
            return bm([[top], [bot]])

        def block(env):
            X, xt = env["X"], env["xt"]
            Pz = bdiag([X, xt])
            pa, pb = PA(env), PB(env)
            Wa = bdiag([(1 - env[f"a{i + 1}"]) * np.eye(d)
                        for i, d in enumerate(dims)])
            return bm([[a * Pz, pa.T, np.zeros((6, ptot))],
                       [pa, Pz, pb],
                       [np.zeros((ptot, 6)), pb.T, Wa]])

        def budget(env):
            return sum(env[f"a{i + 1}"] for i in range(6)) - a

        kd_floor = -2.0 * lam - 3.0 * tau * lam ** 2
        # decay < lam for the companion cubic == shifted polynomial Hurwitz;
        # the two floor bounds cover the coefficient signs, and the product
        # condition a1*a2 > tau*a0 of the Routh table must hold as well:
        # (k_d + 2 lam + 3 tau lam^2)(1 + 3 tau lam)
        #     > tau (k_p + lam k_d + lam^2 + tau lam^3)
        c2 = 1.0 + 3.0 * tau * lam

        def hurwitz_cross(env):
            kp_t, kd_t = env["Kt"][0, 0], env["Kt"][0, 1]
            xt = env["xt"][0, 0]
            a1 = kd_t + (2.0 * lam + 3.0 * tau * lam ** 2) * xt
            a0 = kp_t + lam * kd_t + (lam ** 2 + tau * lam ** 3) * xt
            return a1 * c2 - tau * a0 - delta

        ineqs = [
            ("rate_budget", budget),
            ("kp_pos", lambda env: env["Kt"][0, 0] - delta),
            ("kd_pos", lambda env: env["Kt"][0, 1] - delta),
            ("kd_gt_kp_tau", lambda env: env["Kt"][0, 1] - tau * env["Kt"][0, 0] - delta),
            ("kd_decay_floor", lambda env: env["Kt"][0, 1] - kd_floor * env["xt"][0, 0] - delta),
            ("kd_cap", lambda env: env["xt"][0, 0] / (3.0 * tau) - env["Kt"][0, 1] - delta),
            ("kp_decay_floor", lambda env: env["Kt"][0, 0] + lam * env["Kt"][0, 1]
             + (lam ** 2 + tau * lam ** 3) * env["xt"][0, 0] - delta),
            ("hurwitz_cross", hurwitz_cross),
        ]

        return LmiProgram(
            name=f"controller(a={a:g})",
            scalars=[ScalarVar(f"a{i + 1}", _EPS_OPEN, 1 - _EPS_OPEN) for i in range(6)],
            matrices=[MatrixVar("X", 5), MatrixVar("xt", 1),
                      MatrixVar("Kt", (1, 2), spd=False)],
            psd_blocks=[("reach_lmi", block)],
            linear_ineqs=ineqs,
            logdet_weights={"X": 1.0, "xt": 1.0},
            psd_margin=self.psd_margin,
        )


@dataclass
class EstimatorMonitorResult:
    L: np.ndarray
    Pi: np.ndarray
    P_e: np.ndarray
    scalars: dict            # a, c, a3, tau1, a1, a2, c1, c2, tau2, eps
    alpha_inf_e: float
    alpha_bar_inf_e: float
    objective: float
    f2: float
    verification: sdp.VerifyReport
    evaluations: list = field(default_factory=list)


@dataclass
class MonitorResult:
    Pi: np.ndarray
    P_e: np.ndarray
    scalars: dict
    alpha_bar_inf_e: float
    objective: float
    verification: sdp.VerifyReport


@dataclass
class ControllerResult:
    K: np.ndarray
    P_zeta: np.ndarray
    X: np.ndarray
    x_tilde: float
    K_tilde: np.ndarray
    scalars: dict
    lambda_max: float
    alpha_inf_zeta: float
    objective: float
    verification: sdp.VerifyReport


def _estimator_family(plant: DiscretePlant, bounds: NoiseBounds, weights, eps,
                      psd_margin) -> EstimatorMonitorFamily:
    a1w, a2w = weights
    if not (a1w > 0 and a2w > 0):
        raise ValueError("objective weights must be positive")
    if abs(a1w + a2w - 1.0) > 1e-12:
        raise ValueError("objective weights must sum to one")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return EstimatorMonitorFamily(
        A=plant.A, B2=plant.B2, Ce=plant.C_e, gg=plant.gg, igg=plant.igg,
        w2_bar=bounds.w2_bar, w3_bar=bounds.w3_bar,
        alpha1=a1w, alpha2=a2w, eps=eps, psd_margin=psd_margin)


def _refined_axes(winners: dict, spacings: dict, lo=0.0, hi=1.0) -> dict:
    axes = {}
    for name, w in winners.items():
        s = spacings[name] / 2.0
        axes[name] = tuple(sorted({v for v in (w - s, w, w + s) if lo < v < hi}))
    return axes


def synthesize_estimator_monitor(plant: DiscretePlant, bounds: NoiseBounds,
                                 weights=(0.95, 0.05), eps: float = 1e-3,
                                 a_grid=A_GRID, c_grid=C_GRID,
                                 a3_grid=A3_GRID, tau1_grid=TAU1_GRID,
                                 refinement_rounds: int = 1,
                                 psd_margin: float = PSD_MARGIN,
                                 threads=None) -> EstimatorMonitorResult:
    """Staged grid search: sweep (a, c) with (a3, tau1) pinned, sweep
    (a3, tau1) at the winner, then one halved-spacing refinement around all
    four winners."""
    family = _estimator_family(plant, bounds, weights, eps, psd_margin)
    tau1_pre = min(tau1_grid)
    stage1 = grid_search(family, GridSpec(
        axes={"a": tuple(a_grid), "c": tuple(c_grid),
              "a3": (0.5,), "tau1": (tau1_pre,)},
        refinement_rounds=0), threads=threads)
    if not stage1.feasible:
        raise InfeasibleSynthesisError("estimator/monitor stage 1", stage1.evaluations)
    w = dict(stage1.best_scalars)
    stage2 = grid_search(family, GridSpec(
        axes={"a": (w["a"],), "c": (w["c"],),
              "a3": tuple(a3_grid), "tau1": tuple(tau1_grid)},
        refinement_rounds=0), threads=threads)
    best, best_scalars = stage1.best, stage1.best_scalars
    evaluations = list(stage1.evaluations) + list(stage2.evaluations)
    if stage2.feasible and stage2.best.objective <= best.objective:
        best, best_scalars = stage2.best, stage2.best_scalars
    spacings = {
        "a": _axis_spacing(a_grid), "c": _axis_spacing(c_grid),
        "a3": _axis_spacing(a3_grid), "tau1": _axis_spacing(tau1_grid)}
    for _ in range(refinement_rounds):
        axes = _refined_axes(best_scalars, spacings)
        stage3 = grid_search(family, GridSpec(axes=axes, refinement_rounds=0),
                             threads=threads)
        evaluations.extend(stage3.evaluations)
        if stage3.feasible and stage3.best.objective <= best.objective:
            best, best_scalars = stage3.best, stage3.best_scalars
        spacings = {k: s / 2.0 for k, s in spacings.items()}
    return _pack_estimator_result(best, best_scalars, eps, bounds, evaluations)


def _axis_spacing(axis) -> float:
    vals = sorted(axis)
    return min((b - a for a, b in zip(vals, vals[1:])), default=0.05)


def _pack_estimator_result(best, best_scalars, eps, bounds,
                           evaluations) -> EstimatorMonitorResult:
    vals = best.assignment
    Pe, Pi, Y = vals["Pe"], vals["Pi"], vals["Y"]
    L = np.linalg.solve(Pe, Y)
    a, c = best_scalars["a"], best_scalars["c"]
    scalars = {**best_scalars, "a1": vals["a1"], "a2": vals["a2"],
               "c1": vals["c1"], "c2": vals["c2"], "tau2": vals["tau2"],
               "eps": eps}
    f2 = (1.0 - best_scalars["tau1"] * (alpha_inf_e(a) + eps)
          - vals["tau2"] * bounds.w3_bar)
    return EstimatorMonitorResult(
        L=L, Pi=Pi, P_e=Pe, scalars=scalars,
        alpha_inf_e=alpha_inf_e(a), alpha_bar_inf_e=alpha_bar_inf_e(c),
        objective=best.objective, f2=f2, verification=best.verification,
        evaluations=[(e.scalars, e.status, e.objective) for e in evaluations])


class InfeasibleSynthesisError(RuntimeError):
    def __init__(self, stage: str, evaluations):
        statuses = {}
        for e in evaluations:
            statuses[e.status] = statuses.get(e.status, 0) + 1
        super().__init__(f"no feasible design in {stage}; statuses: {statuses}")
        self.evaluations = evaluations


def synthesize_monitor_given_L(plant: DiscretePlant, bounds: NoiseBounds, L,
                               eps: float = 1e-3, c_grid=C_GRID,
                               refinement_rounds: int = 1,
                               psd_margin: float = PSD_MARGIN,
                               threads=None) -> MonitorResult:
    family = MonitorGivenGainFamily(
        A=plant.A, B2=plant.B2, Ce=plant.C_e, L=np.asarray(L, dtype=float),
        w2_bar=bounds.w2_bar, w3_bar=bounds.w3_bar, eps=eps,
        psd_margin=psd_margin)
    res = grid_search(family, GridSpec(axes={"c": tuple(c_grid)},
                                       refinement_rounds=refinement_rounds),
                      threads=threads)
    if not res.feasible:
        raise InfeasibleSynthesisError("monitor_given_gain", res.evaluations)
    vals = res.best.assignment
    c = res.best_scalars["c"]
    return MonitorResult(Pi=vals["Pi"], P_e=vals["Pe"],
                         scalars={**res.best_scalars, "c1": vals["c1"],
                                  "c2": vals["c2"], "eps": eps},
                         alpha_bar_inf_e=alpha_bar_inf_e(c),
                         objective=res.best.objective,
                         verification=res.best.verification)


def synthesize_controller(plant: DiscretePlant, bounds: NoiseBounds,
                          Pi, P_e, alpha_e: float, eps: float = 1e-3,
                          lambda_max: float = -0.01,
                          a_grid=REACH_A_GRID, refinement_rounds: int = 1,
                          psd_margin: float = PSD_MARGIN,
                          threads=None) -> ControllerResult:
    tau = plant.params.tau
    if not lambda_max < 0:
        raise ValueError("lambda_max must be negative")
    if not tau < -1.0 / (3.0 * lambda_max):
        raise ValueError("tau must satisfy tau < -1/(3 lambda_max)")
    family = ControllerFamily(
        A=plant.A, B1=plant.B1, B2=plant.B2, a_u=plant.a_u, b_u=plant.b_u,
        C=plant.C, Ce=plant.C_e, Gp=plant.Gamma_pinv,
        u_bar=bounds.u_bar, w1_bar=bounds.w1_bar, w2_bar=bounds.w2_bar,
        w3_bar=bounds.w3_bar, Pi=np.asarray(Pi, dtype=float),
        Pe=np.asarray(P_e, dtype=float), alpha_e=alpha_e, eps=eps,
        lambda_max=lambda_max, tau=tau, psd_margin=psd_margin)
    res = grid_search(family, GridSpec(axes={"a": tuple(a_grid)},
                                       refinement_rounds=refinement_rounds),
                      threads=threads)
    if not res.feasible:
        raise InfeasibleSynthesisError("controller", res.evaluations)
    vals = res.best.assignment
    X, xt, Kt = vals["X"], float(vals["xt"][0, 0]), vals["Kt"]
    K = Kt / xt
    P_zeta = np.block([[X, np.zeros((5, 1))],
                       [np.zeros((1, 5)), np.array([[xt]])]])
    a = res.best_scalars["a"]
    scalars = {"a": a, **{f"a{i}": vals[f"a{i}"] for i in range(1, 7)}, "eps": eps}
    return ControllerResult(
        K=K, P_zeta=P_zeta, X=X, x_tilde=xt, K_tilde=Kt, scalars=scalars,
        lambda_max=lambda_max, alpha_inf_zeta=alpha_inf_zeta(a),
        objective=res.best.objective, verification=res.best.verification)


def error_reach_family(plant: DiscretePlant, bounds: NoiseBounds, L, Pi,
                       psd_margin: float = PSD_MARGIN) -> sdp.ReachProgramFamily:
    """Reach certificate of the estimation error driven by the channel noise,
    the sensor noise, and the monitor-bounded residual, for fixed (L, Pi)."""
    L = np.asarray(L, dtype=float)
    A_err = plant.A - L @ plant.igg @ plant.C_e
    B_list = (-plant.B2, -L @ plant.igg, -L @ plant.gg)
    W_list = (np.array([[1.0 / bounds.w2_bar]]), np.eye(4) / bounds.w3_bar,
              symmetrize(np.asarray(Pi, dtype=float)))
    return sdp.ReachProgramFamily(A=A_err, B_list=B_list, W_list=W_list,
                                  psd_margin=psd_margin, name="error_reach")


def error_reach_given_design(plant: DiscretePlant, bounds: NoiseBounds, L, Pi,
                             a_grid=REACH_A_GRID, refinement_rounds: int = 1,
                             psd_margin: float = PSD_MARGIN, threads=None):
    """Solve the error-reach certificate over the a-grid; returns
    (P_e, a, alpha_inf_e, solution)."""
    family = error_reach_family(plant, bounds, L, Pi, psd_margin)
    res = grid_search(family, GridSpec(axes={"a": tuple(a_grid)},
                                       refinement_rounds=refinement_rounds),
                      threads=threads)
    if not res.feasible:
        raise InfeasibleSynthesisError("error_reach", res.evaluations)
    a = res.best_scalars["a"]
    return res.best.assignment["P"], a, alpha_inf_e(a), res.best


def eig_Ae(K, tau: float) -> np.ndarray:
    """Eigenvalues of the tracking-error companion matrix
    [[0,1,0],[0,0,1],[-kp/tau, -kd/tau, -1/tau]]."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    kp, kd = np.asarray(K, dtype=float).ravel()
    A_e = np.array([[0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                    [-kp / tau, -kd / tau, -1.0 / tau]])
    return np.linalg.eigvals(A_e)


def gain_constraint_report(K, tau: float, lambda_max: float) -> dict:
    """Scalar gain constraints and the companion-spectrum decay check."""
    kp, kd = np.asarray(K, dtype=float).ravel()
    eigs = eig_Ae(K, tau)
    return {
        "kp": kp,
        "kd": kd,
        "kp_pos": kp > 0,
        "kd_pos": kd > 0,
        "kd_gt_kp_tau": kd > kp * tau,
        "kd_below_cap": kd < 1.0 / (3.0 * tau),
        "kd_above_decay_floor": kd > -2.0 * lambda_max - 3.0 * tau * lambda_max ** 2,
        "kp_above_decay_floor": kp > -lambda_max * kd - lambda_max ** 2 - tau * lambda_max ** 3,
        "hurwitz_cross": ((kd + 2.0 * lambda_max + 3.0 * tau * lambda_max ** 2)
                          * (1.0 + 3.0 * tau * lambda_max)
                          > tau * (kp + lambda_max * kd + lambda_max ** 2
                                   + tau * lambda_max ** 3)),
        "max_re_eig": float(np.max(eigs.real)),
        "decay_ok": float(np.max(eigs.real)) < lambda_max,
    }


def k_bar_star(c: float, P_e, alpha_bar_inf: float, eps: float, e1) -> int:
    """First step index from which the attack-free residual is certified
    inside the monitor set, for the realized initial error e1."""
    e1 = np.asarray(e1, dtype=float).ravel()
    v1 = float(e1 @ np.asarray(P_e) @ e1)
    if v1 - alpha_bar_inf <= eps:
        return 1
    return 1 + int(math.ceil(math.log(eps / (v1 - alpha_bar_inf)) / math.log(c)))
