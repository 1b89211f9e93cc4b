"""Stealthy-reach assessment for a fixed design: extended-state reach
certificate, projection onto the vehicle states, and distance-to-critical
verdict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .lti import (Ellipsoid, HalfSpace, distance_to_halfspace_oracle,
                  distance_to_halfspace_paper, symmetrize)
from .model import (ClosedLoopExtended, DiscretePlant, NoiseBounds,
                    VehicleParams, build_closed_loop)
from .sdp import GridSpec, grid_search
from .synthesis import PSD_MARGIN, REACH_A_GRID, InfeasibleSynthesisError


@dataclass(frozen=True)
class CriticalStates:
    """Union of the collision half-space {-e_r - h v > s_i} and the overspeed
    half-space {v > v_max}."""

    half_spaces: tuple

    @classmethod
    def from_params(cls, params: VehicleParams) -> "CriticalStates":
        collision = HalfSpace(np.array([-1.0, -params.h, 0.0, 0.0, 0.0]), params.s_i)
        overspeed = HalfSpace(np.array([0.0, 1.0, 0.0, 0.0, 0.0]), params.v_max)
        return cls(half_spaces=(collision, overspeed))

    @property
    def names(self):
        return ("collision", "overspeed")


@dataclass
class ReachResult:
    ellipsoid: Ellipsoid      # extended state, level = alpha_inf
    a: float
    rate_scalars: dict
    objective: float
    verification: sdp.VerifyReport
    evaluations: list = field(default_factory=list)

    @property
    def P_zeta(self) -> np.ndarray:
        return self.ellipsoid.P

    @property
    def alpha_inf(self) -> float:
        return self.ellipsoid.alpha


@dataclass
class SafetyVerdict:
    d_inf: float              # verdict distance (reported formula)
    d_inf_oracle: float       # support-function distance
    per_halfspace: dict       # name -> {"formula": float, "oracle": float}
    resilient: bool
    sign_mismatch: bool       # formula and oracle disagree on the verdict sign
    P_x: np.ndarray
    alpha_inf: float

    def to_dict(self) -> dict:
        return {
            "d_inf": self.d_inf,
            "d_inf_oracle": self.d_inf_oracle,
            "per_halfspace": self.per_halfspace,
            "resilient": self.resilient,
            "sign_mismatch": self.sign_mismatch,
            "alpha_inf": self.alpha_inf,
            "P_x": self.P_x.tolist(),
        }


def zeta_reach_family(closed_loop: ClosedLoopExtended, bounds: NoiseBounds,
                      Pi, P_e, alpha_e: float, eps: float,
                      psd_margin: float = PSD_MARGIN) -> sdp.ReachProgramFamily:
    """Stealthy reach certificate of zeta = [x, u]: channels are the
    feedforward input, radar noise, channel noise, sensor noise, the
    monitor-bounded residual, and the certified estimation error."""
    W_list = (np.array([[1.0 / bounds.u_bar]]),
              np.eye(2) / bounds.w1_bar,
              np.array([[1.0 / bounds.w2_bar]]),
              np.eye(4) / bounds.w3_bar,
              symmetrize(np.asarray(Pi, dtype=float)),
              symmetrize(np.asarray(P_e, dtype=float)) / (alpha_e + eps))
    return sdp.ReachProgramFamily(A=closed_loop.Acal,
                                  B_list=tuple(closed_loop.B_list),
                                  W_list=W_list, psd_margin=psd_margin,
                                  name="zeta_reach")


def reach_ellipsoid(closed_loop: ClosedLoopExtended, bounds: NoiseBounds,
                    Pi, P_e, alpha_e: float, eps: float = 1e-3,
                    a_grid=REACH_A_GRID, refinement_rounds: int = 1,
                    psd_margin: float = PSD_MARGIN, threads=None) -> ReachResult:
    family = zeta_reach_family(closed_loop, bounds, Pi, P_e, alpha_e, eps,
                               psd_margin)
    res = grid_search(family, GridSpec(axes={"a": tuple(a_grid)},
                                       refinement_rounds=refinement_rounds),
                      threads=threads)
    if not res.feasible:
        raise InfeasibleSynthesisError("zeta_reach", res.evaluations)
    a = res.best_scalars["a"]
    P = res.best.assignment["P"]
    alpha = sdp.alpha_inf(a, 6)
    rate = {k: v for k, v in res.best.assignment.items() if np.isscalar(v)}
    return ReachResult(ellipsoid=Ellipsoid(P, alpha), a=a, rate_scalars=rate,
                       objective=res.best.objective,
                       verification=res.best.verification,
                       evaluations=[(e.scalars, e.status, e.objective)
                                    for e in res.evaluations])


def project_to_state(P_zeta, alpha: float):
    """Drop the control coordinate: P_x = P1 - P2 P3^{-1} P2', same level."""
    P_zeta = symmetrize(np.asarray(P_zeta, dtype=float))
    if P_zeta.shape != (6, 6):
        raise ValueError("extended certificate must be 6x6")
    P1 = P_zeta[:5, :5]
    P2 = P_zeta[:5, 5:]
    P3 = float(P_zeta[5, 5])
    if not P3 > 0:
        raise ValueError("invalid certificate: control block must be positive")
    P_x = symmetrize(P1 - (P2 @ P2.T) / P3)
    return P_x, alpha


def assess(P_x, alpha_inf: float, criticals: CriticalStates) -> SafetyVerdict:
    """Distance of the projected certificate to each critical half-space.

    The verdict uses the reported distance formula; the support-function
    oracle is computed alongside and any sign disagreement is flagged, never
    reconciled.
    """
    E = Ellipsoid(np.asarray(P_x, dtype=float), alpha_inf)
    per = {}
    for name, hs in zip(criticals.names, criticals.half_spaces):
        per[name] = {
            "formula": distance_to_halfspace_paper(E, hs),
            "oracle": distance_to_halfspace_oracle(E, hs),
        }
    d_inf = min(v["formula"] for v in per.values())
    d_oracle = min(v["oracle"] for v in per.values())
    return SafetyVerdict(
        d_inf=d_inf,
        d_inf_oracle=d_oracle,
        per_halfspace=per,
        resilient=bool(d_inf > 0),
        sign_mismatch=bool((d_inf > 0) != (d_oracle > 0)),
        P_x=E.P,
        alpha_inf=alpha_inf,
    )


def assess_design(plant: DiscretePlant, bounds: NoiseBounds, K, Pi, P_e,
                  alpha_e: float, eps: float = 1e-3, a_grid=REACH_A_GRID,
                  refinement_rounds: int = 1, psd_margin: float = PSD_MARGIN,
                  threads=None):
    """Full chain for a fixed design: reach certificate, projection, verdict.
    Returns (ReachResult, P_x, SafetyVerdict)."""
    cl = build_closed_loop(plant, K)
    reach = reach_ellipsoid(cl, bounds, Pi, P_e, alpha_e, eps=eps,
                            a_grid=a_grid, refinement_rounds=refinement_rounds,
                            psd_margin=psd_margin, threads=threads)
    P_x, alpha = project_to_state(reach.P_zeta, reach.alpha_inf)
    verdict = assess(P_x, alpha, CriticalStates.from_params(plant.params))
    return reach, P_x, verdict
