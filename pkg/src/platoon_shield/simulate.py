"""Discrete-time closed-loop simulation of an m-vehicle platoon with
estimator, monitor, bounded disturbances, and pluggable attack policies.

Vehicle 1 receives the lead input profile as its feedforward; vehicle i > 1
receives vehicle i-1's filtered control command.  The plant update uses the
true feedforward value; the controller and estimator use the transmitted copy
perturbed by channel noise, matching the update equations of the model
module.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .lti import UnstableSimulationError
from .model import DiscretePlant, NoiseBounds, build_closed_loop


@dataclass(frozen=True)
class LeadProfile:
    kind: str = "exp_decay"   # constant | exp_decay | samples
    amplitude: float = 2.0
    rate: float = 0.1
    samples: tuple = ()

    def value(self, k: int) -> float:
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "exp_decay":
            return self.amplitude * math.exp(-self.rate * k)
        if self.kind == "samples":
            return self.samples[k] if k < len(self.samples) else 0.0
        raise ValueError(f"unknown lead profile kind {self.kind!r}")


@dataclass(frozen=True)
class AttackPolicy:
    kind: str = "none"        # none | random_bounded | constant | stealthy_greedy
    gamma: float = 1.0        # stealth margin in (0, 1]
    target: tuple = (-1.0, -0.5, 0.0, 0.0, 0.0)  # x-space push direction
    bound: float = 5.0        # for random_bounded
    value: tuple = (5.0, 5.0)  # for constant
    vehicles: tuple = ()      # attacked vehicle indices (1-based); empty = last

    def __post_init__(self):
        if self.kind not in ("none", "random_bounded", "constant", "stealthy_greedy"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("stealth margin gamma must be in (0, 1]")


@dataclass(frozen=True)
class SimConfig:
    steps: int = 500
    seed: int = 0
    m: int = 2
    lead: LeadProfile = field(default_factory=LeadProfile)
    attack: AttackPolicy = field(default_factory=AttackPolicy)
    wd_halfwidth: float = 0.1
    wu_halfwidth: float = 0.01
    we_halfwidth: float | None = None   # default sqrt(w3_bar / 4)
    x0: tuple = (0.0, 30.0, 0.0, 0.0, 0.0)
    xhat0: str | tuple = "same"         # same | random | explicit 5-tuple
    xhat0_spread: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.m < 1:
            raise ValueError("platoon length must be >= 1")


@dataclass
class SimTrace:
    Ts: float
    x: np.ndarray        # (m, T+1, 5)
    xhat: np.ndarray     # (m, T+1, 5)
    u: np.ndarray        # (m, T+1)
    y: np.ndarray        # (m, T, 2)
    ye: np.ndarray       # (m, T, 4)
    r: np.ndarray        # (m, T, 4)
    z: np.ndarray        # (m, T)
    alarm: np.ndarray    # (m, T) bool
    delta: np.ndarray    # (m, T, 2)
    eps_ctrl: np.ndarray  # (m, T)
    u_ff: np.ndarray     # (m, T) true feedforward seen by each vehicle
    wd: np.ndarray       # (m, T, 2)
    wu: np.ndarray       # (m, T)
    we: np.ndarray       # (m, T, 4)
    clip_count: int
    collisions: np.ndarray  # (m, T) bool, reconstructed spacing < 0

    @property
    def steps(self) -> int:
        return self.z.shape[1]

    @property
    def m(self) -> int:
        return self.z.shape[0]

    def e(self) -> np.ndarray:
        return self.x - self.xhat

    def zeta(self) -> np.ndarray:
        """Extended state samples, shape (m, T+1, 6)."""
        return np.concatenate([self.x, self.u[..., None]], axis=2)


def _clip_to_bound(w: np.ndarray, bound: float):
    """Scale w back onto {w'w <= bound} if the uniform sample left it."""
    q = float(w @ w)
    if q > bound:
        return w * math.sqrt(bound / q), 1
    return w, 0


def stealthy_attack_step(e, w_e, Pi, B5, target, gamma: float,
                         plant: DiscretePlant, g_tilde=None):
    """One-step greedy stealthy injection.

    Picks the residual direction maximizing the one-step push of the extended
    state along `target` (a 6-vector), then back-substitutes the injection and
    rescales the reachable residual component so the realized detector value
    stays at or below gamma even with the uncontrollable error/noise part.
    A residual-space direction can also be supplied directly via g_tilde.
    Returns (delta, r_desired).
    """
    e = np.asarray(e, dtype=float).ravel()
    w_e = np.asarray(w_e, dtype=float).ravel()
    Ce, gg, igg, Gp = plant.C_e, plant.gg, plant.igg, plant.Gamma_pinv
    if g_tilde is None:
        g_tilde = np.asarray(B5, dtype=float).T @ np.asarray(target, dtype=float).ravel()
    else:
        g_tilde = np.asarray(g_tilde, dtype=float).ravel()
    base = Ce @ e + w_e
    if not np.any(g_tilde):
        return Gp @ (-base), np.zeros(4)
    Pinv_g = np.linalg.solve(Pi, g_tilde)
    r_star = math.sqrt(gamma) * Pinv_g / math.sqrt(float(g_tilde @ Pinv_g))
    c_perp = igg @ base
    r_img = gg @ r_star
    aq = float(r_img @ Pi @ r_img)
    bq = float(r_img @ Pi @ c_perp)
    cq = float(c_perp @ Pi @ c_perp)
    if aq <= 0.0:
        beta = 0.0
    elif cq <= gamma:
        beta = (-bq + math.sqrt(max(bq * bq + aq * (gamma - cq), 0.0))) / aq
        beta = max(beta, 0.0) * (1.0 - 1e-9)  # stay strictly below the margin
    else:
        beta = max(-bq / aq, 0.0)  # cannot reach gamma; minimize the statistic
    r_des = beta * r_star
    delta = Gp @ (r_des - base)
    return delta, r_des


def _xhat_init(config: SimConfig, rng) -> np.ndarray:
    x0 = np.asarray(config.x0, dtype=float)
    if isinstance(config.xhat0, str):
        if config.xhat0 == "same":
            return x0.copy()
        if config.xhat0 == "random":
            return x0 + rng.uniform(-config.xhat0_spread, config.xhat0_spread, size=5)
        raise ValueError(f"unknown xhat0 spec {config.xhat0!r}")
    return np.asarray(config.xhat0, dtype=float)


def simulate(plant: DiscretePlant, L, Pi, K, config: SimConfig,
             bounds: NoiseBounds | None = None) -> SimTrace:
    """Run the closed loop for config.steps steps; deterministic per seed."""
    bounds = bounds or NoiseBounds()
    L = np.asarray(L, dtype=float).reshape(5, 4)
    Pi = np.asarray(Pi, dtype=float).reshape(4, 4)
    K = np.asarray(K, dtype=float).reshape(1, 2)
    m, T = config.m, config.steps
    A, B1, B2 = plant.A, plant.B1.ravel(), plant.B2.ravel()
    C, Ce = plant.C, plant.C_e
    au, bu = plant.a_u, plant.b_u
    cl = build_closed_loop(plant, K)
    attacked = set(config.attack.vehicles) if config.attack.vehicles else {m}
    we_half = config.we_halfwidth
    if we_half is None:
        we_half = math.sqrt(bounds.w3_bar / 4.0)

    rng = np.random.default_rng(config.seed)
    x = np.tile(np.asarray(config.x0, dtype=float), (m, 1))
    xhat = np.vstack([_xhat_init(config, rng) for _ in range(m)])
    u = np.zeros(m)

    tr = SimTrace(
        Ts=plant.params.Ts,
        x=np.zeros((m, T + 1, 5)), xhat=np.zeros((m, T + 1, 5)),
        u=np.zeros((m, T + 1)),
        y=np.zeros((m, T, 2)), ye=np.zeros((m, T, 4)), r=np.zeros((m, T, 4)),
        z=np.zeros((m, T)), alarm=np.zeros((m, T), dtype=bool),
        delta=np.zeros((m, T, 2)), eps_ctrl=np.zeros((m, T)),
        u_ff=np.zeros((m, T)),
        wd=np.zeros((m, T, 2)), wu=np.zeros((m, T)), we=np.zeros((m, T, 4)),
        clip_count=0, collisions=np.zeros((m, T), dtype=bool),
    )
    tr.x[:, 0], tr.xhat[:, 0], tr.u[:, 0] = x, xhat, u
    clip_count = 0
    pol = config.attack
    target6 = cl.Acal.T @ np.concatenate([np.asarray(pol.target, dtype=float), [0.0]])

    for k in range(T):
        u_prev = u.copy()  # step-k control states, used as feedforward
        x_new = np.empty_like(x)
        xhat_new = np.empty_like(xhat)
        u_new = np.empty_like(u)
        for i in range(m):
            u_ff = config.lead.value(k) if i == 0 else u_prev[i - 1]
            wd = rng.uniform(-config.wd_halfwidth, config.wd_halfwidth, size=2)
            wd, c1 = _clip_to_bound(wd, bounds.w1_bar)
            wu = float(rng.uniform(-config.wu_halfwidth, config.wu_halfwidth))
            if wu * wu > bounds.w2_bar:
                wu = math.copysign(math.sqrt(bounds.w2_bar), wu)
                clip_count += 1
            we = rng.uniform(-we_half, we_half, size=4)
            we, c2 = _clip_to_bound(we, bounds.w3_bar)
            clip_count += c1 + c2

            delta = np.zeros(2)
            if (i + 1) in attacked:
                if pol.kind == "random_bounded":
                    delta = rng.uniform(-pol.bound, pol.bound, size=2)
                elif pol.kind == "constant":
                    delta = np.asarray(pol.value, dtype=float)
                elif pol.kind == "stealthy_greedy":
                    delta, _ = stealthy_attack_step(
                        x[i] - xhat[i], we, Pi, cl.B5, target6, pol.gamma, plant)

            y = C @ x[i] + wd + delta
            ye = Ce @ x[i] + we + plant.Gamma @ delta
            r = ye - Ce @ xhat[i]
            z = float(r @ Pi @ r)
            Ky = float(K[0] @ y)
            eps_ctrl = Ky + u_ff + wu

            x_new[i] = A @ x[i] + B1 * u[i] + B2 * u_ff
            u_new[i] = au * u[i] + bu * Ky + bu * u_ff + bu * wu
            xhat_new[i] = (A @ xhat[i] + B1 * u[i] + B2 * (u_ff + wu)
                           + L @ (ye - Ce @ xhat[i]))

            tr.y[i, k], tr.ye[i, k], tr.r[i, k] = y, ye, r
            tr.z[i, k], tr.alarm[i, k] = z, z > 1.0
            tr.delta[i, k], tr.eps_ctrl[i, k] = delta, eps_ctrl
            tr.u_ff[i, k] = u_ff
            tr.wd[i, k], tr.wu[i, k], tr.we[i, k] = wd, wu, we
            spacing = x[i][0] + plant.params.s_i + plant.params.h * x[i][1]
            tr.collisions[i, k] = spacing < 0.0
        x, xhat, u = x_new, xhat_new, u_new
        if np.abs(x).max() > 1e9:
            raise UnstableSimulationError(f"state overflow at step {k + 1}")
        tr.x[:, k + 1], tr.xhat[:, k + 1], tr.u[:, k + 1] = x, xhat, u
    tr.clip_count = clip_count
    return tr


@dataclass
class StringStabilityReport:
    norms: dict     # signal -> list of per-vehicle L2 norms
    ratios: dict    # signal -> list of ||z_i|| / ||z_{i-1}|| for i = 2..m

    def to_dict(self):
        return {"norms": self.norms, "ratios": self.ratios}


def _l2(sig: np.ndarray, Ts: float) -> float:
    return math.sqrt(Ts * float(np.sum(sig ** 2)))


def string_stability_report(trace: SimTrace) -> StringStabilityReport:
    """Sample-rate-independent L2 norms and downstream/upstream ratios for the
    spacing error, velocity deviation, and acceleration signals."""
    if trace.m < 2:
        raise ValueError("string stability needs at least two vehicles")
    signals = {
        "e_r": trace.x[:, :, 0],
        "v_dev": trace.x[:, :, 1] - trace.x[:, 0:1, 1],
        "a": trace.x[:, :, 2],
    }
    norms, ratios = {}, {}
    for name, sig in signals.items():
        ns = [_l2(sig[i], trace.Ts) for i in range(trace.m)]
        rs = []
        for i in range(1, trace.m):
            rs.append(ns[i] / ns[i - 1] if ns[i - 1] > 0 else math.inf)
        norms[name], ratios[name] = ns, rs
    return StringStabilityReport(norms, ratios)


def detection_metrics(trace: SimTrace, k_bar: int = 1) -> dict:
    """Alarm statistics per vehicle; k_bar is 1-based (step k corresponds to
    column k-1)."""
    out = {}
    for i in range(trace.m):
        alarms = trace.alarm[i]
        tail = alarms[max(k_bar - 1, 0):]
        first = int(np.argmax(alarms)) + 1 if alarms.any() else None
        out[f"vehicle_{i + 1}"] = {
            "false_alarm_rate_after_k_bar": float(tail.mean()) if tail.size else 0.0,
            "max_z": float(trace.z[i].max()),
            "first_alarm_step": first,
            "k_bar": int(k_bar),
        }
    return out


TRACE_COLUMNS = (
    "vehicle", "step", "e_r", "v", "a", "dv", "a_prev", "u",
    "e_r_hat", "v_hat", "a_hat", "dv_hat", "a_prev_hat",
    "y1", "y2", "ye1", "ye2", "ye3", "ye4",
    "r1", "r2", "r3", "r4", "z", "alarm",
    "delta1", "delta2", "eps_ctrl", "u_ff",
    "wd1", "wd2", "wu", "we1", "we2", "we3", "we4", "spacing", "collision",
)


def trace_to_csv(trace: SimTrace, path, params) -> None:
    """One row per (vehicle, step); columns as in TRACE_COLUMNS."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for i in range(trace.m):
            for k in range(trace.steps):
                x = trace.x[i, k]
                spacing = x[0] + params.s_i + params.h * x[1]
                row = ([i + 1, k + 1] + list(x) + [trace.u[i, k]]
                       + list(trace.xhat[i, k])
                       + list(trace.y[i, k]) + list(trace.ye[i, k])
                       + list(trace.r[i, k])
                       + [trace.z[i, k], int(trace.alarm[i, k])]
                       + list(trace.delta[i, k])
                       + [trace.eps_ctrl[i, k], trace.u_ff[i, k]]
                       + list(trace.wd[i, k]) + [trace.wu[i, k]]
                       + list(trace.we[i, k])
                       + [spacing, int(trace.collisions[i, k])])
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def error_reach_trajectories(plant: DiscretePlant, bounds: NoiseBounds, L, Pi,
                             steps: int, n_runs: int, seed: int,
                             on_boundary: bool = False) -> np.ndarray:
    """Batched estimation-error trajectories driven by admissible channel
    noise, sensor noise, and monitor-bounded residuals (the stealthy-residual
    error dynamics).  Returns (n_runs, steps + 1, 5)."""
    from .lti import mc_reach_sample

    L = np.asarray(L, dtype=float)
    A_err = plant.A - L @ plant.igg @ plant.C_e
    B_list = [-plant.B2, -L @ plant.igg, -L @ plant.gg]
    W_list = [np.array([[1.0 / bounds.w2_bar]]), np.eye(4) / bounds.w3_bar,
              np.asarray(Pi, dtype=float)]
    return mc_reach_sample(A_err, B_list, W_list, steps, n_runs, seed,
                           on_boundary=on_boundary)


def attack_free_residual_run(plant: DiscretePlant, bounds: NoiseBounds, L, Pi,
                             steps: int, seed: int, n_runs: int = 1,
                             e1=None) -> np.ndarray:
    """Detector statistic along attack-free error trajectories; returns a
    (n_runs, steps) array of z values."""
    from .lti import sample_in_ellipsoid

    L = np.asarray(L, dtype=float)
    Pi = np.asarray(Pi, dtype=float)
    A_free = plant.A - L @ plant.C_e
    rng = np.random.default_rng(seed)
    if e1 is None:
        e = np.zeros((n_runs, 5))
    else:
        e1 = np.asarray(e1, dtype=float)
        e = e1.copy() if e1.ndim == 2 else np.tile(e1, (n_runs, 1))
    z = np.zeros((n_runs, steps))
    W_u = np.array([[1.0 / bounds.w2_bar]])
    W_e = np.eye(4) / bounds.w3_bar
    for k in range(steps):
        wu = sample_in_ellipsoid(W_u, n_runs, rng)
        we = sample_in_ellipsoid(W_e, n_runs, rng)
        r = e @ plant.C_e.T + we
        z[:, k] = np.einsum("ij,jk,ik->i", r, Pi, r)
        e = e @ A_free.T - wu @ plant.B2.T - we @ L.T
    return z
