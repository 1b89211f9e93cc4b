"""Small dense LMI programs: modeling, solving, verification, and grid search
over bilinear scalars.

Programs are assembled from builder callables that evaluate either to cvxpy
expressions (when handed decision variables) or to numpy arrays (when handed a
numeric assignment), so the solver path and the a-posteriori verification path
share one definition of every constraint block.

Acceptance of a solution is decided by our own eigenvalue verification at
``feas_tol``, never by the solver status alone: several of the programs in
this package are only tolerance-feasible (the platoon model carries an exact
unit eigenvalue), and interior-point codes stall on them while still holding a
perfectly usable iterate.
"""

from __future__ import annotations

import itertools
import math
import os
import warnings
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
import cvxpy as cp
import cvxpy.settings as _cps
from cvxpy.reductions.solvers.conic_solvers import clarabel_conif as _clarabel_conif

from .lti import symmetrize

# Clarabel reports InsufficientProgress / NumericalError on weakly-feasible
# degenerate programs while still holding a usable iterate; keep the iterate
# and let verification decide.  The matching cvxpy inaccuracy warning is
# silenced for the same reason.
for _k in ("InsufficientProgress", "MaxIterations", "NumericalError"):
    _clarabel_conif.CLARABEL.STATUS_MAP[_k] = _cps.OPTIMAL_INACCURATE
warnings.filterwarnings("ignore", message="Solution may be inaccurate")

DEFAULT_SOLVER = "CLARABEL"
FEAS_TOL = 1e-6
SPD_FLOOR = 1e-8
VAR_CAP = 1e3

# main determinant-maximization pass: accept reduced accuracy, the objective is
# flat along degenerate faces and the gap closes slowly
_SOLVE_OPTS = dict(reduced_tol_gap_rel=0.1, reduced_tol_gap_abs=1e-3,
                   reduced_tol_feas=1e-8, reduced_tol_ktratio=1e-2,
                   max_iter=300)
# polish pass: strongly convex projection, push feasibility hard
_POLISH_OPTS = dict(tol_feas=1e-10, tol_gap_abs=1e-11, tol_gap_rel=1e-11,
                    reduced_tol_gap_rel=1e-5, reduced_tol_gap_abs=1e-7,
                    reduced_tol_feas=1e-9, reduced_tol_ktratio=1e-3,
                    max_iter=300)


def is_expr(x) -> bool:
    return isinstance(x, cp.expressions.expression.Expression)


def _entry(x, shape=None):
    if is_expr(x):
        if x.shape == () or x.shape == (1,):
            return cp.reshape(x, (1, 1), order="F")
        return x
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(-1, 1)
    return x


def bm(rows):
    """Block matrix that works for mixed numpy / cvxpy entries."""
    rows = [[_entry(e) for e in row] for row in rows]
    if any(is_expr(e) for row in rows for e in row):
        return cp.bmat(rows)
    return np.block(rows)


def bdiag(blocks):
    """Block diagonal with conformal zero padding."""
    blocks = [_entry(b) for b in blocks]
    dims = [b.shape[0] for b in blocks]
    rows = []
    for i, bi in enumerate(blocks):
        row = []
        for j, dj in enumerate(dims):
            row.append(bi if i == j else np.zeros((dims[i], dj)))
        rows.append(row)
    return bm(rows)


@dataclass(frozen=True)
class ScalarVar:
    name: str
    lo: float | None = None
    hi: float | None = None


@dataclass(frozen=True)
class MatrixVar:
    name: str
    size: int | tuple
    spd: bool = True
    floor: float = SPD_FLOOR
    cap: float = VAR_CAP


@dataclass
class LmiProgram:
    """Affine-in-variables PSD blocks plus scalar inequalities and a
    (weighted log-det and/or linear) objective."""

    name: str
    scalars: list
    matrices: list
    psd_blocks: list          # [(name, fn(env) -> square symmetric-by-construction)]
    linear_ineqs: list = field(default_factory=list)  # [(name, fn(env) -> scalar, required >= 0)]
    logdet_weights: dict = field(default_factory=dict)  # matrix name -> weight (maximized)
    linear_objective: object = None  # fn(env) -> scalar, minimized
    psd_margin: float = 0.0   # blocks enforced >= -margin * I

    def var_names(self):
        return [s.name for s in self.scalars] + [m.name for m in self.matrices]


@dataclass
class VerifyReport:
    block_min_eigs: dict
    ineq_slacks: dict
    passed: bool
    feas_tol: float

    def worst(self) -> float:
        vals = list(self.block_min_eigs.values()) + list(self.ineq_slacks.values())
        return min(vals) if vals else 0.0


@dataclass
class SdpSolution:
    status: str               # optimal | infeasible | max-iterations
    assignment: dict          # name -> float / ndarray
    objective: float          # minimized value (linear part - sum w*logdet)
    verification: VerifyReport | None
    logdet_history: list = field(default_factory=list)
    infeasibility: float | None = None
    solver_status: str = ""


def _make_cvxpy_env(program: LmiProgram):
    env, cons = {}, []
    for s in program.scalars:
        v = cp.Variable(name=s.name)
        env[s.name] = v
        if s.lo is not None:
            cons.append(v >= s.lo)
        if s.hi is not None:
            cons.append(v <= s.hi)
    for m in program.matrices:
        if m.spd:
            n = m.size
            v = cp.Variable((n, n), symmetric=True, name=m.name)
            cons.append(v >> m.floor * np.eye(n))
            cons.append(v << m.cap * np.eye(n))
        else:
            shape = m.size if isinstance(m.size, tuple) else (m.size, m.size)
            v = cp.Variable(shape, name=m.name)
            cons.append(cp.abs(v) <= m.cap)
        env[m.name] = v
    return env, cons


def _constraints(program: LmiProgram, env):
    cons = []
    for name, fn in program.psd_blocks:
        blk = fn(env)
        n = blk.shape[0]
        cons.append((blk + blk.T) / 2 >> -program.psd_margin * np.eye(n))
    for name, fn in program.linear_ineqs:
        cons.append(fn(env) >= 0)
    return cons


def _values(program: LmiProgram, env) -> dict | None:
    out = {}
    for name in program.var_names():
        v = env[name].value
        if v is None:
            return None
        if np.ndim(v) == 0:
            out[name] = float(v)
        else:
            v = np.asarray(v, dtype=float)
            out[name] = symmetrize(v) if v.ndim == 2 and v.shape[0] == v.shape[1] and _is_spd_var(program, name) else v
    return out


def _is_spd_var(program: LmiProgram, name: str) -> bool:
    return any(m.name == name and m.spd for m in program.matrices)


def true_objective(program: LmiProgram, assignment: dict) -> float:
    """Minimized objective value.  Log-dets are evaluated on the spectrum
    clipped at the variable floor: tolerance-feasible solutions may carry
    eigenvalues a hair below the floor in structurally pinned directions."""
    val = 0.0
    if program.linear_objective is not None:
        val += float(program.linear_objective(assignment))
    for name, w in program.logdet_weights.items():
        floor = next(m.floor for m in program.matrices if m.name == name)
        eigs = np.linalg.eigvalsh(symmetrize(assignment[name]))
        val -= w * float(np.sum(np.log(np.maximum(eigs, floor))))
    return val


def verify(program: LmiProgram, assignment: dict, feas_tol: float = FEAS_TOL) -> VerifyReport:
    """Recompute every constraint block numerically and report minimum
    eigenvalues and scalar slacks."""
    block_min_eigs = {}
    for name, fn in program.psd_blocks:
        blk = np.asarray(fn(assignment), dtype=float)
        block_min_eigs[name] = float(np.linalg.eigvalsh(symmetrize(blk)).min())
    ineq_slacks = {}
    for name, fn in program.linear_ineqs:
        ineq_slacks[name] = float(fn(assignment))
    for s in program.scalars:
        v = assignment[s.name]
        if s.lo is not None:
            ineq_slacks[f"{s.name}>=lo"] = v - s.lo
        if s.hi is not None:
            ineq_slacks[f"{s.name}<=hi"] = s.hi - v
    for m in program.matrices:
        if m.spd:
            P = assignment[m.name]
            block_min_eigs[f"{m.name}-floor"] = float(
                np.linalg.eigvalsh(symmetrize(P)).min() - m.floor)
    passed = (min(block_min_eigs.values(), default=0.0) >= -feas_tol
              and min(ineq_slacks.values(), default=0.0) >= -feas_tol)
    return VerifyReport(block_min_eigs, ineq_slacks, passed, feas_tol)


def _solve_problem(problem: cp.Problem, solver: str, opts: dict) -> str:
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            problem.solve(solver=solver, **opts)
        return problem.status or "none"
    except (cp.SolverError, ValueError, ArithmeticError):
        return "solver_error"


def _max_slack(program: LmiProgram, solver: str):
    """Phase-1 probe: largest uniform slack s with all blocks >= s I."""
    env, cons = _make_cvxpy_env(program)
    s = cp.Variable()
    for name, fn in program.psd_blocks:
        blk = fn(env)
        n = blk.shape[0]
        cons.append((blk + blk.T) / 2 >> s * np.eye(n))
    for name, fn in program.linear_ineqs:
        cons.append(fn(env) >= s)
    cons.append(s <= 1.0)
    problem = cp.Problem(cp.Maximize(s), cons)
    status = _solve_problem(problem, solver, _SOLVE_OPTS)
    if s.value is None:
        return None, None, status
    return float(s.value), _values(program, env), status


def _polish(program: LmiProgram, env, cons, incumbent: dict, solver: str,
            rounds: int, feas_tol: float):
    """Project back onto the constraint set (strongly convex, so the solver
    converges crisply where the determinant pass stalls), keeping the best
    iterate seen; fall back to a guaranteed contraction when projection cannot
    close the gap."""
    best = incumbent
    best_worst = verify(program, best, feas_tol).worst()
    current = incumbent
    for _ in range(rounds):
        if best_worst > -0.2 * feas_tol:
            return best
        terms = []
        for name in program.var_names():
            ref = current[name]
            scale = max(1.0, float(np.max(np.abs(ref))))
            terms.append(cp.sum_squares((env[name] - ref) / scale))
        problem = cp.Problem(cp.Minimize(sum(terms)), cons)
        _solve_problem(problem, solver, _POLISH_OPTS)
        vals = _values(program, env)
        if vals is None:
            break
        current = vals
        worst = verify(program, vals, feas_tol).worst()
        if worst > best_worst:
            best, best_worst = vals, worst
    if best_worst < -feas_tol:
        repaired = _contract_repair(program, best, feas_tol)
        if repaired is not None:
            return repaired
    return best


def _contract_repair(program: LmiProgram, vals: dict, feas_tol: float):
    """Move the matrix variables toward the trivially feasible point (floor
    balls, zero rectangles); constraint blocks are affine in them, so a convex
    combination trades objective for feasibility.  Returns the least
    contraction that verifies, or None."""
    target = dict(vals)
    for m in program.matrices:
        if m.spd:
            target[m.name] = m.floor * np.eye(m.size)
        else:
            target[m.name] = np.zeros_like(np.asarray(vals[m.name]))

    def mix(t):
        out = dict(vals)
        for m in program.matrices:
            out[m.name] = (1 - t) * vals[m.name] + t * target[m.name]
        return out

    if verify(program, mix(1.0), feas_tol).worst() < -0.8 * feas_tol:
        return None
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if verify(program, mix(mid), feas_tol).worst() > -0.5 * feas_tol:
            hi = mid
        else:
            lo = mid
    return mix(hi)


def solve(program: LmiProgram, *, solver: str = DEFAULT_SOLVER,
          feas_tol: float = FEAS_TOL, strategy: str = "native",
          polish_rounds: int = 3, mm_max_iter: int = 20,
          mm_rel_tol: float = 1e-4) -> SdpSolution:
    """Solve an LmiProgram.

    strategy "native" maximizes the weighted log-det objective directly via
    the exponential-cone canonicalization; "mm" runs the sequential
    linearization loop (inner problems are linear-objective SDPs) with a
    backtracking step to keep the true objective monotone.
    """
    env, cons = _make_cvxpy_env(program)
    cons += _constraints(program, env)
    history: list = []
    solver_status = ""

    if not program.logdet_weights:
        obj = cp.Minimize(program.linear_objective(env)) if program.linear_objective \
            else cp.Minimize(0)
        solver_status = _solve_problem(cp.Problem(obj, cons), solver, _SOLVE_OPTS)
        vals = _values(program, env)
    elif strategy == "native":
        terms = [w * cp.log_det(env[name]) for name, w in program.logdet_weights.items()]
        lin = program.linear_objective(env) if program.linear_objective else 0
        solver_status = _solve_problem(cp.Problem(cp.Maximize(sum(terms) - lin), cons),
                                       solver, _SOLVE_OPTS)
        vals = _values(program, env)
        if vals is not None:
            history.append(true_objective(program, vals))
    elif strategy == "mm":
        vals = None
        for it in range(mm_max_iter):
            lin_terms = []
            for name, w in program.logdet_weights.items():
                if vals is None:
                    S = np.eye(_dim_of(program, name))
                else:
                    S = _floored_inverse(vals[name])
                lin_terms.append(w * cp.trace(S @ env[name]))
            lin = program.linear_objective(env) if program.linear_objective else 0
            solver_status = _solve_problem(
                cp.Problem(cp.Maximize(sum(lin_terms) - lin), cons), solver, _SOLVE_OPTS)
            cand = _values(program, env)
            if cand is None:
                break
            if vals is None:
                vals = cand
                history.append(true_objective(program, vals))
                continue
            stepped = _monotone_step(program, vals, cand, history[-1])
            if stepped is None:
                break
            vals, f = stepped
            if history and abs(history[-1] - f) < mm_rel_tol * max(1.0, abs(history[-1])):
                history.append(f)
                break
            history.append(f)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    if vals is None:
        s_star, s_vals, s_status = _max_slack(program, solver)
        if s_star is not None and s_star < -feas_tol:
            return SdpSolution("infeasible", {}, float("inf"), None,
                               infeasibility=-s_star, solver_status=s_status)
        if s_vals is not None:
            vals = s_vals
        else:
            return SdpSolution("infeasible", {}, float("inf"), None,
                               infeasibility=None, solver_status=solver_status)

    vals = _polish(program, env, cons, vals, solver, polish_rounds, feas_tol)
    vals = _floor_clip(program, vals)
    rep = verify(program, vals, feas_tol)
    obj = true_objective(program, vals)
    status = "optimal" if rep.passed else "max-iterations"
    return SdpSolution(status, vals, obj, rep, logdet_history=history,
                       solver_status=solver_status)


def _floor_clip(program: LmiProgram, vals: dict) -> dict:
    """Lift SPD variables back onto their floors: solver tolerance can leave
    eigenvalues a few 1e-8 below, which breaks downstream factorizations.
    The lift only adds mass in near-null directions; verification runs after."""
    out = dict(vals)
    for m in program.matrices:
        if not m.spd:
            continue
        P = symmetrize(out[m.name])
        w, V = np.linalg.eigh(P)
        if w.min() < m.floor:
            out[m.name] = V @ np.diag(np.maximum(w, m.floor)) @ V.T
    return out


def _dim_of(program: LmiProgram, name: str) -> int:
    for m in program.matrices:
        if m.name == name:
            return m.size
    raise KeyError(name)


def _floored_inverse(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(symmetrize(P))
    floor = max(1e-12, 1e-9 * float(w.max()))
    return V @ np.diag(1.0 / np.maximum(w, floor)) @ V.T


def _monotone_step(program, current, candidate, f_current):
    t = 1.0
    for _ in range(30):
        trial = {k: (1 - t) * v + t * candidate[k] for k, v in current.items()}
        f = true_objective(program, trial)
        if f <= f_current + 1e-12:
            return trial, f
        t *= 0.5
    return current, f_current


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    axes: dict                # name -> tuple of floats, strictly inside (lo, hi)
    refinement_rounds: int = 1
    lo: float = 0.0
    hi: float = 1.0

    def points(self):
        names = sorted(self.axes)
        for combo in itertools.product(*(sorted(self.axes[n]) for n in names)):
            yield dict(zip(names, combo))

    def spacing(self):
        out = {}
        for name, vals in self.axes.items():
            vals = sorted(vals)
            out[name] = min((b - a for a, b in zip(vals, vals[1:])), default=0.0)
        return out


@dataclass
class GridPointResult:
    scalars: dict
    status: str
    objective: float
    solution: SdpSolution | None


@dataclass
class GridSearchResult:
    best: SdpSolution | None
    best_scalars: dict | None
    evaluations: list

    @property
    def feasible(self) -> bool:
        return self.best is not None


def _thread_budget(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PLATOON_SHIELD_THREADS")
    if env:
        return max(1, int(env))
    return max(1, (os.cpu_count() or 1))


def _grid_worker(args):
    family, scalars, solve_kwargs = args
    program = family.build(scalars)
    if program is None:
        return GridPointResult(scalars, "pruned", float("inf"), None)
    sol = solve(program, **solve_kwargs)
    keep = sol if sol.status == "optimal" else None
    return GridPointResult(scalars, sol.status, sol.objective, keep)


def _key(scalars: dict):
    return tuple((k, round(v, 12)) for k, v in sorted(scalars.items()))


def grid_search(family, grid: GridSpec, *, threads=None, **solve_kwargs) -> GridSearchResult:
    """Evaluate family.build(scalars) at every grid point, keep the feasible
    point with the lowest objective (ties broken by lexicographically smallest
    scalar tuple), then refine by halving the grid spacing around the winner.

    family.build may return None to prune a point without solving.
    Results are independent of enumeration order and thread count.
    """
    n_threads = _thread_budget(threads)
    evaluations: list = []
    seen = set()

    def run_points(points):
        todo = []
        for p in points:
            k = _key(p)
            if k in seen:
                continue
            seen.add(k)
            todo.append(p)
        todo.sort(key=lambda p: tuple(v for _, v in sorted(p.items())))
        jobs = [(family, p, solve_kwargs) for p in todo]
        if n_threads > 1 and len(jobs) > 1:
            with get_context("fork").Pool(min(n_threads, len(jobs))) as pool:
                results = pool.map(_grid_worker, jobs, chunksize=1)
        else:
            results = [_grid_worker(j) for j in jobs]
        evaluations.extend(results)

    run_points(grid.points())
    spacing = grid.spacing()
    for _ in range(grid.refinement_rounds):
        winner = _select(evaluations)
        if winner is None:
            break
        spacing = {k: s / 2.0 for k, s in spacing.items()}
        refined = [{}]
        for name in sorted(grid.axes):
            w = winner.scalars[name]
            s = spacing[name]
            vals = sorted({v for v in (w - s, w, w + s) if grid.lo < v < grid.hi})
            refined = [dict(r, **{name: v}) for r in refined for v in vals]
        run_points(refined)

    winner = _select(evaluations)
    if winner is None:
        return GridSearchResult(None, None, evaluations)
    return GridSearchResult(winner.solution, winner.scalars, evaluations)


def _select(evaluations):
    feasible = [e for e in evaluations if e.status == "optimal" and e.solution is not None]
    if not feasible:
        return None
    return min(feasible, key=lambda e: (e.objective,
                                        tuple(v for _, v in sorted(e.scalars.items()))))


# ---------------------------------------------------------------------------
# generic reachability-bound program (the 3-block LMI used throughout)
# ---------------------------------------------------------------------------

def normalize_channels(B_list, W_list, balanced: bool = False):
    """Rescale each disturbance channel: w' W w <= 1 becomes v' Wn v <= 1 with
    B absorbed through the Cholesky factor of W.  Exact reformulation.

    With balanced=True the unit-ball form is further rescaled so channels with
    very large input columns (a nearly blind monitor makes the residual ball
    huge) split their dynamic range between the B columns and the W block,
    which keeps the assembled LMI within the solver's equilibration span.
    """
    Bn, Wn, dims = [], [], []
    for B, W in zip(B_list, W_list):
        W = symmetrize(np.atleast_2d(np.asarray(W, dtype=float)))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        R = np.linalg.cholesky(W)
        Bi = B @ np.linalg.inv(R.T)
        d = W.shape[0]
        if balanced:
            s = 1.0 / math.sqrt(max(float(np.linalg.norm(Bi, 2)), 1.0))
            Bn.append(s * Bi)
            Wn.append(s * s * np.eye(d))
        else:
            Bn.append(Bi)
            Wn.append(np.eye(d))
        dims.append(d)
    return Bn, Wn, dims


@dataclass(frozen=True)
class ReachProgramFamily:
    """Invariant-ellipsoid bound for x+ = A x + sum_i B_i w_i, w_i'W_i w_i<=1:
    find P > 0 maximizing log det P subject to the 3-block LMI at decay rate a.
    Scalars a_i share the constraint sum a_i >= a."""

    A: np.ndarray
    B_list: tuple
    W_list: tuple
    psd_margin: float = 0.0
    cap: float = VAR_CAP
    name: str = "reach"

    def build(self, scalars: dict) -> LmiProgram:
        a = scalars["a"]
        A = np.asarray(self.A, dtype=float)
        n = A.shape[0]
        Bn, Wn, dims = normalize_channels(self.B_list, self.W_list, balanced=True)
        Bmat = np.hstack(Bn)
        ptot = Bmat.shape[1]
        N = len(Bn)
        eps = 1e-8
        scalar_vars = [ScalarVar(f"a{i + 1}", eps, 1 - eps) for i in range(N)]

        def block(env):
            P = env["P"]
            Wa = bdiag([(1 - env[f"a{i + 1}"]) * Wn[i] for i in range(N)])
            return bm([
                [a * P, A.T @ P, np.zeros((n, ptot))],
                [P @ A, P, P @ Bmat],
                [np.zeros((ptot, n)), Bmat.T @ P, Wa],
            ])

        def budget(env):
            return sum(env[f"a{i + 1}"] for i in range(N)) - a

        return LmiProgram(
            name=f"{self.name}(a={a:g})",
            scalars=scalar_vars,
            matrices=[MatrixVar("P", n, spd=True, cap=self.cap)],
            psd_blocks=[("reach_lmi", block)],
            linear_ineqs=[("rate_budget", budget)],
            logdet_weights={"P": 1.0},
            psd_margin=self.psd_margin,
        )


def alpha_k(a: float, n_channels: int, v1: float, k) -> np.ndarray:
    """Level sequence of the certified ellipsoid: a^{k-1} * v1 +
    (N - a)(1 - a^{k-1}) / (1 - a), with v1 = z(1)' P z(1)."""
    k = np.asarray(k, dtype=float)
    return a ** (k - 1) * v1 + (n_channels - a) * (1 - a ** (k - 1)) / (1 - a)


def alpha_inf(a: float, n_channels: int) -> float:
    return (n_channels - a) / (1.0 - a)


def dump_program(program: LmiProgram, assignment: dict | None, path):
    """Plain-text dump of variables and numeric constraint blocks for
    cross-checking against an external solver."""
    lines = [f"program {program.name}", f"psd_margin {program.psd_margin!r}"]
    for s in program.scalars:
        val = "" if assignment is None else f" = {assignment[s.name]!r}"
        lines.append(f"scalar {s.name} in [{s.lo!r}, {s.hi!r}]{val}")
    for m in program.matrices:
        lines.append(f"matrix {m.name} size={m.size} spd={m.spd} floor={m.floor!r} cap={m.cap!r}")
        if assignment is not None:
            for row in np.atleast_2d(assignment[m.name]):
                lines.append("  " + " ".join(repr(float(x)) for x in row))
    if assignment is not None:
        for name, fn in program.psd_blocks:
            blk = np.asarray(fn(assignment), dtype=float)
            eig = float(np.linalg.eigvalsh(symmetrize(blk)).min())
            lines.append(f"block {name} min_eig={eig!r}")
            for row in blk:
                lines.append("  " + " ".join(repr(float(x)) for x in row))
        for name, fn in program.linear_ineqs:
            lines.append(f"ineq {name} slack={float(fn(assignment))!r}")
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text
