"""Dense log-barrier solver for smooth convex programs.

The trajectory subproblems are assembled from :class:`SmoothFunction` blocks,
each a smooth scalar with a small support over the decision vector, so the
per-slot structure maps onto the solver directly.  Inequalities are ``g(x) <=
0``; coordinates may be pinned to fixed values and are eliminated before the
Newton system is formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg


class Status(Enum):
    Converged = "converged"
    IterationLimit = "iteration_limit"
    Infeasible = "infeasible"


class NumericalBreakdown(RuntimeError):
    """Newton system could not be solved even with heavy regularization."""


@dataclass
class SolverSettings:
    barrier_t0: float = 1.0
    barrier_factor: float = 10.0
    kkt_tol: float = 1e-6
    max_outer: int = 30
    max_inner: int = 50
    armijo_sigma: float = 0.3
    armijo_beta: float = 0.5


@dataclass
class SolveResult:
    point: np.ndarray
    objective: float
    kkt_residual: float  # certified relative suboptimality bound m/(t*max(1,|f|))
    iterations: int  # total Newton steps across all barrier stages
    status: Status


@dataclass
class SmoothFunction:
    """Scalar function of a few coordinates of the decision vector.

    ``fn(x_sub) -> (value, grad, hess)`` where ``x_sub = x[support]``; ``hess``
    may be None for affine pieces.  ``convex`` documents intent only.
    """

    dim: int
    support: np.ndarray
    fn: Callable[[np.ndarray], tuple]
    convex: bool = True
    name: str = ""

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=int)
        if self.support.size == 0:
            raise ValueError("empty support")
        if self.support.min() < 0 or self.support.max() >= self.dim:
            raise ValueError(f"support out of range for dim={self.dim}")
        if np.unique(self.support).size != self.support.size:
            raise ValueError("support has repeated indices")


def linear(dim: int, idx, coef, const: float = 0.0, name: str = "") -> SmoothFunction:
    """c @ x[idx] + const as a SmoothFunction."""
    coef = np.asarray(coef, dtype=float)

    def fn(xs):
        return const + float(coef @ xs), coef, None

    return SmoothFunction(dim, idx, fn, name=name)


@dataclass
class ConvexProgram:
    dim: int
    objective_terms: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    pins: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in self.pins:
            if not 0 <= k < self.dim:
                raise ValueError(f"pin index {k} out of range")
        for f in list(self.objective_terms) + list(self.constraints):
            if f.dim != self.dim:
                raise ValueError("term dimension mismatch")


def check_gradient(func: SmoothFunction, x_sub, step: float = 1e-6) -> float:
    """Max relative error of the analytic gradient vs central differences."""
    x_sub = np.asarray(x_sub, dtype=float)
    _, g, _ = func.fn(x_sub)
    g = np.asarray(g, dtype=float)
    worst = 0.0
    for i in range(x_sub.size):
        h = step * max(1.0, abs(x_sub[i]))
        xp = x_sub.copy()
        xm = x_sub.copy()
        xp[i] += h
        xm[i] -= h
        fd = (func.fn(xp)[0] - func.fn(xm)[0]) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(1.0, abs(fd), abs(g[i])))
    return worst


class _Assembled:
    """Program with pins eliminated, ready for barrier iterations."""

    def __init__(self, prog: ConvexProgram, x0: np.ndarray, settings: SolverSettings):
        self.prog = prog
        self.n_full = prog.dim
        pinned = sorted(prog.pins)
        self.free = np.array([i for i in range(prog.dim) if i not in prog.pins], dtype=int)
        self.red_pos = np.full(prog.dim, -1, dtype=int)
        self.red_pos[self.free] = np.arange(self.free.size)
        self.x_full = np.asarray(x0, dtype=float).copy()
        for i in pinned:
            self.x_full[i] = prog.pins[i]

        # constraints whose support is entirely pinned are checked once
        self.active = []
        self.pinned_violation = None
        for g in prog.constraints:
            if np.all(self.red_pos[g.support] < 0):
                val = g.fn(self.x_full[g.support])[0]
                if val > settings.kkt_tol:
                    self.pinned_violation = (g.name, val)
            else:
                self.active.append(g)
        self.obj_terms = []
        self.obj_const = 0.0
        for f in prog.objective_terms:
            if np.all(self.red_pos[f.support] < 0):
                self.obj_const += f.fn(self.x_full[f.support])[0]
            else:
                self.obj_terms.append(f)

    def set_free(self, z):
        self.x_full[self.free] = z

    def objective(self, x_full) -> float:
        v = self.obj_const
        for f in self.obj_terms:
            v += f.fn(x_full[f.support])[0]
        return v

    def constraint_values(self, x_full) -> np.ndarray:
        return np.array([g.fn(x_full[g.support])[0] for g in self.active])


def _merit(a: _Assembled, x_full, t: float):
    """t*f + barrier, +inf outside the strict interior."""
    f = a.objective(x_full)
    if not np.isfinite(f):
        return np.inf, f
    gv = a.constraint_values(x_full)
    if gv.size and (not np.all(np.isfinite(gv)) or gv.max() >= 0.0):
        return np.inf, f
    return t * f + (-np.log(-gv).sum() if gv.size else 0.0), f


def _scatter(pos, grad, hess, w, g_sub, h_sub):
    keep = pos >= 0
    p = pos[keep]
    grad[p] += w * np.asarray(g_sub, dtype=float)[keep]
    if h_sub is not None:
        h = np.asarray(h_sub, dtype=float)[np.ix_(keep, keep)]
        hess[np.ix_(p, p)] += w * h


def _newton_dir(H, grad):
    n = H.shape[0]
    if not np.all(np.isfinite(H)) or not np.all(np.isfinite(grad)):
        raise NumericalBreakdown("non-finite Newton system")
    reg = 0.0
    base = 1e-10 * max(1.0, np.trace(H) / n)
    for _ in range(10):
        try:
            c = scipy.linalg.cho_factor(H + reg * np.eye(n), check_finite=False)
            d = scipy.linalg.cho_solve(c, -grad, check_finite=False)
            if np.all(np.isfinite(d)):
                return d
        except scipy.linalg.LinAlgError:
            pass
        reg = base if reg == 0.0 else reg * 100.0
    raise NumericalBreakdown("Cholesky failed at maximum regularization")


def _center(a: _Assembled, t: float, st: SolverSettings) -> int:
    """Damped Newton to the analytic center of t*f + barrier.  Returns steps."""
    nf = a.free.size
    steps = 0
    for _ in range(st.max_inner):
        x = a.x_full
        grad = np.zeros(nf)
        hess = np.zeros((nf, nf))
        fval = a.obj_const
        for f in a.obj_terms:
            v, g_sub, h_sub = f.fn(x[f.support])
            fval += v
            _scatter(a.red_pos[f.support], grad, hess, t, g_sub, h_sub)
        psi = t * fval
        for g in a.active:
            v, g_sub, h_sub = g.fn(x[g.support])
            if not v < 0.0:
                raise NumericalBreakdown(f"iterate left the interior ({g.name})")
            psi += -np.log(-v)
            pos = a.red_pos[g.support]
            g_sub = np.asarray(g_sub, dtype=float)
            _scatter(pos, grad, hess, 1.0 / (-v), g_sub, h_sub)
            keep = pos >= 0
            p = pos[keep]
            gg = g_sub[keep] / v  # grad/(-(-v)) -> rank-one over v^2
            hess[np.ix_(p, p)] += np.outer(gg, gg)

        d = _newton_dir(hess, grad)
        lam2 = float(-grad @ d)
        if lam2 / 2.0 <= max(1e-12, 1e-9 * max(1.0, abs(psi))):
            return steps
        alpha = 1.0
        z = x[a.free]
        accepted = False
        while alpha > 1e-14:
            a.set_free(z + alpha * d)
            psi_try, _ = _merit(a, a.x_full, t)
            if psi_try <= psi - st.armijo_sigma * alpha * lam2:
                accepted = True
                break
            alpha *= st.armijo_beta
        if not accepted:
            a.set_free(z)  # stalled at float resolution; centering is done
            return steps
        steps += 1
    return steps


def solve(
    prog: ConvexProgram,
    x0,
    settings: Optional[SolverSettings] = None,
    early_stop: Optional[Callable[[np.ndarray], bool]] = None,
) -> SolveResult:
    """Barrier method from a strictly feasible ``x0``.

    Raises ValueError if ``x0`` is not strictly feasible on the non-pinned
    constraints (use :func:`phase1_feasible` to produce one), and
    NumericalBreakdown if the Newton systems degenerate.
    """
    st = settings or SolverSettings()
    a = _Assembled(prog, np.asarray(x0, dtype=float), st)
    if a.pinned_violation is not None:
        return SolveResult(a.x_full.copy(), np.inf, np.inf, 0, Status.Infeasible)
    gv = a.constraint_values(a.x_full)
    if gv.size and gv.max() >= 0.0:
        raise ValueError(f"initial point not strictly feasible (max g = {gv.max():.3g})")
    if not np.isfinite(a.objective(a.x_full)):
        raise NumericalBreakdown("objective non-finite at the initial point")

    m = len(a.active)
    t = st.barrier_t0
    total = 0
    status = Status.IterationLimit
    kkt = np.inf
    for _ in range(st.max_outer):
        total += _center(a, t, st)
        f = a.objective(a.x_full)
        kkt = (m / t) / max(1.0, abs(f))
        if early_stop is not None and early_stop(a.x_full):
            status = Status.Converged
            break
        if m == 0 or kkt <= st.kkt_tol:
            status = Status.Converged
            break
        t *= st.barrier_factor
    return SolveResult(a.x_full.copy(), a.objective(a.x_full), kkt, total, status)


def phase1_feasible(
    prog: ConvexProgram,
    x0,
    margin: float = 0.0,
    settings: Optional[SolverSettings] = None,
):
    """Search for a point with ``g_i(x) < -margin`` for every constraint.

    Minimizes an auxiliary bound s over ``g_i(x) <= s`` and stops as soon as
    s drops below ``-margin``.  Returns ``(found, x, s)``; ``x`` keeps the
    pins of ``prog`` and drops the auxiliary coordinate.
    """
    st = settings or SolverSettings()
    x0 = np.asarray(x0, dtype=float)
    a0 = _Assembled(prog, x0, st)
    if a0.pinned_violation is not None:
        return False, a0.x_full.copy(), np.inf
    gv = a0.constraint_values(a0.x_full)
    if gv.size == 0 or gv.max() < -margin:
        return True, a0.x_full.copy(), float(gv.max()) if gv.size else -np.inf

    n = prog.dim
    s_idx = n

    def shifted(g: SmoothFunction) -> SmoothFunction:
        sup = np.append(g.support, s_idx)

        def fn(xs):
            v, gr, h = g.fn(xs[:-1])
            gr2 = np.append(np.asarray(gr, dtype=float), -1.0)
            if h is None:
                h2 = None
            else:
                h2 = np.zeros((xs.size, xs.size))
                h2[:-1, :-1] = h
            return v - xs[-1], gr2, h2

        return SmoothFunction(n + 1, sup, fn, name=f"{g.name}-s")

    aug = ConvexProgram(
        dim=n + 1,
        objective_terms=[linear(n + 1, [s_idx], [1.0], name="s")],
        constraints=[shifted(g) for g in prog.constraints]
        + [linear(n + 1, [s_idx], [-1.0], const=-1.0, name="s>=-1")],
        pins=dict(prog.pins),
    )
    z0 = np.append(a0.x_full, max(float(gv.max()) + 1.0, -0.5))
    res = solve(aug, z0, st, early_stop=lambda xx: xx[s_idx] < -margin)
    s_star = float(res.point[s_idx])
    return s_star < -margin, res.point[:n].copy(), s_star
