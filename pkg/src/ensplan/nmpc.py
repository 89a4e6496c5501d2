"""Exact log-posterior of candidate trajectories and the quadratic cost link.

With heavy tails the per-step terms are logs of quadratic forms; as every dof
grows large they flatten into the quadratic tracking cost, so maximizing the
posterior and minimizing the cost rank candidates identically in that limit.
Normalizing constants are dropped throughout: only differences and rankings
of the log-posterior are meaningful.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrackingParams",
    "CandidateTrajectory",
    "log_posterior",
    "nmpc_cost",
    "argmax_equivalence_check",
]

_FEAS_TOL = 1e-10


@dataclass(frozen=True)
class TrackingParams:
    """Noise scales and dofs for the state / input / increment channels."""

    scale_x: np.ndarray
    scale_u: np.ndarray
    scale_du: np.ndarray
    dof_x: float = 3.0
    dof_u: float = 3.0
    dof_du: float = 3.0

    def __post_init__(self):
        for name in ("scale_x", "scale_u", "scale_du"):
            mat = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, mat)
            np.linalg.cholesky(mat)  # must be SPD
        if min(self.dof_x, self.dof_u, self.dof_du) <= 2.0:
            raise ValueError("all dofs must exceed 2")


@dataclass(frozen=True)
class CandidateTrajectory:
    """Dynamically feasible stack (x, u, du) over one horizon.

    The state chain must be generated by the dynamics from the input chain
    and the increments must telescope with the inputs; both are checked at
    construction to 1e-10.
    """

    x: np.ndarray    # (T, n_x)
    u: np.ndarray    # (T, n_u)
    du: np.ndarray   # (T, n_u)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        du = np.atleast_2d(np.asarray(self.du, dtype=float))
        if not (x.shape[0] == u.shape[0] == du.shape[0]) or u.shape != du.shape:
            raise ValueError("x, u, du must share the horizon length")
        diffs = u[1:] - u[:-1]
        if diffs.size and np.abs(diffs - du[1:]).max() > _FEAS_TOL:
            raise ValueError("du chain does not telescope with the u chain")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "du", du)

    @classmethod
    def from_inputs(cls, x0, u_prev, u_seq, step_fn):
        """Roll the dynamics from x0 under an input sequence."""
        u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
        x0 = np.asarray(x0, dtype=float)
        u_prev = np.asarray(u_prev, dtype=float)
        xs = [x0]
        for t in range(u_seq.shape[0] - 1):
            xs.append(np.asarray(step_fn(xs[-1], u_seq[t]), dtype=float))
        du = np.vstack([(u_seq[0] - u_prev)[None, :], np.diff(u_seq, axis=0)])
        return cls(np.vstack(xs), u_seq, du)

    def check_dynamics(self, step_fn, tol=_FEAS_TOL):
        for t in range(self.x.shape[0] - 1):
            err = np.abs(self.x[t + 1] - np.asarray(step_fn(self.x[t], self.u[t]))).max()
            if err > tol:
                raise ValueError(f"state chain violates the dynamics at step {t} (err {err:g})")
        return True


def _t_terms(res, scale, dof):
    """Sum over rows of -((dof + n)/2) log(1 + q/dof), q the scaled quadratic."""
    n = res.shape[1]
    sol = np.linalg.solve(scale, res.T).T
    q = np.einsum("ij,ij->i", res, sol)
    return float(-0.5 * (dof + n) * np.sum(np.log1p(q / dof)))


def log_posterior(x, u, du, r, s, params):
    """Constant-free log-posterior of a trajectory given references.

    Accepts raw (T, n) arrays or a CandidateTrajectory via its fields; the
    value is exactly zero for a trajectory sitting on its references with a
    zero increment chain.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    du = np.atleast_2d(np.asarray(du, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if r.shape != x.shape or s.shape != u.shape:
        raise ValueError("reference lengths must match the trajectory")
    return (_t_terms(x - r, params.scale_x, params.dof_x)
            + _t_terms(u - s, params.scale_u, params.dof_u)
            + _t_terms(du, params.scale_du, params.dof_du))


def nmpc_cost(x, u, du, r, s, params):
    """Quadratic tracking cost with the inverse noise scales as weights.

    Hard constraints are not folded in; evaluate them separately with the
    constraint stack.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    du = np.atleast_2d(np.asarray(du, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    s = np.atleast_2d(np.asarray(s, dtype=float))

    def quad(res, scale):
        sol = np.linalg.solve(scale, res.T).T
        return float(np.einsum("ij,ij->", res, sol))

    return (quad(x - r, params.scale_x) + quad(u - s, params.scale_u)
            + quad(du, params.scale_du))


def argmax_equivalence_check(candidates, r, s, params, feasibility_fn=None):
    """Rank candidates by log-posterior and by negative quadratic cost.

    Ties break by candidate index in both orderings. Any candidate failing
    the supplied feasibility predicate is rejected at entry. Returns a report
    with both orderings, the list of discordant pairs, and an ``agree`` flag;
    with moderate dofs the orderings may legitimately differ, so the caller
    decides whether disagreement is an error.
    """
    if len(candidates) < 2:
        raise ValueError("need at least two candidates")
    if feasibility_fn is not None:
        for i, cand in enumerate(candidates):
            if not feasibility_fn(cand):
                raise ValueError(f"candidate {i} is infeasible")
    lp = np.array([log_posterior(c.x, c.u, c.du, r, s, params) for c in candidates])
    cost = np.array([nmpc_cost(c.x, c.u, c.du, r, s, params) for c in candidates])
    order_lp = sorted(range(len(candidates)), key=lambda i: (-lp[i], i))
    order_cost = sorted(range(len(candidates)), key=lambda i: (cost[i], i))
    rank_lp = np.argsort(np.array(order_lp))
    rank_cost = np.argsort(np.array(order_cost))
    discordant = []
    for i in range(len(candidates)):
        for j in range(i + 1, len(candidates)):
            if (rank_lp[i] - rank_lp[j]) * (rank_cost[i] - rank_cost[j]) < 0:
                discordant.append((i, j))
    return {
        "log_posterior": lp.tolist(),
        "cost": cost.tolist(),
        "order_by_log_posterior": order_lp,
        "order_by_cost": order_cost,
        "discordant_pairs": discordant,
        "agree": not discordant,
    }
