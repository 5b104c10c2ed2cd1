"""Reference optima, deviation metrics, and empirical rate fitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    InfeasibleConstraints,
    NonDecreasingMSD,
    SimulationError,
    SingularSystem,
    WindowTooShort,
)
from .objective import MultiAgentProblem
from .topology import ClusterMap

MIN_EIG = 1e-12
FEASIBILITY_TOL = 1e-10
STATIONARITY_TOL = 1e-8


@dataclass(frozen=True)
class ReferenceSolution:
    """Penalized optimum, constrained optimum, and how they were obtained."""

    w_star: np.ndarray
    w_o: np.ndarray
    provenance: str  # "closed-form" | "iterative"


def db(x: float) -> float:
    """Power quantity in decibels."""
    return 10.0 * np.log10(x)


def msd(w_flat: np.ndarray, cmap: ClusterMap, reference: np.ndarray) -> float:
    """Cluster-averaged squared deviation from a global reference vector.

    sum over blocks of (1/N_l) sum over cluster members of
    ||ref^l - w_k^l||^2. Expectations over runs are taken by the caller
    through seed averaging.
    """
    w_flat = np.asarray(w_flat, dtype=float)
    total = 0.0
    for l, cluster in enumerate(cmap.clusters):
        ref_l = reference[cmap.layout.global_slice(l)]
        stack = w_flat[cmap.flat_cluster_indices(l)].reshape(len(cluster), -1)
        total += float(((stack - ref_l) ** 2).sum()) / len(cluster)
    return total


def disagreement(w_flat: np.ndarray, cmap: ClusterMap) -> np.ndarray:
    """Per-block max pairwise distance between local copies (0 for singletons)."""
    w_flat = np.asarray(w_flat, dtype=float)
    out = np.zeros(len(cmap.clusters))
    for l, cluster in enumerate(cmap.clusters):
        n = len(cluster)
        if n == 1:
            continue
        stack = w_flat[cmap.flat_cluster_indices(l)].reshape(n, -1)
        diffs = stack[:, None, :] - stack[None, :, :]
        out[l] = float(np.sqrt((diffs**2).sum(axis=2)).max())
    return out


def centroid(w_flat: np.ndarray, cmap: ClusterMap, weights) -> np.ndarray:
    """Perron-weighted per-block centroid sum_k r_l(k) w_k^l as a global vector."""
    matrices = weights if isinstance(weights, dict) else {m.block: m for m in weights}
    out = np.empty(cmap.layout.total_dim)
    for l, cluster in enumerate(cmap.clusters):
        stack = w_flat[cmap.flat_cluster_indices(l)].reshape(len(cluster), -1)
        out[cmap.layout.global_slice(l)] = matrices[l].perron @ stack
    return out


def _quadratic_pieces(problem: MultiAgentProblem):
    if not problem.is_quadratic():
        return None
    if any(c.kind != "equality" for cons in problem.constraints for c in cons):
        return None
    hess, lin = problem.global_risk_quadratic()
    g, b = problem.constraint_system()
    return hess, lin, g, b


def penalized_optimum(problem: MultiAgentProblem, eta: Optional[float] = None) -> np.ndarray:
    """Minimizer of the aggregate risk plus eta-weighted penalties.

    Quadratic risks with affine equality penalties admit the closed form
    (H + 2 eta G'G) w = f + 2 eta G'b; anything else falls back to exact
    deterministic gradient descent.
    """
    if eta is None:
        eta = problem.penalty.eta
    pieces = _quadratic_pieces(problem)
    if pieces is not None:
        hess, lin, g, b = pieces
        a = hess + 2.0 * eta * g.T @ g
        if float(np.linalg.eigvalsh(a)[0]) <= MIN_EIG:
            raise SingularSystem("penalized Hessian is not positive definite")
        w = np.linalg.solve(a, lin + 2.0 * eta * g.T @ b)
    else:
        w = _descend_penalized(problem, eta)
    grad0 = problem.global_risk_gradient(np.zeros_like(w)) + eta * problem.global_penalty_gradient(
        np.zeros_like(w)
    )
    grad = problem.global_risk_gradient(w) + eta * problem.global_penalty_gradient(w)
    if np.linalg.norm(grad) > 1e-8 * (1.0 + np.linalg.norm(grad0)):
        raise SimulationError("penalized optimum failed its stationarity check")
    return w


def _descend_penalized(problem: MultiAgentProblem, eta: float, tol: float = 1e-10,
                       max_iter: int = 2_000_000) -> np.ndarray:
    hess, _ = problem.global_risk_quadratic()
    lipschitz = float(np.linalg.eigvalsh(hess)[-1]) + eta * max(
        problem.penalty_lipschitz(), 1e-12
    ) * problem.agent_count
    step = 1.0 / lipschitz
    w = np.zeros(problem.layout.total_dim)
    g0 = None
    for _ in range(max_iter):
        grad = problem.global_risk_gradient(w) + eta * problem.global_penalty_gradient(w)
        norm = np.linalg.norm(grad)
        if g0 is None:
            g0 = norm
        if norm <= tol * (1.0 + g0):
            return w
        w -= step * grad
    raise SimulationError("gradient descent for the penalized optimum did not converge")


def constrained_optimum(problem: MultiAgentProblem) -> np.ndarray:
    """Solution of the equality-constrained quadratic program via its KKT system."""
    pieces = _quadratic_pieces(problem)
    if pieces is None:
        raise ValueError("constrained_optimum needs quadratic risks and affine equalities")
    hess, lin, g, b = pieces
    m, p = hess.shape[0], g.shape[0]
    if p == 0:
        if float(np.linalg.eigvalsh(hess)[0]) <= MIN_EIG:
            raise SingularSystem("risk Hessian is not positive definite")
        return np.linalg.solve(hess, lin)
    kkt = np.zeros((m + p, m + p))
    kkt[:m, :m] = hess
    kkt[:m, m:] = g.T
    kkt[m:, :m] = g
    rhs = np.concatenate([lin, b])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        if np.linalg.norm(kkt @ sol - rhs) > 1e-8 * (1.0 + np.linalg.norm(rhs)):
            raise InfeasibleConstraints("KKT system is inconsistent") from None
        raise SingularSystem("KKT system is singular") from None
    w, lam = sol[:m], sol[m:]
    if np.linalg.norm(g @ w - b) > FEASIBILITY_TOL * (1.0 + np.linalg.norm(b)):
        raise InfeasibleConstraints("solution violates the constraints")
    if np.linalg.norm(hess @ w - lin + g.T @ lam) > STATIONARITY_TOL * (1.0 + np.linalg.norm(lin)):
        raise SingularSystem("KKT stationarity check failed")
    return w


def reference_solution(problem: MultiAgentProblem, eta: Optional[float] = None) -> ReferenceSolution:
    """Both reference optima for a problem, for metric logging.

    Outside the quadratic-with-affine-equalities family the constrained
    optimum has no closed form here; the penalized optimum then stands in
    for both references (provenance "iterative").
    """
    pieces = _quadratic_pieces(problem)
    w_star = penalized_optimum(problem, eta)
    w_o = constrained_optimum(problem) if pieces is not None else w_star
    return ReferenceSolution(
        w_star=w_star,
        w_o=w_o,
        provenance="closed-form" if pieces is not None else "iterative",
    )


@dataclass
class MetricsLog:
    """Per-iteration metric records for one run."""

    iterations: list = field(default_factory=list)
    msd_star: list = field(default_factory=list)
    msd_o: list = field(default_factory=list)
    disagreement: list = field(default_factory=list)
    centroid_dist_star: list = field(default_factory=list)
    centroid_dist_o: list = field(default_factory=list)

    def record(self, iteration: int, w_flat: np.ndarray, cmap: ClusterMap,
               weights, refs: ReferenceSolution):
        self.iterations.append(iteration)
        self.msd_star.append(msd(w_flat, cmap, refs.w_star))
        self.msd_o.append(msd(w_flat, cmap, refs.w_o))
        self.disagreement.append(disagreement(w_flat, cmap))
        c = centroid(w_flat, cmap, weights)
        self.centroid_dist_star.append(float(np.linalg.norm(c - refs.w_star)))
        self.centroid_dist_o.append(float(np.linalg.norm(c - refs.w_o)))

    @property
    def msd_star_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.asarray(self.msd_star))

    def max_disagreement(self) -> np.ndarray:
        return np.asarray([d.max() for d in self.disagreement])


def empirical_rate(msd_values, window: Optional[slice] = None) -> float:
    """Per-iteration contraction factor fitted to log(MSD) by least squares.

    The sequence must be strictly decreasing over the window; intended
    for noise-free runs.
    """
    values = np.asarray(
        msd_values.msd_star if isinstance(msd_values, MetricsLog) else msd_values,
        dtype=float,
    )
    if window is not None:
        values = values[window]
    if values.shape[0] < 3:
        raise WindowTooShort(f"need at least 3 points, got {values.shape[0]}")
    if np.any(np.diff(values) >= 0):
        raise NonDecreasingMSD("MSD is not strictly decreasing over the window")
    idx = np.arange(values.shape[0])
    slope = np.polyfit(idx, np.log(values), 1)[0]
    return float(np.exp(slope))
