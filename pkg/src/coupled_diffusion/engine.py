"""Per-agent recursion, its network-form twin, and the baseline solvers.

A run is synchronous: within one iteration every agent finishes both
gradient half-steps before any combination happens. Agents own separate
counter-based RNG streams, so per-agent computations inside an iteration
are order-independent and could execute concurrently. Runs for different
seeds or sweep points are fully independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteIterate
from .objective import MultiAgentProblem
from .topology import ClusterMap
from .weights import CombinationMatrix, StepScaling

DIVERGENCE_NORM = 1e9


@dataclass
class EngineConfig:
    mu: float
    eta: float = 0.0
    iterations: int = 1
    noise: str = "stochastic"  # "stochastic" | "exact"
    algorithm: str = "coupled"  # "coupled" | "centralized" | "admm"
    rho_admm: float = 1.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("step size mu must be positive")
        if self.iterations < 1:
            raise ValueError("iteration budget must be at least 1")
        if self.noise not in ("stochastic", "exact"):
            raise ValueError(f"unknown noise mode {self.noise!r}")
        if self.algorithm not in ("coupled", "centralized", "admm"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


def agent_streams(seed: int, agent_count: int) -> list:
    """Independent counter-based generators keyed by (seed, agent).

    Philox streams make runs reproducible and pairable: agent k's draw
    history depends only on (seed, k), and every iteration consumes a
    fixed draw budget, so iteration i always sees the same variates no
    matter which recursion form consumes them.
    """
    return [
        np.random.Generator(np.random.Philox(key=[int(seed), int(agent)]))
        for agent in range(agent_count)
    ]


@dataclass
class RunState:
    """All agents' local copies in the flat layout plus scratch and streams."""

    w: np.ndarray
    zeta: np.ndarray
    psi: np.ndarray
    iteration: int
    rngs: list = field(repr=False, default_factory=list)

    def agent_vector(self, cmap: ClusterMap, agent: int) -> np.ndarray:
        return self.w[cmap.flat_slice(agent)]


def init_state(problem: MultiAgentProblem, seed: int, init_global=None) -> RunState:
    """Fresh state; local copies start at zero or gathered from a global vector."""
    n = problem.cmap.total_local_dim
    w = np.zeros(n)
    if init_global is not None:
        init_global = np.asarray(init_global, dtype=float)
        for k in range(problem.agent_count):
            w[problem.cmap.flat_slice(k)] = problem.cmap.gather_local(init_global, k)
    return RunState(
        w=w,
        zeta=np.zeros(n),
        psi=np.zeros(n),
        iteration=0,
        rngs=agent_streams(seed, problem.agent_count),
    )


def _as_matrix_dict(weights) -> dict[int, CombinationMatrix]:
    if isinstance(weights, dict):
        return weights
    return {m.block: m for m in weights}


def _check_finite(w: np.ndarray, cmap: ClusterMap, iteration: int):
    if np.isfinite(w).all() and np.abs(w).max() <= DIVERGENCE_NORM:
        return
    for k in range(cmap.agent_count):
        wk = w[cmap.flat_slice(k)]
        if not np.isfinite(wk).all() or np.abs(wk).max() > DIVERGENCE_NORM:
            raise NonFiniteIterate(iteration, k)


def _risk_gradient(problem, k, point, rng, noise):
    if noise == "stochastic":
        return problem.oracles[k].stochastic_gradient(point, rng)
    return problem.oracles[k].true_gradient(point)


def coupled_diffusion_step(
    state: RunState,
    problem: MultiAgentProblem,
    weights,
    scaling: StepScaling,
    cfg: EngineConfig,
) -> RunState:
    """One synchronous round: penalty step, risk step, per-block combination.

    zeta_k = w_k - mu*eta * Omega_k grad p_k(w_k)
    psi_k  = zeta_k - mu * Omega_k ghat_k(zeta_k)
    w_k^l  = sum over s in N_k and C_l of a_{l,sk} psi_s^l, for every l in I_k

    The combination consumes the current round's psi from all agents
    (synchronous barrier); a_{l,sk} is zero outside N_k and C_l, so the
    per-cluster matrix product below is exactly the neighbor sum.
    """
    matrices = _as_matrix_dict(weights)
    cmap = problem.cmap
    w, zeta, psi = state.w, state.zeta, state.psi

    np.copyto(zeta, w)
    if cfg.eta != 0.0:
        for k in range(problem.agent_count):
            if not problem.constraints[k]:
                continue
            sl = cmap.flat_slice(k)
            grad = problem.penalty_gradient_local(k, w[sl])
            zeta[sl] = w[sl] - (cfg.mu * cfg.eta) * scaling.flat[sl] * grad

    for k in range(problem.agent_count):
        sl = cmap.flat_slice(k)
        grad = _risk_gradient(problem, k, zeta[sl], state.rngs[k], cfg.noise)
        psi[sl] = zeta[sl] - cfg.mu * scaling.flat[sl] * grad

    for l, cluster in enumerate(cmap.clusters):
        idx = cmap.flat_cluster_indices(l)
        stack = psi[idx].reshape(len(cluster), cmap.layout.dims[l])
        w[idx] = (matrices[l].matrix.T @ stack).ravel()

    state.iteration += 1
    _check_finite(w, cmap, state.iteration)
    return state


@dataclass(frozen=True)
class NetworkAssembly:
    """Globally assembled combination and scaling operators.

    a_big is blkdiag over blocks of (A_l kron I_{M_l}); r_inv holds the
    stacked Perron reciprocals. Together with the stacked gradient maps
    this is the same algebra as the per-agent recursion written as one
    global affine map, which makes it a useful cross-check oracle.
    """

    a_big: np.ndarray
    r_inv: np.ndarray
    perm: np.ndarray  # stacked = flat[perm]

    @property
    def dim(self) -> int:
        return self.r_inv.shape[0]

    def stack(self, flat: np.ndarray) -> np.ndarray:
        return flat[self.perm]

    def unstack(self, stacked: np.ndarray) -> np.ndarray:
        flat = np.empty_like(stacked)
        flat[self.perm] = stacked
        return flat


def assemble_network_form(cmap: ClusterMap, weights) -> NetworkAssembly:
    matrices = _as_matrix_dict(weights)
    blocks, rinv = [], []
    for l in range(len(cmap.clusters)):
        m = matrices[l]
        blocks.append(np.kron(m.matrix, np.eye(cmap.layout.dims[l])))
        rinv.append(np.repeat(1.0 / m.perron, cmap.layout.dims[l]))
    dim = sum(b.shape[0] for b in blocks)
    a_big = np.zeros((dim, dim))
    pos = 0
    for b in blocks:
        a_big[pos : pos + b.shape[0], pos : pos + b.shape[0]] = b
        pos += b.shape[0]
    return NetworkAssembly(
        a_big=a_big, r_inv=np.concatenate(rinv), perm=cmap.stacked_permutation()
    )


def network_form_oracle_step(
    stacked_w: np.ndarray,
    assembly: NetworkAssembly,
    problem: MultiAgentProblem,
    cfg: EngineConfig,
    rngs,
) -> np.ndarray:
    """One round of the stacked recursion driven by the assembled operators.

    zeta = w - mu*eta R^-1 grad P(w); psi = zeta - mu R^-1 ghat_J(zeta);
    next = a_big' psi. The stacked gradients collect, block by block and
    cluster member by cluster member, the per-agent gradient entries.
    """
    if stacked_w.shape[0] != assembly.dim:
        raise DimensionMismatch("stacked state has wrong dimension")
    cmap = problem.cmap

    if cfg.eta != 0.0:
        flat_w = assembly.unstack(stacked_w)
        p_flat = np.zeros_like(flat_w)
        for k in range(problem.agent_count):
            if not problem.constraints[k]:
                continue
            sl = cmap.flat_slice(k)
            p_flat[sl] = problem.penalty_gradient_local(k, flat_w[sl])
        zeta = stacked_w - (cfg.mu * cfg.eta) * assembly.r_inv * assembly.stack(p_flat)
    else:
        zeta = stacked_w.copy()

    zeta_flat = assembly.unstack(zeta)
    g_flat = np.empty_like(zeta_flat)
    for k in range(problem.agent_count):
        sl = cmap.flat_slice(k)
        g_flat[sl] = _risk_gradient(problem, k, zeta_flat[sl], rngs[k], cfg.noise)
    psi = zeta - cfg.mu * assembly.r_inv * assembly.stack(g_flat)

    return assembly.a_big.T @ psi


def centralized_step(
    w: np.ndarray,
    d_blocks,
    problem: MultiAgentProblem,
    cfg: EngineConfig,
    rngs=None,
) -> np.ndarray:
    """Two incremental steps on the aggregate penalized cost.

    psi = w - mu*eta D grad p_glob(w); next = psi - mu D grad J_glob(psi),
    with D a positive per-block diagonal scaling. Stochastic mode draws
    one gradient sample per agent and assembles them into the global
    gradient.
    """
    layout = problem.layout
    d_vec = np.concatenate(
        [np.full(layout.dims[l], float(d)) for l, d in enumerate(d_blocks)]
    )
    psi = w - (cfg.mu * cfg.eta) * d_vec * problem.global_penalty_gradient(w)
    if cfg.noise == "stochastic":
        grad = np.zeros(layout.total_dim)
        for k in range(problem.agent_count):
            gidx = problem.cmap.global_indices(k)
            grad[gidx] += problem.oracles[k].stochastic_gradient(psi[gidx], rngs[k])
    else:
        grad = problem.global_risk_gradient(psi)
    return psi - cfg.mu * d_vec * grad


@dataclass
class AdmmState:
    """Primal copies, duals, and the per-block cluster averages."""

    w: np.ndarray  # flat layout
    y: np.ndarray  # flat layout duals
    z: np.ndarray  # global layout
    iteration: int
    rngs: list = field(repr=False, default_factory=list)


def init_admm_state(problem: MultiAgentProblem, seed: int) -> AdmmState:
    n = problem.cmap.total_local_dim
    return AdmmState(
        w=np.zeros(n),
        y=np.zeros(n),
        z=np.zeros(problem.layout.total_dim),
        iteration=0,
        rngs=agent_streams(seed, problem.agent_count),
    )


def admm_linearized_step(
    state: AdmmState, problem: MultiAgentProblem, cfg: EngineConfig
) -> AdmmState:
    """Consensus solver with the primal minimization replaced by one
    (stochastic) gradient step of step size mu.

    w_k+ = w_k - mu (ghat_k(w_k) + y_k + rho (w_k - z_k))
    z_l+ = mean over cluster of (w_k^l+ + y_k^l / rho)   [global knowledge]
    y_k+ = y_k + rho (w_k+ - z_k+)
    """
    cmap = problem.cmap
    rho = cfg.rho_admm
    w_new = np.empty_like(state.w)
    for k in range(problem.agent_count):
        sl = cmap.flat_slice(k)
        z_k = problem.cmap.gather_local(state.z, k)
        grad = _risk_gradient(problem, k, state.w[sl], state.rngs[k], cfg.noise)
        w_new[sl] = state.w[sl] - cfg.mu * (grad + state.y[sl] + rho * (state.w[sl] - z_k))

    for l, cluster in enumerate(cmap.clusters):
        idx = cmap.flat_cluster_indices(l)
        stack = (w_new[idx] + state.y[idx] / rho).reshape(len(cluster), cmap.layout.dims[l])
        state.z[cmap.layout.global_slice(l)] = stack.mean(axis=0)

    for k in range(problem.agent_count):
        sl = cmap.flat_slice(k)
        z_k = problem.cmap.gather_local(state.z, k)
        state.y[sl] += rho * (w_new[sl] - z_k)

    state.w = w_new
    state.iteration += 1
    _check_finite(state.w, cmap, state.iteration)
    return state


def suggest_step_size(nu: float, delta: float, delta_p: float = 0.0,
                      eta: float = 0.0, n_agents: int = 1) -> float:
    """Conservative upper bound 1 / (nu + N (delta + eta delta_p)).

    Callers typically run at a fraction of the returned value.
    """
    return 1.0 / (nu + n_agents * (delta + eta * delta_p))
