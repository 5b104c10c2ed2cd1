"""Per-cluster combination matrices, Perron vectors, and step scalings.

Matrices are stored with the convention A[s, k]: column k holds the
weights agent k applies to the half-step iterates received from agents s
in its neighborhood intersected with the cluster. Columns sum to one
(left-stochastic); Metropolis matrices are also symmetric and therefore
doubly stochastic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedCluster, NotPrimitive
from .topology import ClusterMap, NetworkSpec, validate_connectivity

PERRON_TOL = 1e-14
PERRON_RESIDUAL_TOL = 1e-10
MAX_DENSE_EIG = 100


@dataclass(frozen=True)
class CombinationMatrix:
    """Weights for one cluster together with its spectral data."""

    block: int
    agents: tuple[int, ...]
    matrix: np.ndarray
    perron: np.ndarray
    lambda2: float

    @property
    def size(self) -> int:
        return len(self.agents)

    def perron_entry(self, agent: int) -> float:
        return float(self.perron[self.agents.index(agent)])


@dataclass(frozen=True)
class StepScaling:
    """Per-agent diagonal step scalings 1/r_l(k), one scalar per block copy.

    `flat` expands the scalars along the flat layout so the two gradient
    half-steps reduce to elementwise multiplies.
    """

    scalars: tuple[tuple[float, ...], ...]  # aligned with cmap.agent_blocks
    flat: np.ndarray

    def per_agent(self, cmap: ClusterMap, agent: int) -> np.ndarray:
        return self.flat[cmap.flat_slice(agent)]


def _cluster_neighbor_counts(cmap: ClusterMap, net: NetworkSpec, block: int) -> dict[int, list[int]]:
    """For each cluster member, its neighbors within the cluster (self included)."""
    members = set(cmap.clusters[block])
    out = {}
    for k in cmap.clusters[block]:
        out[k] = [s for s in net.neighborhood(k) if s in members]
    return out


def _require_connected(cmap: ClusterMap, net: NetworkSpec, block: int):
    if block in validate_connectivity(net, cmap):
        raise DisconnectedCluster(f"cluster of block {block} is not connected")


def metropolis_weights(cmap: ClusterMap, net: NetworkSpec, block: int) -> CombinationMatrix:
    """Metropolis rule: a_sk = 1/max{n_k, n_s} for cluster neighbors s != k,
    self weight fills the column to one. Doubly stochastic and symmetric."""
    _require_connected(cmap, net, block)
    agents = cmap.clusters[block]
    nbrs = _cluster_neighbor_counts(cmap, net, block)
    counts = {k: len(nbrs[k]) for k in agents}
    n = len(agents)
    a = np.zeros((n, n))
    for j, k in enumerate(agents):
        for s in nbrs[k]:
            if s == k:
                continue
            a[agents.index(s), j] = 1.0 / max(counts[k], counts[s])
        a[j, j] = 1.0 - a[:, j].sum()
    return _finish(block, agents, a)


def averaging_weights(cmap: ClusterMap, net: NetworkSpec, block: int) -> CombinationMatrix:
    """Averaging rule: a_sk = 1/n_k for every cluster neighbor s of k.
    Left-stochastic but in general not doubly stochastic."""
    _require_connected(cmap, net, block)
    agents = cmap.clusters[block]
    nbrs = _cluster_neighbor_counts(cmap, net, block)
    n = len(agents)
    a = np.zeros((n, n))
    for j, k in enumerate(agents):
        for s in nbrs[k]:
            a[agents.index(s), j] = 1.0 / len(nbrs[k])
    return _finish(block, agents, a)


def _finish(block, agents, a) -> CombinationMatrix:
    r = perron_vector(a)
    lam2 = second_eigenvalue_magnitude(a)
    return CombinationMatrix(block=block, agents=agents, matrix=a, perron=r, lambda2=lam2)


def perron_vector(a: np.ndarray) -> np.ndarray:
    """Positive unit-sum right eigenvector of a left-stochastic matrix at 1.

    Power iteration until the max-norm change drops below 1e-14, capped at
    100*n^2 iterations. Raises NotPrimitive when the iteration fails to
    converge or the limit has non-positive entries.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    # asymmetric positive start: a periodic matrix then oscillates instead of
    # silently converging from one of its eigenvectors
    x = np.arange(1.0, n + 1.0)
    x /= x.sum()
    for _ in range(100 * n * n):
        y = a @ x
        y /= y.sum()
        if np.max(np.abs(y - x)) <= PERRON_TOL:
            x = y
            break
        x = y
    else:
        raise NotPrimitive("power iteration did not converge")
    if np.any(x <= 0):
        raise NotPrimitive("limit vector has non-positive entries")
    if np.max(np.abs(a @ x - x)) > PERRON_RESIDUAL_TOL:
        raise NotPrimitive("eigenvector residual too large")
    return x


def second_eigenvalue_magnitude(a: np.ndarray) -> float:
    """Largest |eigenvalue| after removing one instance of the value 1.

    Dense eigendecomposition; clusters beyond desk scale are rejected.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n > MAX_DENSE_EIG:
        raise ValueError(f"cluster size {n} exceeds dense eigensolver limit {MAX_DENSE_EIG}")
    if n == 1:
        return 0.0
    eig = np.linalg.eigvals(a)
    drop = int(np.argmin(np.abs(eig - 1.0)))
    rest = np.abs(np.delete(eig, drop))
    lam2 = float(rest.max())
    if lam2 >= 1.0 - 1e-10:
        raise NotPrimitive(f"second eigenvalue magnitude {lam2} is too close to one")
    return lam2


def step_scaling(cmap: ClusterMap, matrices: dict[int, CombinationMatrix] | list[CombinationMatrix]) -> StepScaling:
    """Assemble the per-agent scalings 1/r_l(k) from the Perron vectors."""
    if not isinstance(matrices, dict):
        matrices = {m.block: m for m in matrices}
    scalars = []
    flat = np.empty(cmap.total_local_dim)
    for k, blocks in enumerate(cmap.agent_blocks):
        row = []
        for l in blocks:
            m = matrices[l]
            s = 1.0 / float(m.perron[cmap.cluster_position(l, k)])
            row.append(s)
            flat[cmap.flat_block_slice(k, l)] = s
        scalars.append(tuple(row))
    return StepScaling(scalars=tuple(scalars), flat=flat)


def spectral_gap_bound(matrices) -> float:
    """max over clusters of the second-eigenvalue magnitude (rate predictor)."""
    vals = matrices.values() if isinstance(matrices, dict) else matrices
    return max((m.lambda2 for m in vals), default=0.0)
