"""Agent graph, block partition, interest sets, and cluster machinery.

Agents and blocks are 0-indexed everywhere in this module. Loaders that
accept 1-based external files normalize before constructing these types.
All types are immutable after construction and safe to share across
concurrent runs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCluster, InvalidBlockIndex, NetworkDisconnected


@dataclass(frozen=True)
class BlockLayout:
    """Partition of the global vector into contiguous blocks."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) < 1 or any(d < 1 for d in self.dims):
            raise ValueError("block dims must be positive and non-empty")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def block_count(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> tuple[int, ...]:
        """Start offset of each block within the global vector."""
        out, pos = [], 0
        for d in self.dims:
            out.append(pos)
            pos += d
        return tuple(out)

    def global_slice(self, block: int) -> slice:
        start = self.offsets[block]
        return slice(start, start + self.dims[block])


@dataclass(frozen=True)
class NetworkSpec:
    """Undirected agent graph plus per-agent block interest sets."""

    agent_count: int
    edges: frozenset[tuple[int, int]]
    interest_sets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.agent_count < 1:
            raise ValueError("agent_count must be positive")
        norm = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop edge ({a},{b}) not allowed")
            if not (0 <= a < self.agent_count and 0 <= b < self.agent_count):
                raise ValueError(f"edge ({a},{b}) references unknown agent")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        if len(self.interest_sets) != self.agent_count:
            raise ValueError("need one interest set per agent")
        if any(len(s) == 0 for s in self.interest_sets):
            raise ValueError("every interest set must be non-empty")
        object.__setattr__(
            self,
            "interest_sets",
            tuple(tuple(sorted(set(int(l) for l in s))) for s in self.interest_sets),
        )

    def adjacency(self) -> list[list[int]]:
        """Sorted neighbor lists, self excluded."""
        adj = [[] for _ in range(self.agent_count)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return [sorted(n) for n in adj]

    def neighborhood(self, agent: int) -> tuple[int, ...]:
        """Neighbors of `agent` including the agent itself."""
        nbrs = {agent}
        for a, b in self.edges:
            if a == agent:
                nbrs.add(b)
            elif b == agent:
                nbrs.add(a)
        return tuple(sorted(nbrs))

    def is_connected(self) -> bool:
        seen = _bfs_reach(self.adjacency(), [0])
        return len(seen) == self.agent_count

    def with_interest(self, agent: int, block: int) -> "NetworkSpec":
        """Copy with `block` added to agent's interest set."""
        sets = list(self.interest_sets)
        sets[agent] = tuple(sorted(set(sets[agent]) | {block}))
        return NetworkSpec(self.agent_count, self.edges, tuple(sets))


@dataclass(frozen=True)
class ClusterMap:
    """Per-block clusters and the index bookkeeping for local copies.

    For every agent k the local vector w_k stacks the copies w_k^l for
    l in its interest set, in increasing block order. The flat layout
    concatenates all agents' local vectors; the stacked layout
    concatenates, block by block, the copies held by each cluster member.
    Both have total length sum_l N_l*M_l = sum_k Q_k.
    """

    layout: BlockLayout
    clusters: tuple[tuple[int, ...], ...]
    agent_blocks: tuple[tuple[int, ...], ...]
    local_dims: tuple[int, ...]
    # index machinery, all derived in build_clusters
    agent_starts: tuple[int, ...] = field(repr=False, default=())
    _local_offsets: tuple[dict, ...] = field(repr=False, default=())
    _cluster_pos: tuple[dict, ...] = field(repr=False, default=())
    _flat_cluster_idx: tuple = field(repr=False, default=())
    _global_idx: tuple = field(repr=False, default=())

    @property
    def agent_count(self) -> int:
        return len(self.agent_blocks)

    @property
    def total_local_dim(self) -> int:
        return sum(self.local_dims)

    def cluster_size(self, block: int) -> int:
        return len(self.clusters[block])

    def local_slice(self, agent: int, block: int) -> slice:
        """Position of w_k^l within agent k's local vector."""
        off = self._local_offsets[agent][block]
        return slice(off, off + self.layout.dims[block])

    def flat_slice(self, agent: int) -> slice:
        """Position of agent k's local vector within the flat layout."""
        start = self.agent_starts[agent]
        return slice(start, start + self.local_dims[agent])

    def flat_block_slice(self, agent: int, block: int) -> slice:
        loc = self.local_slice(agent, block)
        start = self.agent_starts[agent]
        return slice(start + loc.start, start + loc.stop)

    def cluster_position(self, block: int, agent: int) -> int:
        """Index of `agent` within the sorted cluster of `block`."""
        return self._cluster_pos[block][agent]

    def flat_cluster_indices(self, block: int) -> np.ndarray:
        """Flat-layout indices of all copies of `block`, cluster order.

        Reshaping the gathered values to (N_l, M_l) puts one local copy
        per row, rows ordered like the sorted cluster.
        """
        return self._flat_cluster_idx[block]

    def global_indices(self, agent: int) -> np.ndarray:
        """Global-vector indices corresponding to agent k's local vector."""
        return self._global_idx[agent]

    def stacked_permutation(self) -> np.ndarray:
        """Indices p with stacked = flat[p]."""
        return np.concatenate([self._flat_cluster_idx[l] for l in range(len(self.clusters))])

    def gather_local(self, global_vec: np.ndarray, agent: int) -> np.ndarray:
        """Restrict a global vector to agent k's blocks."""
        return np.asarray(global_vec)[self._global_idx[agent]]


def build_clusters(net: NetworkSpec, layout: BlockLayout) -> ClusterMap:
    """Derive clusters, local layouts and index maps from interest sets.

    Does not require cluster connectivity; see validate_connectivity and
    embed_clusters for that.
    """
    L = layout.block_count
    for k, blocks in enumerate(net.interest_sets):
        for l in blocks:
            if l >= L or l < 0:
                raise InvalidBlockIndex(
                    f"agent {k} is interested in block {l}, layout has {L} blocks"
                )
    clusters = tuple(
        tuple(k for k in range(net.agent_count) if l in net.interest_sets[k])
        for l in range(L)
    )
    for l, c in enumerate(clusters):
        if not c:
            raise EmptyCluster(f"block {l} appears in no interest set")

    local_dims = tuple(
        sum(layout.dims[l] for l in blocks) for blocks in net.interest_sets
    )
    local_offsets = []
    for blocks in net.interest_sets:
        off, table = 0, {}
        for l in blocks:
            table[l] = off
            off += layout.dims[l]
        local_offsets.append(table)

    agent_starts, pos = [], 0
    for q in local_dims:
        agent_starts.append(pos)
        pos += q

    cluster_pos = tuple({k: i for i, k in enumerate(c)} for c in clusters)
    flat_cluster_idx = []
    for l, c in enumerate(clusters):
        idx = np.concatenate(
            [
                np.arange(
                    agent_starts[k] + local_offsets[k][l],
                    agent_starts[k] + local_offsets[k][l] + layout.dims[l],
                )
                for k in c
            ]
        )
        flat_cluster_idx.append(idx)

    global_idx = []
    for k, blocks in enumerate(net.interest_sets):
        idx = np.concatenate(
            [np.arange(layout.offsets[l], layout.offsets[l] + layout.dims[l]) for l in blocks]
        )
        global_idx.append(idx)

    return ClusterMap(
        layout=layout,
        clusters=clusters,
        agent_blocks=net.interest_sets,
        local_dims=local_dims,
        agent_starts=tuple(agent_starts),
        _local_offsets=tuple(local_offsets),
        _cluster_pos=cluster_pos,
        _flat_cluster_idx=tuple(flat_cluster_idx),
        _global_idx=tuple(global_idx),
    )


def _bfs_reach(adj: list[list[int]], sources: list[int], allowed=None) -> set:
    seen = set(sources)
    queue = deque(sources)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v in seen or (allowed is not None and v not in allowed):
                continue
            seen.add(v)
            queue.append(v)
    return seen


def _components(adj: list[list[int]], nodes: tuple[int, ...]) -> list[set]:
    allowed = set(nodes)
    remaining = set(nodes)
    comps = []
    while remaining:
        start = min(remaining)
        comp = _bfs_reach(adj, [start], allowed=allowed)
        comps.append(comp)
        remaining -= comp
    return comps


def validate_connectivity(net: NetworkSpec, cmap: ClusterMap) -> list[int]:
    """Block indices whose induced cluster subgraph is disconnected.

    An empty list means every cluster is a connected subgraph (singleton
    clusters count as connected).
    """
    adj = net.adjacency()
    bad = []
    for l, cluster in enumerate(cmap.clusters):
        if len(_components(adj, cluster)) > 1:
            bad.append(l)
    return bad


def _bridge_nodes(adj: list[list[int]], cluster: tuple[int, ...]) -> set:
    """Interior nodes of shortest paths joining the cluster's components.

    Components are merged greedily starting from the one holding the
    lowest agent id; at every step the shortest path from the merged set
    to any other component is used, with ties broken by lowest agent id
    (both for the entry point and for each predecessor on the path).
    """
    comps = _components(adj, cluster)
    comps.sort(key=min)
    merged = set(comps[0])
    others = set().union(*comps[1:]) if len(comps) > 1 else set()
    bridges = set()
    while others:
        # multi-source BFS from the merged component over the full graph
        dist = {u: 0 for u in merged}
        parent = {}
        queue = deque(sorted(merged))
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    parent[v] = u
                    queue.append(v)
                elif dist[v] == dist[u] + 1 and parent.get(v, u) > u:
                    parent[v] = u  # lowest-id predecessor at equal depth
        reach = [t for t in others if t in dist]
        if not reach:
            raise NetworkDisconnected("cluster components lie in different graph components")
        target = min(reach, key=lambda t: (dist[t], t))
        node = target
        while node not in merged:
            if node != target:
                bridges.add(node)
            node = parent[node]
        # absorb the component that target belongs to, plus new bridges
        comp = next(c for c in comps if target in c)
        merged |= comp | bridges
        others -= comp
    return bridges


def embed_clusters(net: NetworkSpec, cmap: ClusterMap) -> tuple[NetworkSpec, ClusterMap]:
    """Augment interest sets until every cluster is connected.

    For each disconnected cluster, bridge agents along shortest paths
    between its components (lowest-id tie-breaking) receive the block in
    their interest set; their cost contribution for that block is the
    zero function, so the optimization problem is unchanged. Requires
    the full graph to be connected. Idempotent; already-connected maps
    are returned as-is.
    """
    if not net.is_connected():
        raise NetworkDisconnected("cannot embed clusters: the full graph is disconnected")
    bad = validate_connectivity(net, cmap)
    if not bad:
        return net, cmap
    adj = net.adjacency()
    new = net
    for l in bad:
        for k in sorted(_bridge_nodes(adj, cmap.clusters[l])):
            new = new.with_interest(k, l)
    return new, build_clusters(new, cmap.layout)
