"""Scenario orchestration: configs, problem generation, runs, CSV output.

Runs are deterministic functions of (config, seeds). A scenario run builds
the topology -> weights -> objective -> engine pipeline, executes one run
per (mu, eta, seed) triple, and merges the per-run logs into a result
table with seed-mean rows marked "mean".
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .engine import (
    EngineConfig,
    admm_linearized_step,
    agent_streams,
    centralized_step,
    coupled_diffusion_step,
    init_admm_state,
    init_state,
)
from .errors import ConfigError, SingularSystem
from .metrics import MetricsLog, ReferenceSolution, db, reference_solution
from .objective import (
    MultiAgentProblem,
    PaddedOracle,
    PenaltyConfig,
    equality,
    random_quadratic_oracle,
)
from .topology import BlockLayout, NetworkSpec, build_clusters, embed_clusters, validate_connectivity
from .weights import averaging_weights, metropolis_weights, step_scaling

SCENARIOS = ("unconstrained", "constrained", "tracking", "sweep", "custom")
WEIGHT_RULES = ("metropolis", "averaging")
BUILTIN_NETWORKS = ("benchmark20", "example5")

# sub-stream tags so problem data, constraints, and engine noise never collide
_PROBLEM_TAG = 0x5EED
_CONSTRAINT_TAG = 0xC0DE


@dataclass(frozen=True)
class NetworkDescription:
    """A loaded topology plus optional constraint-owner metadata."""

    net: NetworkSpec
    layout: BlockLayout
    constraint_owners: Optional[tuple[int, ...]] = None


def load_network(source: str, block_dims=None) -> NetworkDescription:
    """Load a built-in network by name or a JSON file by path.

    Files may be 0- or 1-indexed (`index_base`); agents and blocks are
    normalized to 0-based on load. `block_dims` overrides the file's
    block sizes.
    """
    if source in BUILTIN_NETWORKS:
        raw = json.loads(
            resources.files("coupled_diffusion.data").joinpath(f"{source}.json").read_text()
        )
    else:
        raw = json.loads(Path(source).read_text())
    base = int(raw.get("index_base", 0))
    if base not in (0, 1):
        raise ConfigError(f"index_base must be 0 or 1, got {base}")
    edges = frozenset((a - base, b - base) for a, b in raw["edges"])
    interest = tuple(tuple(l - base for l in s) for s in raw["interest_sets"])
    net = NetworkSpec(agent_count=int(raw["agent_count"]), edges=edges, interest_sets=interest)
    dims = tuple(block_dims) if block_dims else tuple(raw["block_dims"])
    owners = raw.get("constraint_owners")
    if owners is not None:
        owners = tuple(int(o) - base for o in owners)
    return NetworkDescription(net=net, layout=BlockLayout(dims), constraint_owners=owners)


@dataclass
class ScenarioConfig:
    scenario: str
    network: str = "benchmark20"
    block_dims: Optional[tuple[int, ...]] = None
    mu_list: tuple[float, ...] = (0.002, 0.001)  # library defaults; configs usually override
    eta_list: tuple[float, ...] = (0.0,)
    iterations: int = 2000
    seeds: tuple[int, ...] = tuple(range(20))
    problem_seed: int = 7
    weight_rule: str = "metropolis"
    algorithm: str = "coupled"
    noise: str = "stochastic"
    rho: float = 1.0
    rho_admm: float = 1.0
    change_point: Optional[int] = None
    log_every: int = 1
    init: Optional[str] = None  # zeros | reference; sweep defaults to reference
    constrained: Optional[bool] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not self.mu_list or any(m <= 0 for m in self.mu_list):
            raise ConfigError("mu list must be non-empty and positive")
        if not self.eta_list or any(e < 0 for e in self.eta_list):
            raise ConfigError("eta list must be non-empty and non-negative")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.weight_rule not in WEIGHT_RULES:
            raise ConfigError(f"unknown weight rule {self.weight_rule!r}")
        if self.scenario == "tracking" and self.change_point is None:
            raise ConfigError("tracking scenario needs a change_point")
        if self.change_point is not None and not (0 < self.change_point < self.iterations):
            raise ConfigError("change_point must lie strictly inside the iteration budget")
        if self.log_every < 1:
            raise ConfigError("log_every must be at least 1")
        if self.init not in (None, "zeros", "reference"):
            raise ConfigError(f"unknown init {self.init!r}")
        self.mu_list = tuple(float(m) for m in self.mu_list)
        self.eta_list = tuple(float(e) for e in self.eta_list)
        self.seeds = tuple(int(s) for s in self.seeds)

    @property
    def uses_constraints(self) -> bool:
        if self.constrained is not None:
            return self.constrained
        return self.scenario in ("constrained", "tracking", "sweep")

    @property
    def initial(self) -> str:
        if self.init is not None:
            return self.init
        return "reference" if self.scenario == "sweep" else "zeros"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key, val in d.items():
            if isinstance(val, tuple):
                d[key] = list(val)
        return d


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from the sectioned config-file layout."""
    network = raw.get("network", {}) or {}
    blocks = raw.get("blocks", {}) or {}
    objective = raw.get("objective", {}) or {}
    penalty = raw.get("penalty", {}) or {}
    engine = raw.get("engine", {}) or {}
    scenario = raw.get("scenario", {}) or {}
    if "id" not in scenario:
        raise ConfigError("scenario section must carry an 'id'")

    def as_list(x):
        return tuple(x) if isinstance(x, (list, tuple)) else (x,)

    kwargs = dict(
        scenario=scenario["id"],
        network=network.get("source", "benchmark20"),
        block_dims=tuple(blocks["dims"]) if blocks.get("dims") else None,
        problem_seed=int(objective.get("problem_seed", 7)),
        rho=float(penalty.get("rho", 1.0)),
        iterations=int(engine.get("iterations", 2000)),
        weight_rule=engine.get("weight_rule", "metropolis"),
        algorithm=engine.get("algorithm", "coupled"),
        noise=engine.get("noise", "stochastic"),
        rho_admm=float(engine.get("rho_admm", 1.0)),
        log_every=int(scenario.get("log_every", 1)),
        init=engine.get("init"),
        constrained=objective.get("constrained"),
    )
    if engine.get("mu") is not None:
        kwargs["mu_list"] = tuple(float(m) for m in as_list(engine["mu"]))
    if penalty.get("eta") is not None:
        kwargs["eta_list"] = tuple(float(e) for e in as_list(penalty["eta"]))
    if scenario.get("seeds") is not None:
        kwargs["seeds"] = tuple(int(s) for s in as_list(scenario["seeds"]))
    if scenario.get("change_point") is not None:
        kwargs["change_point"] = int(scenario["change_point"])
    return ScenarioConfig(**kwargs)


def _problem_rng(seed: int, tag: int):
    return np.random.Generator(np.random.Philox(key=[int(seed), int(tag)]))


def _draw_constraints(desc: NetworkDescription, cmap, rng) -> tuple:
    """One affine equality per block, owned by the designated cluster member."""
    owners = desc.constraint_owners
    if owners is None:
        owners = tuple(c[0] for c in cmap.clusters)
    per_agent = [[] for _ in range(desc.net.agent_count)]
    for l, owner in enumerate(owners):
        if l not in cmap.agent_blocks[owner]:
            raise ConfigError(f"constraint owner {owner} is not in the cluster of block {l}")
        g = rng.standard_normal(cmap.local_dims[owner])
        g /= np.linalg.norm(g)
        b = float(rng.uniform(-1.0, 1.0))
        per_agent[owner].append(equality(owner, g, b))
    return tuple(tuple(c) for c in per_agent)


def build_problem(desc: NetworkDescription, seed: int, constrained: bool = False,
                  rho: float = 1.0) -> MultiAgentProblem:
    """Assemble the streaming least-squares benchmark on a given topology.

    The true model is drawn once and normalized to unit norm; each agent
    receives a random orthogonal-basis covariance with spectrum uniform
    in [1, 3] and noise power uniform in [-30, -20] dB. Disconnected
    clusters are embedded first; agents recruited as bridges contribute
    zero cost for the added blocks (their oracles are zero-padded). The
    constrained variant adds one unit-norm affine equality per block at
    the owner. Deterministic per seed.
    """
    cmap0 = build_clusters(desc.net, desc.layout)
    net, cmap = desc.net, cmap0
    if validate_connectivity(net, cmap0):
        net, cmap = embed_clusters(net, cmap0)
        desc = NetworkDescription(net=net, layout=desc.layout,
                                  constraint_owners=desc.constraint_owners)
    rng = _problem_rng(seed, _PROBLEM_TAG)
    model = rng.standard_normal(desc.layout.total_dim)
    model /= np.linalg.norm(model)
    oracles = []
    for k in range(net.agent_count):
        inner = random_quadratic_oracle(cmap0.gather_local(model, k), rng)
        if net.interest_sets[k] == cmap0.agent_blocks[k]:
            oracles.append(inner)
        else:
            positions = np.concatenate([
                np.arange(cmap.local_slice(k, l).start, cmap.local_slice(k, l).stop)
                for l in cmap0.agent_blocks[k]
            ])
            oracles.append(PaddedOracle(inner, positions, cmap.local_dims[k]))
    oracles = tuple(oracles)
    if constrained:
        constraints = _draw_constraints(desc, cmap, _problem_rng(seed, _CONSTRAINT_TAG))
    else:
        constraints = tuple(() for _ in range(desc.net.agent_count))
    problem = MultiAgentProblem(
        net=desc.net,
        layout=desc.layout,
        cmap=cmap,
        oracles=oracles,
        constraints=constraints,
        penalty=PenaltyConfig(eta=0.0, rho=rho),
        true_model=model,
    )
    nu = problem.strong_convexity()
    if nu <= 0.0:
        raise SingularSystem(f"assembled risk Hessian is not strongly convex (nu={nu:.2e})")
    return problem


def generate_benchmark_problem(seed: int, constrained: bool = False,
                               rho: float = 1.0) -> MultiAgentProblem:
    """The bundled 20-agent, five-block benchmark instance for this seed."""
    return build_problem(load_network("benchmark20"), seed, constrained=constrained, rho=rho)


def regenerate_constraints(problem: MultiAgentProblem, desc: NetworkDescription,
                           seed: int, epoch: int) -> MultiAgentProblem:
    """Fresh constraint draw (sub-seeded) for tracking scenarios."""
    rng = _problem_rng(seed, _CONSTRAINT_TAG + 1 + epoch)
    return dataclasses.replace(problem, constraints=_draw_constraints(desc, problem.cmap, rng))


@dataclass
class ResultTable:
    """Rows of (scenario, mu, eta, seed, iteration, msd_db, disagreement_max, dist_wo_db)."""

    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def mean_rows(self):
        return [r for r in self.rows if r[3] == "mean"]


CSV_HEADER = ("scenario", "mu", "eta", "seed", "iteration", "msd_db",
              "disagreement_max", "dist_wo_db")


def emit_results(table: ResultTable, path) -> None:
    """Write the result CSV plus a sidecar metadata file.

    Floats are rendered with shortest round-trip decimals; identical
    configs therefore produce byte-identical files.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in table.rows:
            writer.writerow([_fmt(v) for v in row])
    meta = {"config": table.config, "version": __version__, "csv_header": list(CSV_HEADER)}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    return v


def _build_weights(cmap, net, rule: str):
    make = metropolis_weights if rule == "metropolis" else averaging_weights
    return {l: make(cmap, net, l) for l in range(len(cmap.clusters))}


def _run_one(problem, weights, scaling, ecfg: EngineConfig, seed: int,
             refs: ReferenceSolution, log_every: int, init_global,
             change=None) -> MetricsLog:
    """Execute one run of the selected algorithm, logging metrics.

    `change` is an optional (iteration, problem, refs) triple applied
    before the step with that index (constraint regeneration).
    """
    cmap = problem.cmap
    log = MetricsLog()
    flat_from_global = np.concatenate(
        [cmap.global_indices(k) for k in range(problem.agent_count)]
    )
    if ecfg.algorithm == "coupled":
        state = init_state(problem, seed, init_global)
        for i in range(ecfg.iterations):
            if change is not None and i == change[0]:
                problem, refs = change[1], change[2]
            coupled_diffusion_step(state, problem, weights, scaling, ecfg)
            if state.iteration % log_every == 0 or state.iteration == ecfg.iterations:
                log.record(state.iteration, state.w, cmap, weights, refs)
    elif ecfg.algorithm == "admm":
        state = init_admm_state(problem, seed)
        if init_global is not None:
            state.w = init_state(problem, seed, init_global).w
        for i in range(ecfg.iterations):
            if change is not None and i == change[0]:
                problem, refs = change[1], change[2]
            admm_linearized_step(state, problem, ecfg)
            if state.iteration % log_every == 0 or state.iteration == ecfg.iterations:
                log.record(state.iteration, state.w, cmap, weights, refs)
    elif ecfg.algorithm == "centralized":
        w = np.zeros(problem.layout.total_dim)
        if init_global is not None:
            w = np.asarray(init_global, dtype=float).copy()
        d_blocks = [1.0 / len(c) for c in cmap.clusters]
        rngs = agent_streams(seed, problem.agent_count)
        for i in range(ecfg.iterations):
            if change is not None and i == change[0]:
                problem, refs = change[1], change[2]
            w = centralized_step(w, d_blocks, problem, ecfg, rngs)
            if (i + 1) % log_every == 0 or i + 1 == ecfg.iterations:
                log.record(i + 1, w[flat_from_global], cmap, weights, refs)
    else:  # pragma: no cover - EngineConfig already validates
        raise ConfigError(f"unknown algorithm {ecfg.algorithm!r}")
    return log


def run_scenario(cfg: ScenarioConfig) -> ResultTable:
    """Run every (mu, eta, seed) combination of a scenario and merge logs.

    Per-seed rows are followed by seed-mean rows (seed column "mean");
    means are taken over linear MSD values and converted to dB. The
    sweep scenario emits only steady-state rows, one per run, using the
    mean over the final 10% of iterations.
    """
    desc = load_network(cfg.network, cfg.block_dims)
    base = build_problem(desc, cfg.problem_seed, constrained=cfg.uses_constraints, rho=cfg.rho)
    weights = _build_weights(base.cmap, base.net, cfg.weight_rule)
    scaling = step_scaling(base.cmap, weights)

    table = ResultTable(config=cfg.to_dict())
    for mu in cfg.mu_list:
        for eta in cfg.eta_list:
            refs = reference_solution(base, eta)
            change = None
            if cfg.scenario == "tracking":
                changed = regenerate_constraints(base, desc, cfg.problem_seed, epoch=0)
                change = (cfg.change_point, changed, reference_solution(changed, eta))
            init_global = refs.w_star if cfg.initial == "reference" else None
            ecfg = EngineConfig(mu=mu, eta=eta, iterations=cfg.iterations,
                                noise=cfg.noise, algorithm=cfg.algorithm,
                                rho_admm=cfg.rho_admm)
            logs = [
                _run_one(base, weights, scaling, ecfg, seed, refs,
                         cfg.log_every, init_global, change)
                for seed in cfg.seeds
            ]
            if cfg.scenario == "sweep":
                _append_steady_rows(table, cfg, mu, eta, logs)
            else:
                _append_iteration_rows(table, cfg, mu, eta, logs)
    return table


def _append_iteration_rows(table, cfg, mu, eta, logs):
    for seed, log in zip(cfg.seeds, logs):
        for j, it in enumerate(log.iterations):
            table.rows.append((
                cfg.scenario, mu, eta, str(seed), it,
                db(log.msd_star[j]), float(log.disagreement[j].max()), db(log.msd_o[j]),
            ))
    n_records = len(logs[0].iterations)
    for j in range(n_records):
        it = logs[0].iterations[j]
        mean_star = float(np.mean([lg.msd_star[j] for lg in logs]))
        mean_o = float(np.mean([lg.msd_o[j] for lg in logs]))
        mean_dis = float(np.mean([lg.disagreement[j].max() for lg in logs]))
        table.rows.append((cfg.scenario, mu, eta, "mean", it, db(mean_star), mean_dis, db(mean_o)))


def steady_state(values, fraction: float = 0.1) -> float:
    """Mean of the final `fraction` of a per-iteration series."""
    values = np.asarray(values, dtype=float)
    tail = max(1, int(round(fraction * values.shape[0])))
    return float(values[-tail:].mean())


def _append_steady_rows(table, cfg, mu, eta, logs):
    stars, onorms, diss = [], [], []
    for seed, log in zip(cfg.seeds, logs):
        s = steady_state(log.msd_star)
        o = steady_state(log.msd_o)
        d = steady_state(log.max_disagreement())
        stars.append(s)
        onorms.append(o)
        diss.append(d)
        table.rows.append((cfg.scenario, mu, eta, str(seed), cfg.iterations,
                           db(s), d, db(o)))
    table.rows.append((cfg.scenario, mu, eta, "mean", cfg.iterations,
                       db(float(np.mean(stars))), float(np.mean(diss)),
                       db(float(np.mean(onorms)))))
