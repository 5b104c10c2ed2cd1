import numpy as np
import pytest

from coupled_diffusion import (
    BlockLayout,
    NetworkSpec,
    QuadraticRiskOracle,
    build_clusters,
    generate_benchmark_problem,
    metropolis_weights,
    step_scaling,
)


@pytest.fixture(scope="session")
def five_agent_net():
    """Five agents, four blocks; the illustrative coupled-interest example."""
    return NetworkSpec(
        agent_count=5,
        edges=frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)}),
        interest_sets=((0, 1), (0,), (0, 2), (0, 2, 3), (0, 3)),
    )


@pytest.fixture(scope="session")
def five_agent_cmap(five_agent_net):
    return build_clusters(five_agent_net, BlockLayout((2, 1, 3, 1)))


@pytest.fixture(scope="session")
def bridge_net():
    """Five agents where two clusters are disconnected subgraphs.

    Edges 0-1, 0-3, 1-2, 3-4; block 1 lives on agents {1,3} (no edge),
    block 2 on agents {0,2} (no edge), block 3 only on agent 4.
    """
    return NetworkSpec(
        agent_count=5,
        edges=frozenset({(0, 1), (0, 3), (1, 2), (3, 4)}),
        interest_sets=((0, 2), (0, 1), (0, 2), (0, 1), (0, 3)),
    )


@pytest.fixture(scope="session")
def benchmark_problem():
    return generate_benchmark_problem(7)


@pytest.fixture(scope="session")
def benchmark_weights(benchmark_problem):
    p = benchmark_problem
    return {
        l: metropolis_weights(p.cmap, p.net, l) for l in range(p.layout.block_count)
    }


@pytest.fixture(scope="session")
def benchmark_scaling(benchmark_problem, benchmark_weights):
    return step_scaling(benchmark_problem.cmap, benchmark_weights)


def single_agent_problem(dim=3, noise_std=0.0, w_ref=None, seed=0):
    """One agent, one block: the classic single-task reduction."""
    from coupled_diffusion import MultiAgentProblem, PenaltyConfig, random_quadratic_oracle

    net = NetworkSpec(agent_count=1, edges=frozenset(), interest_sets=((0,),))
    layout = BlockLayout((dim,))
    cmap = build_clusters(net, layout)
    rng = np.random.default_rng(seed)
    if w_ref is None:
        w_ref = rng.standard_normal(dim)
    oracle = random_quadratic_oracle(w_ref, rng)
    oracle = QuadraticRiskOracle(
        basis=oracle.basis, spectrum=oracle.spectrum, w_ref=w_ref, noise_std=noise_std
    )
    return MultiAgentProblem(
        net=net, layout=layout, cmap=cmap, oracles=(oracle,),
        constraints=((),), penalty=PenaltyConfig(), true_model=np.asarray(w_ref, float),
    )
