import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from coupled_diffusion import (
    ScenarioConfig,
    config_from_dict,
    emit_results,
    generate_benchmark_problem,
    load_network,
    run_scenario,
)
from coupled_diffusion.cli import main as cli_main
from coupled_diffusion.errors import ConfigError
from coupled_diffusion.harness import CSV_HEADER, ResultTable, steady_state


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario="unconstrained", seeds=())
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario="bogus")
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario="tracking")  # needs change_point
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario="tracking", change_point=500, iterations=100)
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario="unconstrained", mu_list=())
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario="unconstrained", weight_rule="uniform")


def test_config_from_sections():
    raw = {
        "network": {"source": "benchmark20"},
        "blocks": {"dims": [5, 5, 5, 5, 5]},
        "objective": {"problem_seed": 3},
        "penalty": {"eta": [10.0], "rho": 0.5},
        "engine": {"mu": [0.001], "iterations": 50, "weight_rule": "averaging"},
        "scenario": {"id": "constrained", "seeds": [1, 2]},
    }
    cfg = config_from_dict(raw)
    assert cfg.scenario == "constrained"
    assert cfg.mu_list == (0.001,)
    assert cfg.eta_list == (10.0,)
    assert cfg.rho == 0.5
    assert cfg.block_dims == (5, 5, 5, 5, 5)
    assert cfg.weight_rule == "averaging"
    assert cfg.uses_constraints
    with pytest.raises(ConfigError):
        config_from_dict({"scenario": {}})


def test_builtin_networks_load():
    for name in ("benchmark20", "example5"):
        desc = load_network(name)
        assert desc.net.is_connected()
    bench = load_network("benchmark20")
    assert bench.net.agent_count == 20
    assert bench.layout.dims == (5, 5, 5, 5, 5)
    assert bench.constraint_owners == (1, 9, 15, 4, 16)


def test_load_one_based_network(tmp_path):
    raw = {
        "index_base": 1,
        "agent_count": 3,
        "block_dims": [2, 2],
        "edges": [[1, 2], [2, 3]],
        "interest_sets": [[1], [1, 2], [2]],
    }
    path = tmp_path / "net.json"
    path.write_text(json.dumps(raw))
    desc = load_network(str(path))
    assert desc.net.edges == frozenset({(0, 1), (1, 2)})
    assert desc.net.interest_sets == ((0,), (0, 1), (1,))


def test_benchmark_problem_properties():
    p = generate_benchmark_problem(11, constrained=True)
    assert np.linalg.norm(p.true_model) == pytest.approx(1.0, abs=1e-12)
    for o in p.oracles:
        assert np.all(o.spectrum >= 1.0) and np.all(o.spectrum <= 3.0)
        assert 1e-3 <= o.noise_std**2 <= 1e-2
    owners = [c.owner for cons in p.constraints for c in cons]
    assert sorted(owners) == sorted([1, 9, 15, 4, 16])
    for cons in p.constraints:
        for c in cons:
            assert np.linalg.norm(c.coeffs) == pytest.approx(1.0, abs=1e-12)
            assert -1.0 <= c.offset <= 1.0
            # owner belongs to the cluster of every block it constrains
            assert c.owner in range(20)


def test_benchmark_problem_bit_identical_per_seed():
    a = generate_benchmark_problem(5, constrained=True)
    b = generate_benchmark_problem(5, constrained=True)
    assert np.array_equal(a.true_model, b.true_model)
    for oa, ob in zip(a.oracles, b.oracles):
        assert np.array_equal(oa.basis, ob.basis)
        assert np.array_equal(oa.spectrum, ob.spectrum)
        assert oa.noise_std == ob.noise_std
    for ca, cb in zip(a.constraints, b.constraints):
        for x, y in zip(ca, cb):
            assert np.array_equal(x.coeffs, y.coeffs) and x.offset == y.offset


def test_build_problem_embeds_with_zero_cost_bridges(tmp_path):
    """A topology with a split cluster gets bridged; the bridge agent's risk
    must not involve the added block."""
    raw = {
        "index_base": 0,
        "agent_count": 3,
        "block_dims": [2, 2],
        "edges": [[0, 1], [1, 2]],
        "interest_sets": [[0], [1], [0]],  # block 0 lives on {0, 2}: no edge
    }
    path = tmp_path / "split.json"
    path.write_text(json.dumps(raw))
    from coupled_diffusion.harness import build_problem
    from coupled_diffusion.objective import PaddedOracle

    desc = load_network(str(path))
    problem = build_problem(desc, seed=0)
    # agent 1 bridged block 0 and now holds both blocks, with zero cost on 0
    assert problem.cmap.clusters[0] == (0, 1, 2)
    assert isinstance(problem.oracles[1], PaddedOracle)
    grad = problem.oracles[1].true_gradient(np.ones(problem.cmap.local_dims[1]))
    assert np.array_equal(grad[problem.cmap.local_slice(1, 0)], [0.0, 0.0])
    assert problem.strong_convexity() > 0
    # the whole pipeline still runs
    from coupled_diffusion import EngineConfig, coupled_diffusion_step, init_state, metropolis_weights, step_scaling

    weights = {l: metropolis_weights(problem.cmap, problem.net, l) for l in range(2)}
    scaling = step_scaling(problem.cmap, weights)
    state = init_state(problem, 0)
    for _ in range(5):
        coupled_diffusion_step(state, problem, weights, scaling, EngineConfig(mu=0.01))
    assert np.isfinite(state.w).all()


def _small_cfg(**over):
    base = dict(
        scenario="unconstrained",
        mu_list=(0.004,),
        eta_list=(0.0,),
        iterations=300,
        seeds=(0, 1),
        log_every=10,
    )
    base.update(over)
    return ScenarioConfig(**base)


def test_run_scenario_deterministic_and_emit_byte_identical(tmp_path):
    cfg = _small_cfg()
    t1 = run_scenario(cfg)
    t2 = run_scenario(cfg)
    assert t1.rows == t2.rows
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_results(t1, p1)
    emit_results(t2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["config"]["scenario"] == "unconstrained"
    assert "version" in meta


def test_result_rows_structure():
    cfg = _small_cfg()
    table = run_scenario(cfg)
    per_seed = [r for r in table.rows if r[3] != "mean"]
    means = table.mean_rows()
    # 30 logged iterations per run, 2 seeds, plus 30 mean rows
    assert len(per_seed) == 60 and len(means) == 30
    assert all(r[0] == "unconstrained" for r in table.rows)
    assert means[-1][4] == 300


def test_smaller_mu_gives_lower_steady_msd():
    cfg = ScenarioConfig(
        scenario="unconstrained", mu_list=(0.004, 0.001), eta_list=(0.0,),
        iterations=800, seeds=(0, 1, 2), log_every=10,
    )
    table = run_scenario(cfg)

    def steady_of(mu):
        vals = [10 ** (r[5] / 10) for r in table.mean_rows() if r[1] == mu]
        return steady_state(vals)

    assert steady_of(0.001) < steady_of(0.004)


def test_sweep_emits_steady_rows_only():
    cfg = ScenarioConfig(
        scenario="sweep", mu_list=(0.001,), eta_list=(10.0,),
        iterations=400, seeds=(0, 1), log_every=10,
    )
    table = run_scenario(cfg)
    assert len(table.rows) == 3  # two seeds + one mean row
    assert all(r[4] == 400 for r in table.rows)
    assert cfg.initial == "reference"


def test_tracking_scenario_shows_jump():
    cfg = ScenarioConfig(
        scenario="tracking", mu_list=(0.002,), eta_list=(100.0,),
        iterations=700, seeds=(0, 1), change_point=400, log_every=10,
    )
    table = run_scenario(cfg)
    means = {r[4]: 10 ** (r[5] / 10) for r in table.mean_rows()}
    assert means[410] > 3 * means[400]  # constraint regeneration bumps the MSD
    assert means[700] < 0.5 * means[410]  # and the algorithm re-converges


def test_emit_results_empty_and_single(tmp_path):
    path = tmp_path / "empty.csv"
    emit_results(ResultTable(rows=[], config={}), path)
    lines = path.read_text().strip().splitlines()
    assert lines == [",".join(CSV_HEADER)]
    one = ResultTable(rows=[("unconstrained", 0.001, 0.0, "0", 1, -10.0, 0.5, -10.0)], config={})
    path2 = tmp_path / "one.csv"
    emit_results(one, path2)
    assert len(path2.read_text().strip().splitlines()) == 2


def _write_cfg(tmp_path, scenario="unconstrained"):
    raw = {
        "network": {"source": "benchmark20"},
        "objective": {"problem_seed": 7},
        "penalty": {"eta": [0.0]},
        "engine": {"mu": [0.004], "iterations": 120},
        "scenario": {"id": scenario, "seeds": [0], "log_every": 20},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def test_cli_run_and_reproducibility(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert cli_main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli_main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
    csv1 = (out1 / "unconstrained.csv").read_bytes()
    csv2 = (out2 / "unconstrained.csv").read_bytes()
    assert csv1 == csv2
    assert (out1 / "unconstrained.csv.meta.json").exists()


def test_cli_overrides(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "o3"
    rc = cli_main([
        "run", "--config", str(cfg), "--out", str(out),
        "--mu", "0.002", "--iters", "60", "--seeds", "0,1",
    ])
    assert rc == 0
    lines = (out / "unconstrained.csv").read_text().strip().splitlines()
    # 3 logged iterations x (2 seeds + mean)
    assert len(lines) == 1 + 9
    assert lines[1].split(",")[1] == "0.002"


def test_cli_error_is_machine_readable(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(yaml.safe_dump({"scenario": {"id": "nope", "seeds": [0]}}))
    rc = cli_main(["run", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ")
    payload = json.loads(err[len("error: "):])
    assert payload["type"] == "ConfigError"


def test_cli_subprocess_smoke(tmp_path):
    cfg = _write_cfg(tmp_path)
    res = subprocess.run(
        [sys.executable, "-m", "coupled_diffusion.cli", "run", "--config", str(cfg),
         "--out", str(tmp_path / "sp")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "sp" / "unconstrained.csv").exists()
