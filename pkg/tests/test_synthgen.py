import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coke.core import edges_of, is_acyclic, machine_monotone, partition_by_recipe
from coke.errors import ConfigError
from coke.synthgen import (
    FULL_RECIPE_ID,
    MISSING_RATE_TOLERANCE,
    GenConfig,
    GroundTruth,
    apply_recipe_missingness,
    generate_benchmark,
    generate_ground_truth,
    machine_assignment,
    sample_complete_data,
)


def test_four_sensor_two_machine_full_density():
    gt = generate_ground_truth(GenConfig(p=4, k=2, edge_density=1.0, seed=0))
    assert gt.machine_of.tolist() == [0, 0, 1, 1]
    assert set(edges_of(gt.dag)) == {(0, 1), (2, 3), (0, 2), (0, 3), (1, 2), (1, 3)}


def test_zero_density_is_empty():
    gt = generate_ground_truth(GenConfig(p=6, k=2, edge_density=0.0, seed=3))
    assert not gt.dag.any()
    assert gt.expert_required == ()


def test_machine_assignment_contiguous_balanced():
    m = machine_assignment(10, 3)
    assert np.all(np.diff(m) >= 0)
    assert sorted(np.bincount(m).tolist()) == [3, 3, 4]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_large_graph_structure(seed):
    gt = generate_ground_truth(GenConfig(p=180, k=60, seed=seed))
    assert is_acyclic(gt.dag)
    assert machine_monotone(gt.dag, gt.machine_of)
    same = gt.machine_of[:, None] == gt.machine_of[None, :]
    i, j = np.nonzero(gt.dag & same)
    assert np.all(i < j)
    assert len(gt.expert_required) == 10
    assert all(gt.dag[e] for e in gt.expert_required)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 10), st.integers(0, 2**32))
def test_ground_truth_properties(p, k, seed):
    k = min(k, p)
    gt = generate_ground_truth(GenConfig(p=p, k=k, seed=seed))
    assert is_acyclic(gt.dag) and machine_monotone(gt.dag, gt.machine_of)
    assert set(gt.expert_required) <= set(edges_of(gt.dag))
    assert len(gt.expert_required) == min(10, int(gt.dag.sum()))


def test_root_means_range_and_column_means():
    cfg = GenConfig(p=20, k=8, seed=5)
    gt = generate_ground_truth(cfg)
    data = sample_complete_data(gt, cfg)
    for j, mu in gt.root_means.items():
        assert -2.0 <= mu <= 2.0
        assert abs(data.values[:, j].mean() - mu) < 4 * cfg.noise_sigma / np.sqrt(cfg.samples)


def test_constant_root_limit():
    gt = GroundTruth(np.zeros((1, 1), bool), np.array([0]), (), {0: 1.25})
    data = sample_complete_data(gt, GenConfig(p=1, k=1, samples=100, noise_sigma=1e-9))
    assert np.allclose(data.values[:, 0], 1.25, atol=1e-6)


def test_chain_correlation():
    dag = np.array([[False, True], [False, False]])
    gt = GroundTruth(dag, np.array([0, 1]), (), {0: 0.0})
    data = sample_complete_data(gt, GenConfig(p=2, k=2, samples=10_000, seed=11))
    r = np.corrcoef(data.values.T)[0, 1]
    assert abs(r - 1 / np.sqrt(2)) < 0.05


def test_two_parent_regression_coefficients():
    dag = np.zeros((3, 3), bool)
    dag[0, 2] = dag[1, 2] = True
    gt = GroundTruth(dag, np.array([0, 0, 1]), (), {0: 1.0, 1: -1.0})
    x = sample_complete_data(gt, GenConfig(p=3, k=2, samples=10_000, seed=2)).values
    design = np.column_stack([np.ones(len(x)), x[:, 0], x[:, 1]])
    coef = np.linalg.lstsq(design, x[:, 2], rcond=None)[0]
    assert np.allclose(coef[1:], [0.5, 0.5], atol=0.05)


def test_zero_missing_rate_single_recipe():
    bench = generate_benchmark(GenConfig(p=6, k=2, samples=200, target_missing_rate=0.0, recipe_count=1))
    assert bench.data.recipe_ids == (FULL_RECIPE_ID,)
    assert bench.data.observed.all()
    assert bench.report.realized_rate == 0.0


def test_p50_k20_ninety_percent():
    bench = generate_benchmark(GenConfig(p=50, k=20, samples=10_000, target_missing_rate=0.9, seed=7))
    assert 0.88 <= bench.report.realized_rate <= 0.92


@pytest.mark.parametrize("target", [0.5, 0.8, 0.9])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_missing_rate_and_recipe_structure(target, seed):
    cfg = GenConfig(p=20, k=8, target_missing_rate=target, seed=seed)
    bench = generate_benchmark(cfg)
    ds = bench.data
    assert abs(ds.missing_rate() - target) <= MISSING_RATE_TOLERANCE
    recipes = partition_by_recipe(ds)
    full = [r for r in recipes if r.is_full]
    assert len(full) == 1 and full[0].id == FULL_RECIPE_ID
    assert full[0].n_rows == round(cfg.full_fraction * cfg.samples)
    sizes = [r.n_rows for r in recipes if not r.is_full]
    assert max(sizes) - min(sizes) <= 1
    for r in recipes:
        if r.is_full:
            continue
        assert r.missing, "every incomplete recipe bypasses at least one machine"
        # bypass is whole machines
        missing_machines = set(ds.machine_of[list(r.missing)])
        for j in range(ds.n_vars):
            assert (j in r.missing) == (ds.machine_of[j] in missing_machines)


def test_infeasible_target_rejected():
    with pytest.raises(ConfigError):
        GenConfig(target_missing_rate=0.995, full_fraction=0.01).validate()
    with pytest.raises(ConfigError):
        GenConfig(target_missing_rate=0.5, recipe_count=1).validate()
    with pytest.raises(ConfigError):
        GenConfig(p=3, k=5).validate()


def test_missingness_requires_complete_input():
    bench = generate_benchmark(GenConfig(p=5, k=2, samples=300))
    with pytest.raises(ConfigError):
        apply_recipe_missingness(bench.data, bench.truth, bench.config)


def test_determinism():
    cfg = GenConfig(p=15, k=5, seed=99)
    a, b = generate_benchmark(cfg), generate_benchmark(cfg)
    assert np.array_equal(a.truth.dag, b.truth.dag)
    assert a.data.values.tobytes() == b.data.values.tobytes()
    assert np.array_equal(a.data.recipe_of, b.data.recipe_of)
    assert a.truth.expert_required == b.truth.expert_required
    c = generate_benchmark(GenConfig(p=15, k=5, seed=100))
    assert c.data.values.tobytes() != a.data.values.tobytes()
