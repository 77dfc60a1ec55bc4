import numpy as np
import pytest

from coke import nn
from coke.core import Dataset, is_acyclic, partition_by_recipe
from coke.errors import ConfigError, DataFormatError, NumericalError
from coke.formats import load_params
from coke.scoring import exhaustive_best_ordering
from coke.synthgen import GenConfig, generate_benchmark
from coke.trainer import TrainConfig, Trainer, resample_batches, train, update_baseline


@pytest.fixture(scope="module")
def small_bench():
    return generate_benchmark(GenConfig(p=8, k=3, samples=4000, target_missing_rate=0.6, seed=1))


def recipe_dataset(sizes):
    """One complete recipe plus incomplete recipes with the given row counts."""
    rows, labels = [], []
    rng = np.random.default_rng(0)
    for r, size in enumerate(sizes):
        for _ in range(size):
            row = rng.normal(size=3)
            if r > 0:
                row[r % 3] = np.nan
            rows.append(row)
            labels.append(f"r{r}")
    return Dataset.from_matrix(np.array(rows), labels, [0, 1, 2])


def test_resample_boundaries():
    ds = recipe_dataset([10, 4, 5])
    recipes = partition_by_recipe(ds)
    b = resample_batches(ds, recipes, 5, np.random.default_rng(0))
    assert b.full.shape == (5, 3)
    assert [m.recipe_id for m in b.miss] == ["r2"]
    r2 = next(r for r in recipes if r.id == "r2")
    assert np.array_equal(b.miss[0].values, ds.values[np.sort(r2.row_indices)], equal_nan=True)
    b1 = resample_batches(ds, recipes, 5, np.random.default_rng(1))
    b2 = resample_batches(ds, recipes, 5, np.random.default_rng(2))
    assert b1.full.shape == b2.full.shape
    assert not np.array_equal(b1.full, b2.full)
    with pytest.raises(ConfigError):
        resample_batches(ds, recipes, 11, np.random.default_rng(0))


def test_resample_miss_only_fallback():
    values = np.array([[1.0, 2.0, np.nan], [3.0, 1.0, np.nan], [2.0, 2.5, np.nan], [np.nan, 1.0, 4.0], [np.nan, 2.0, 5.0]])
    ds = Dataset.from_matrix(values, ["a", "a", "a", "b", "b"], [0, 1, 2])
    b = resample_batches(ds, partition_by_recipe(ds), 2, np.random.default_rng(0), miss_only=True)
    assert b.full is None
    assert b.score.shape == (2, 2)
    assert b.score_columns.tolist() in ([0, 1], [1, 2])


def test_baseline_recursion():
    b = 0.0
    for r in (1.0, 1.0, 1.0):
        b = update_baseline(b, r, 0.5)
    assert b == 0.875


def test_zero_advantage_zero_actor_gradient():
    params = nn.NetworkParams.initialize(8, 8, 0)
    T = params.tensors()
    z = nn.embed(np.random.default_rng(0).normal(size=(8, 5)), [], np.ones((5, 5), bool) & ~np.eye(5, dtype=bool), T).z
    loss = nn.ordering_log_prob(z, (0, 1, 2, 3, 4), T) * 0.0
    assert not any(g.any() for g in nn.gradients(loss, T).values())


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(iterations=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1).validate()
    with pytest.raises(ConfigError):
        TrainConfig(gamma=1.0).validate()


def test_one_step_and_single_iteration(small_bench):
    cfg = TrainConfig(iterations=1, batch_size=16, hidden=8, seed=3)
    tr = Trainer(small_bench.data, small_bench.expert_knowledge, cfg)
    cand, params, baseline = tr.step()
    assert params.all_finite()
    assert sorted(cand.ordering.perm) == list(range(8))
    assert baseline == pytest.approx(0.05 * cand.reward)
    res = train(small_bench.data, small_bench.expert_knowledge, cfg)
    assert len(res.trace.records) == 1
    assert res.best.iteration == 0
    assert res.best.reward == res.trace.records[0].reward


def test_trace_invariants(small_bench):
    cfg = TrainConfig(iterations=60, batch_size=16, hidden=8, seed=5, greedy_every=10)
    tr = Trainer(small_bench.data, small_bench.expert_knowledge, cfg, truth=small_bench.truth.dag)
    best_so_far = -np.inf
    for _ in range(cfg.iterations):
        cand, _, _ = tr.step()
        assert is_acyclic(cand.adjacency)
        assert not (cand.adjacency & ~tr.g_k).any()
        assert tr.best.reward >= best_so_far
        best_so_far = tr.best.reward
    rewards = [r.reward for r in tr.trace.records]
    assert len(rewards) == 60
    assert tr.best.reward >= max(rewards)
    assert all(r.f1 is not None for r in tr.trace.records)
    rec = tr.trace.records[7]
    assert rec.reward == pytest.approx(-rec.bic_term - rec.penalty)


def test_determinism(small_bench):
    cfg = TrainConfig(iterations=30, batch_size=16, hidden=8, seed=11)
    a = train(small_bench.data, small_bench.expert_knowledge, cfg)
    b = train(small_bench.data, small_bench.expert_knowledge, cfg)
    assert np.array_equal(a.best.adjacency, b.best.adjacency)
    assert a.trace.rewards().tobytes() == b.trace.rewards().tobytes()
    c = train(small_bench.data, small_bench.expert_knowledge, TrainConfig(iterations=30, batch_size=16, hidden=8, seed=12))
    assert c.trace.rewards().tobytes() != a.trace.rewards().tobytes()


def test_ablation_switches(small_bench):
    m = small_bench.data.machine_of
    cfg = TrainConfig(iterations=100, batch_size=16, hidden=8, seed=2, use_incomplete=False, use_chronology=False)
    tr = Trainer(small_bench.data, small_bench.expert_knowledge, cfg)
    backwards = 0
    for _ in range(cfg.iterations):
        cand, _, _ = tr.step()
        i, j = np.nonzero(cand.adjacency)
        backwards += int(np.sum(m[i] > m[j]))
    assert backwards > 0
    assert all(r.theta_miss == 0.0 for r in tr.trace.records)
    ek_off = Trainer(small_bench.data, small_bench.expert_knowledge, TrainConfig(iterations=5, batch_size=16, hidden=8, use_expert=False))
    ek_off.run()
    assert all(r.penalty == 0.0 for r in ek_off.trace.records)
    assert not ek_off.ek


def test_missing_full_recipe_needs_miss_only():
    values = np.array([[1.0, np.nan], [2.0, np.nan], [3.0, np.nan], [np.nan, 1.0], [np.nan, 2.0], [np.nan, 0.5]])
    ds = Dataset.from_matrix(values, ["a"] * 3 + ["b"] * 3, [0, 1])
    with pytest.raises(DataFormatError):
        Trainer(ds, None, TrainConfig(iterations=2, batch_size=2, hidden=4))
    with pytest.warns(UserWarning, match="no complete rows"):
        res = train(ds, None, TrainConfig(iterations=3, batch_size=2, hidden=4, miss_only=True))
    assert len(res.trace.records) == 3
    assert all(r.theta_full == 0.0 for r in res.trace.records)


def test_non_finite_aborts(small_bench):
    tr = Trainer(small_bench.data, None, TrainConfig(iterations=2, batch_size=16, hidden=8))
    tr.params.arrays["dec_w"][:] = np.nan
    with pytest.raises(NumericalError, match="non-finite"):
        tr.step()


def test_checkpoint_written(small_bench, tmp_path):
    path = tmp_path / "params.json"
    cfg = TrainConfig(iterations=4, batch_size=16, hidden=8, checkpoint_every=2)
    res = train(small_bench.data, None, cfg, checkpoint_path=path)
    saved = load_params(path)
    assert all(saved[k].tobytes() == res.params[k].tobytes() for k in saved.arrays)


def chain4_dataset(seed, n=512):
    """d=4 chain 0->1->2->3 on two machines, fully observed."""
    rng = np.random.default_rng(seed)
    x = np.empty((n, 4))
    x[:, 0] = rng.normal(size=n)
    for j in range(1, 4):
        x[:, j] = x[:, j - 1] + rng.normal(size=n)
    return Dataset.from_matrix(x, ["r_full"] * n, [0, 0, 1, 1])


@pytest.mark.slow
def test_training_reaches_exhaustive_optimum():
    hits = 0
    for seed in range(3):
        ds = chain4_dataset(seed)
        cfg = TrainConfig(iterations=500, batch_size=512, hidden=16, seed=seed)
        tr = Trainer(ds, None, cfg)
        res = tr.run()
        _, oracle = exhaustive_best_ordering(ds.values, tr.g_k)
        hits += abs(res.best.reward - oracle.reward) <= 1e-6
    assert hits >= 2
