"""Acceptance suite: one test per release criterion, at the stated
tolerances. Each test prints a single PASS line on success so the suite
reads as a checklist under pytest -v -s."""

import numpy as np
import pytest
import scipy.stats

from lcl import curriculum as cur
from lcl import data, experiments as ex, model
from lcl import similarity as sm

EPS_GRID = (0.9, 0.99, 0.999)


def random_dominant_matrix(c, rng):
    m = rng.uniform(0.0, 1.0, size=(c, c))
    np.fill_diagonal(m, 0.0)
    diag = m.max(axis=1) + rng.uniform(0.1, 1.0, size=c)
    m[np.arange(c), np.arange(c)] = diag
    m /= m.sum(axis=1, keepdims=True)
    return m


def test_curriculum_axioms_property():
    """>= 1000 random valid rows, C in {2,10,100} x eps grid, 500 steps."""
    rng = np.random.default_rng(2024)
    rows_checked = 0
    for eps in EPS_GRID:
        for c, n_matrices in ((2, 30), (10, 10), (100, 2)):
            for _ in range(n_matrices):
                schedule = cur.TargetSchedule(
                    targets=random_dominant_matrix(c, rng), epsilon=eps)
                report = cur.verify_curriculum(schedule, 500)
                assert report.passed, report.summary()
                rows_checked += c
    assert rows_checked >= 1000
    print(f"PASS curriculum axioms: {rows_checked} rows x 500 steps")


def test_closed_form_equivalence():
    """Iterated 2-class rows match the closed-form off-diagonal mass."""
    rng = np.random.default_rng(7)
    checkpoints = (1, 2, 5, 10, 50, 100, 500, 1000)
    for _ in range(100):
        s0 = float(rng.uniform(0.01, 0.49))
        eps = float(rng.choice(EPS_GRID))
        row = np.array([1.0 - s0, s0])
        t = 0
        for target_t in checkpoints:
            while t < target_t:
                row = cur.step_row(row, 0, eps)
                t += 1
            assert abs(row[1] - cur.off_diagonal_mass_closed_form(s0, eps, t)) \
                <= 1e-12, (s0, eps, t)
    print("PASS closed form: 100 starts, t <= 1000, within 1e-12")


def test_one_hot_fixed_point():
    """One-hot rows are bitwise-stable under the update."""
    for eps in EPS_GRID:
        s = cur.TargetSchedule(targets=np.eye(6), epsilon=eps)
        assert np.array_equal(cur.step(s).targets, np.eye(6))
    print("PASS fixed point: one-hot rows bitwise stable")


def test_label_smoothing_conformance():
    """alpha=0.1, C=10 gives exactly 0.91 on the true class, 0.01 elsewhere."""
    v = cur.label_smoothing(3, 10, 0.1)
    assert v.probs[3] == 0.91
    assert np.all(np.delete(v.probs, 3) == 0.01)
    print("PASS label smoothing: exact (0.91, 0.01 x 9)")


def test_gradient_correctness():
    """Analytic vs central finite differences, 100 instances, rel err < 1e-4."""
    from test_model import finite_difference, random_instance
    rng = np.random.default_rng(123)
    for architecture in ("linear", "mlp1"):
        for _ in range(50):
            params, batch = random_instance(architecture, rng)
            lam = float(rng.uniform(0.0, 0.1))
            analytic = model.gradient(params, batch, lam).arrays()
            numeric = finite_difference(params, batch, lam)
            for a, n in zip(analytic, numeric):
                denom = max(np.linalg.norm(n), 1e-12)
                assert np.linalg.norm(a - n) / denom < 1e-4
    print("PASS gradients: 100 instances within 1e-4 of finite differences")


def test_degenerate_curriculum_equals_sl():
    """LCL with identity similarity reproduces SL exactly under shared seeds."""
    spec = data.SyntheticSpec(2, 2, 8, 10, 10, intra_spread=0.5,
                              inter_spread=2.0, noise_sigma=0.5, seed=0)
    train, test, _ = data.generate_synthetic(spec)
    sim = sm.identity_similarity([f"c{i}" for i in range(4)])
    common = dict(epochs=10, batch_size=4, lr=0.05, seeds=(0, 1, 2))
    for seed in (0, 1, 2):
        sl = ex.run_trial(ex.ExperimentConfig(encoding="SL", **common),
                          seed, train, test)
        lcl = ex.run_trial(ex.ExperimentConfig(encoding="LCL", epsilon=0.999,
                                               **common),
                           seed, train, test, sim)
        for a, b in zip(sl.final_params.arrays(), lcl.final_params.arrays()):
            assert np.max(np.abs(a - b)) <= 1e-10
        assert sl.top1 == lcl.top1
    print("PASS degenerate curriculum: identity-similarity LCL == SL, 3 seeds")


def test_rank_statistic_oracles():
    """Hand-derived 4x2 table plus an independent 3x3 rank oracle."""
    # one method always wins over 4 settings: ranks (1, 2), chi2 = 4
    table = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.6, 0.4]])
    r = ex.friedman_iman_davenport(table, ["win", "lose"])
    assert r.methods == ("win", "lose")
    assert r.avg_ranks == (1.0, 2.0)
    assert r.chi2_f == pytest.approx(4.0, abs=1e-12)

    # independent oracle: rank with scipy, apply the rank-sum chi2 formula
    table = np.array([[0.5, 0.2, 0.8], [0.1, 0.1, 0.3], [0.9, 0.4, 0.4]])
    n, k = table.shape
    ranks = np.vstack([scipy.stats.rankdata(-row) for row in table])
    rank_sums = ranks.sum(axis=0)
    chi2 = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)
    f_f = (n - 1) * chi2 / (n * (k - 1) - chi2)
    r = ex.friedman_iman_davenport(table, ["a", "b", "c"])
    assert r.chi2_f == pytest.approx(chi2, abs=1e-12)
    assert r.f_f == pytest.approx(f_f, abs=1e-12)
    avg_by_method = dict(zip(r.methods, r.avg_ranks))
    for j, name in enumerate(["a", "b", "c"]):
        assert avg_by_method[name] == pytest.approx(ranks[:, j].mean(), abs=1e-12)
    print("PASS rank statistics: hand 4x2 oracle and independent 3x3 oracle")


# Frozen desk-scale regime for the qualitative claim: with the data ratio at
# 5% each class keeps a single noisy training example, so per-class weights
# are noise-dominated under one-hot targets while curriculum targets pool
# each supercluster's examples early in training.
QUAL_SPEC = data.SyntheticSpec(
    num_superclusters=4, classes_per_supercluster=5, dim=32,
    train_per_class=20, test_per_class=250,
    intra_spread=0.3, inter_spread=2.0, noise_sigma=2.0, seed=7)
QUAL_TRAIN = dict(dr=0.05, seeds=tuple(range(8)), epochs=200, batch_size=4,
                  lr=0.01, lam=0.0, architecture="linear")


def test_qualitative_low_data_advantage():
    """On the 20-class cluster task at DR = 5%, the curriculum encodings
    match or beat one-hot training in mean top-1 over 8 paired seeds, and
    larger cooling parameters are not worse."""
    train, test, emb = data.generate_synthetic(QUAL_SPEC)
    sim = sm.build_cosine_similarity(emb)
    means = {}
    for name, cfg in [
        ("SL", ex.ExperimentConfig(encoding="SL", **QUAL_TRAIN)),
        *[(f"e{eps}", ex.ExperimentConfig(encoding="LCL", epsilon=eps,
                                          **QUAL_TRAIN)) for eps in EPS_GRID],
    ]:
        results = [ex.run_trial(cfg, s, train, test, sim)
                   for s in QUAL_TRAIN["seeds"]]
        means[name] = float(np.mean([r.top1 for r in results]))
    assert means["e0.999"] >= means["SL"], means
    lcl_mean = np.mean([means[f"e{e}"] for e in EPS_GRID])
    assert lcl_mean >= means["SL"] - 0.005, means
    assert means["e0.99"] >= means["e0.9"] - 0.01, means
    assert means["e0.999"] >= means["e0.99"] - 0.01, means
    print("PASS qualitative: " +
          " ".join(f"{k}={v:.4f}" for k, v in means.items()))


def test_similarity_structure():
    """Synthetic class similarity is block-structured: within-supercluster
    mean exceeds across, top-4 eigenvalues carry > 50% of the trace."""
    _, _, emb = data.generate_synthetic(QUAL_SPEC)
    sim = sm.build_cosine_similarity(emb)
    c = sim.num_classes
    within, across = [], []
    for i in range(c):
        for j in range(i + 1, c):
            (within if i // 5 == j // 5 else across).append(sim.entries[i, j])
    assert np.mean(within) > np.mean(across)
    spectrum = sm.eigenspectrum(sim)
    assert spectrum[:4].sum() > 0.5 * np.trace(sim.entries)
    print(f"PASS structure: within={np.mean(within):.3f} > "
          f"across={np.mean(across):.3f}, top-4 eigs carry "
          f"{spectrum[:4].sum() / c:.1%} of trace")


def test_simrank_sanity():
    """Shared parent -> 0.8 at decay 0.8; disjoint trees -> 0."""
    g = sm.HierarchyGraph(edges=[("p", "a"), ("p", "b")], leaves=["a", "b"])
    assert sm.simrank(g, decay=0.8).entries[0, 1] == pytest.approx(0.8, abs=1e-9)
    g = sm.HierarchyGraph(edges=[("p1", "a"), ("p2", "b")], leaves=["a", "b"])
    assert sm.simrank(g, decay=0.8).entries[0, 1] == 0.0
    print("PASS simrank: shared parent 0.8, disjoint trees 0")
