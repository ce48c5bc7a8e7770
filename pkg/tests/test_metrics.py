import numpy as np
import pytest

from pcgen import metrics


def clouds(rng, n, m=24, scale=1.0, offset=0.0):
    return [rng.normal(size=(m, 3)) * scale + offset for _ in range(n)]


# ------------------------------------------------------------------ EMD

def test_emd_exact_hand_value():
    a = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    b = np.array([[0.0, 0.5, 0], [1.0, 0.5, 0]])
    # optimal matching pairs columns: each point moves 0.5
    assert metrics.emd_exact(a, b) == pytest.approx(0.5, abs=1e-15)
    assert metrics.emd_exact(a, b, per_point=False) == pytest.approx(1.0, abs=1e-15)


def test_emd_exact_beats_greedy_pairing():
    # identity pairing costs (2 + 1)/2 = 1.5; the optimal assignment
    # crosses the pairs for (0 + 1)/2 = 0.5
    a = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    b = np.array([[2.0, 0, 0], [0.0, 0, 0]])
    assert metrics.emd_exact(a, b) == pytest.approx(0.5, abs=1e-15)


def test_emd_identity_and_permutation():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(40, 3))
    assert metrics.emd_exact(a, a) == 0.0
    assert metrics.emd_exact(a, a[rng.permutation(40)]) == pytest.approx(0.0, abs=1e-12)


def test_emd_requires_equal_sizes():
    with pytest.raises(ValueError):
        metrics.emd_exact(np.zeros((3, 3)), np.zeros((4, 3)))


def test_auction_close_to_exact():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = int(rng.integers(4, 64))
        a = rng.normal(size=(m, 3))
        b = rng.normal(size=(m, 3)) + rng.normal(size=3)
        exact = metrics.emd_exact(a, b)
        approx = metrics.emd_auction(a, b)
        assert exact <= approx + 1e-12  # exact is a lower bound
        assert approx <= 1.01 * exact + 1e-12


def test_auction_identical_clouds():
    a = np.random.default_rng(2).normal(size=(16, 3))
    assert metrics.emd_auction(a, a.copy()) < 1e-9


def test_emd_auto_dispatch():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, 10, 3))
    assert metrics.emd(a, b) == metrics.emd_exact(a, b)
    with pytest.raises(ValueError):
        metrics.emd(a, b, method="sinkhorn")


# ------------------------------------------------------------------ 1-NNA

def brute_one_nna(gen, ref, dist):
    fn = (lambda a, b: metrics.chamfer(a, b)) if dist == "cd" else metrics.emd
    pool = list(gen) + list(ref)
    labels = [0] * len(gen) + [1] * len(ref)
    correct = 0
    for i in range(len(pool)):
        best, best_j = np.inf, None
        for j in range(len(pool)):
            if j == i:
                continue
            d = fn(pool[i], pool[j])
            if d < best:
                best, best_j = d, j
        correct += labels[best_j] == labels[i]
    return 100.0 * correct / len(pool)


def test_one_nna_against_brute_force():
    rng = np.random.default_rng(4)
    gen = clouds(rng, 6, m=12)
    ref = clouds(rng, 6, m=12, offset=0.3)
    for dist in ("cd", "emd"):
        assert metrics.one_nna(gen, ref, dist) == pytest.approx(
            brute_one_nna(gen, ref, dist), abs=1e-9)


def test_one_nna_separated_sets_give_100():
    rng = np.random.default_rng(5)
    gen = clouds(rng, 5, scale=0.01)
    ref = clouds(rng, 5, scale=0.01, offset=10.0)
    assert metrics.one_nna(gen, ref) == 100.0


def test_one_nna_identical_sets_give_0():
    # each shape's nearest neighbor is its duplicate in the other set at
    # distance ~0; ties at 0 go to the lowest global index, which is the
    # generated copy for both pools, so every vote is wrong
    rng = np.random.default_rng(6)
    ref = clouds(rng, 8)
    assert metrics.one_nna([c.copy() for c in ref], ref) == 0.0


def test_one_nna_validation():
    rng = np.random.default_rng(7)
    with pytest.raises(ValueError):
        metrics.one_nna(clouds(rng, 3), clouds(rng, 4))
    with pytest.raises(ValueError):
        metrics.one_nna(clouds(rng, 1), clouds(rng, 1))


# ------------------------------------------------------------------ MMD / COV

def test_mmd_cov_hand_example():
    base = np.random.default_rng(8).normal(size=(16, 3))
    ref = [base, base + 5.0]
    gen = [base + 0.01, base + 0.02]  # both near ref[0] only
    mmd, cov = metrics.mmd_cov(gen, ref)
    assert cov == 50.0  # ref[1] uncovered
    near = min(metrics.chamfer(ref[0], g) for g in gen)
    far = min(metrics.chamfer(ref[1], g) for g in gen)
    assert mmd == pytest.approx((near + far) / 2.0, abs=1e-12)


def test_mmd_cov_perfect_match():
    rng = np.random.default_rng(9)
    ref = clouds(rng, 6, offset=np.arange(3))
    # well-separated references each matched exactly
    ref = [c + 10.0 * i for i, c in enumerate(ref)]
    mmd, cov = metrics.mmd_cov([c.copy() for c in ref], ref)
    assert cov == 100.0
    assert mmd < 1e-12


def test_mmd_cov_brute_force_cross_check():
    rng = np.random.default_rng(10)
    gen = clouds(rng, 5, m=10)
    ref = clouds(rng, 4, m=10)
    d = np.array([[metrics.chamfer(r, g) for g in gen] for r in ref])
    mmd, cov = metrics.mmd_cov(gen, ref)
    assert mmd == pytest.approx(d.min(axis=1).mean(), abs=1e-12)
    assert cov == pytest.approx(100.0 * len(set(d.argmin(axis=0))) / 4, abs=1e-12)


# ------------------------------------------------------------------ JSD

def test_jsd_identical_distributions():
    rng = np.random.default_rng(11)
    sets = [rng.uniform(-1, 1, size=(50, 3)) for _ in range(4)]
    assert metrics.jsd(sets, [c.copy() for c in sets]) == pytest.approx(0.0, abs=1e-12)


def test_jsd_disjoint_distributions_hit_ln2():
    a = [np.full((20, 3), -0.9)]
    b = [np.full((20, 3), 0.9)]
    assert metrics.jsd(a, b) == pytest.approx(np.log(2.0), abs=1e-12)


def test_jsd_symmetry_and_range():
    rng = np.random.default_rng(12)
    a = [rng.uniform(-1, 1, size=(60, 3)) for _ in range(3)]
    b = [rng.uniform(-0.5, 1, size=(60, 3)) for _ in range(3)]
    ab = metrics.jsd(a, b)
    assert ab == pytest.approx(metrics.jsd(b, a), abs=1e-12)
    assert 0.0 <= ab <= np.log(2.0) + 1e-12


def test_jsd_boundary_points_included():
    a = [np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]])]
    assert metrics.jsd(a, [c.copy() for c in a]) == 0.0


def test_jsd_out_of_range_rejected():
    with pytest.raises(ValueError):
        metrics.jsd([np.array([[1.5, 0, 0]])], [np.zeros((1, 3))])


# ------------------------------------------------------------------ report

def test_compute_report_degenerate_self_comparison():
    rng = np.random.default_rng(13)
    ref = clouds(rng, 6, m=16, scale=0.3)
    rep = metrics.compute_report([c.copy() for c in ref], ref, dist="both")
    assert rep.one_nna_cd == 0.0
    assert rep.one_nna_emd == 0.0
    assert rep.mmd_cd == pytest.approx(0.0, abs=1e-12)
    assert rep.cov == 100.0
    assert rep.jsd == pytest.approx(0.0, abs=1e-12)


def test_report_csv_and_table_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    rep = metrics.compute_report(clouds(rng, 4), clouds(rng, 4), dist="cd", seed=3)
    path = tmp_path / "report.csv"
    metrics.write_report_csv(rep, path)
    header, values = path.read_text().strip().split("\n")
    cols = dict(zip(header.split(","), values.split(",")))
    assert cols["n_gen"] == "4" and cols["n_ref"] == "4"
    assert float(cols["one_nna_cd"]) == rep.one_nna_cd
    assert "one_nna_emd" not in cols
    table = metrics.format_report_table(rep)
    assert "one_nna_cd" in table and str(rep.n_gen) in table
