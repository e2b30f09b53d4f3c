import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urfcluster.forest import (
    ClusterForest,
    ForestConfig,
    SplitChoice,
    Tree,
    ZeroWidthDimension,
    apply,
    apply_batch,
    best_split,
    gini_impurity,
    grow_tree,
    noise_density,
    train_forest,
    virtual_child_counts,
)
from urfcluster.dataset import generate_synthetic

from oracles import exhaustive_best_split, gini_oracle, route_to_leaf

# Reference node used throughout: five points on one axis, box [1, 10].
FIVE_POINTS = np.array([[1.0], [2.0], [3.0], [9.0], [10.0]])
FIVE_BOX = np.array([[1.0], [10.0]])


def two_blob_points(m=80, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal((0.0, 0.0), 1.0, size=(m // 2, 2))
    b = rng.normal((6.0, 6.0), 1.0, size=(m - m // 2, 2))
    return np.vstack([a, b])


class TestGini:
    def test_balanced_is_half(self):
        assert gini_impurity(5.0, 5.0) == 0.5
        assert gini_impurity(1.0, 1.0) == 0.5

    def test_pure_is_zero(self):
        assert gini_impurity(7.0, 0.0) == 0.0
        assert gini_impurity(0.0, 3.5) == 0.0

    def test_empty_node_is_zero(self):
        assert gini_impurity(0.0, 0.0) == 0.0

    def test_reference_value(self):
        # gini(3, 25/9): mixed node from the tau=6 cut of the five-point node.
        assert gini_impurity(3.0, 25.0 / 9.0) == 0.49926035502958577

    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            r = rng.uniform(0.0, 50.0)
            n = rng.uniform(0.0, 50.0)
            assert gini_impurity(r, n) == pytest.approx(gini_oracle(r, n), abs=1e-15)

    @given(r=st.floats(0.0, 1e6), n=st.floats(0.0, 1e6))
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, r, n):
        v = gini_impurity(r, n)
        assert 0.0 <= v <= 0.5


class TestNoiseDensity:
    def test_five_point_node(self):
        assert noise_density(FIVE_BOX, 0, 5.0) == 5.0 / 9.0

    def test_zero_width_raises(self):
        box = np.array([[2.0], [2.0]])
        with pytest.raises(ZeroWidthDimension):
            noise_density(box, 0, 3.0)


class TestVirtualChildCounts:
    def test_reference_split(self):
        # tau=6 on the five-point node: 25/9 to the left, 20/9 to the right.
        vl, vr = virtual_child_counts(FIVE_BOX, 0, 6.0, 5.0)
        assert vl == 25.0 / 9.0
        assert vr == 20.0 / 9.0
        assert vl + vr == 5.0

    def test_sum_is_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            lo = rng.uniform(-10.0, 10.0)
            hi = lo + rng.uniform(0.1, 20.0)
            box = np.array([[lo], [hi]])
            tau = rng.uniform(lo, hi)
            real = rng.uniform(1.0, 100.0)
            vl, vr = virtual_child_counts(box, 0, tau, real)
            assert vl + vr == pytest.approx(real, rel=1e-15)  # one rounding at most
            assert vl >= 0.0 and vr >= 0.0

    def test_tau_outside_box_rejected(self):
        with pytest.raises(ValueError):
            virtual_child_counts(FIVE_BOX, 0, 0.5, 5.0)
        with pytest.raises(ValueError):
            virtual_child_counts(FIVE_BOX, 0, 10.5, 5.0)


class TestBestSplit:
    def test_five_point_node_frozen(self):
        # The density contrast beats the wide-gap cut: the left child
        # {1,2,3} is much denser than uniform noise over [1, 2.5].
        choice = best_split(FIVE_POINTS, FIVE_BOX, dims=(0,))
        assert choice is not None
        assert choice.dim == 0
        assert choice.tau == 2.5
        assert choice.relative_gain == pytest.approx(0.06703146374828994, abs=1e-15)

    def test_five_point_node_matches_oracle(self):
        got = best_split(FIVE_POINTS, FIVE_BOX, dims=(0,))
        dim, tau, gain = exhaustive_best_split(FIVE_POINTS, dims=(0,))
        assert got.dim == dim
        assert got.tau == tau
        assert got.relative_gain == pytest.approx(gain, abs=1e-12)

    def test_symmetric_tie_takes_smaller_tau(self):
        points = np.array([[0.0], [1.0], [9.0], [10.0]])
        box = np.array([[0.0], [10.0]])
        choice = best_split(points, box, dims=(0,))
        assert choice.tau == 0.5  # mirror candidate 9.5 has the same gain

    def test_duplicate_dimension_tie_takes_lower_dim(self):
        points = np.column_stack([FIVE_POINTS[:, 0], FIVE_POINTS[:, 0]])
        box = np.array([[1.0, 1.0], [10.0, 10.0]])
        both = best_split(points, box, dims=(0, 1))
        assert both.dim == 0
        only_second = best_split(points, box, dims=(1,))
        assert only_second.dim == 1
        assert only_second.tau == both.tau

    def test_identical_points_give_none(self):
        points = np.full((6, 2), 3.0)
        box = np.stack([points.min(axis=0), points.max(axis=0)])
        assert best_split(points, box, dims=(0, 1)) is None

    def test_constant_sampled_dim_gives_none(self):
        points = np.column_stack([np.full(5, 2.0), FIVE_POINTS[:, 0]])
        box = np.stack([points.min(axis=0), points.max(axis=0)])
        assert best_split(points, box, dims=(0,)) is None
        assert best_split(points, box, dims=(0, 1)) is not None

    def test_single_point_gives_none(self):
        assert best_split(FIVE_POINTS[:1], FIVE_BOX, dims=(0,)) is None

    def test_matches_exhaustive_oracle_on_random_nodes(self):
        rng = np.random.default_rng(17)
        checked = 0
        for _ in range(60):
            m = int(rng.integers(2, 65))
            q = int(rng.integers(1, 5))
            pts = rng.uniform(-5.0, 5.0, size=(m, q))
            if rng.random() < 0.3:
                pts = np.round(pts)  # force duplicate values
            box = np.stack([pts.min(axis=0), pts.max(axis=0)])
            dims = tuple(range(q))
            got = best_split(pts, box, dims)
            want = exhaustive_best_split(pts, dims=dims)
            if want is None:
                assert got is None
                continue
            checked += 1
            assert got.dim == want[0]
            assert got.tau == pytest.approx(want[1], abs=1e-9)
            assert got.relative_gain == pytest.approx(want[2], abs=1e-9)
        assert checked >= 40


def walk(tree: Tree, slot=0):
    yield slot
    if tree.feature[slot] >= 0:
        yield from walk(tree, int(tree.left[slot]))
        yield from walk(tree, int(tree.right[slot]))


def assert_pruned_prefix(coarse: Tree, fine: Tree, c=0, f=0):
    """coarse must equal fine except where coarse stops early at a leaf."""
    if coarse.feature[c] < 0:
        assert coarse.real_count[c] == fine.real_count[f]
        assert coarse.virtual_count[c] == pytest.approx(fine.virtual_count[f])
        return
    assert fine.feature[f] == coarse.feature[c]
    assert fine.threshold[f] == coarse.threshold[c]
    assert_pruned_prefix(coarse, fine, int(coarse.left[c]), int(fine.left[f]))
    assert_pruned_prefix(coarse, fine, int(coarse.right[c]), int(fine.right[f]))


class TestGrowTree:
    def config(self, **kw):
        base = dict(tree_count=1, i_min=0.29, m_min=2, seed=0)
        base.update(kw)
        return ForestConfig(**base)

    def test_parallel_arrays_consistent(self):
        tree = grow_tree(two_blob_points(), self.config())
        n = tree.node_count
        internal = tree.feature >= 0
        assert np.all((tree.left >= 0) == internal)
        assert np.all((tree.right >= 0) == internal)
        assert np.all((tree.leaf_id >= 0) == ~internal)
        assert np.all(np.isnan(tree.threshold[~internal]))
        assert not np.any(np.isnan(tree.threshold[internal]))
        leaves = np.sort(tree.leaf_id[~internal])
        assert leaves.tolist() == list(range(tree.leaf_count))
        # Preorder with left first: children sit after their parent.
        for slot in range(n):
            if internal[slot]:
                assert tree.left[slot] == slot + 1
                assert tree.right[slot] > tree.left[slot]

    def test_leaf_ids_follow_dfs_order(self):
        tree = grow_tree(two_blob_points(), self.config())
        seen = [int(tree.leaf_id[s]) for s in walk(tree) if tree.feature[s] < 0]
        assert seen == sorted(seen)

    def test_root_is_balanced(self):
        tree = grow_tree(two_blob_points(), self.config())
        assert tree.impurity[0] == 0.5
        assert tree.virtual_count[0] == tree.real_count[0]

    def test_balanced_noise_identities_every_node(self):
        # Each split must hand its children exactly the parent's real count
        # as virtual mass, and every node starts from a balanced 0.5 books.
        tree = grow_tree(two_blob_points(m=120, seed=4), self.config(i_min=0.1))
        for slot in range(tree.node_count):
            if tree.feature[slot] < 0:
                continue
            li = int(tree.left[slot])
            ri = int(tree.right[slot])
            child_sum = tree.virtual_count[li] + tree.virtual_count[ri]
            assert child_sum == pytest.approx(tree.real_count[slot], abs=1e-9)
            assert tree.real_count[li] + tree.real_count[ri] == tree.real_count[slot]
            assert gini_impurity(tree.real_count[slot], tree.real_count[slot]) == 0.5
            assert tree.impurity[li] == gini_impurity(
                tree.real_count[li], tree.virtual_count[li]
            )
            assert tree.impurity[ri] == gini_impurity(
                tree.real_count[ri], tree.virtual_count[ri]
            )

    def test_leaf_labels(self):
        tree = grow_tree(two_blob_points(m=120, seed=4), self.config(i_min=0.1))
        leaves = tree.feature < 0
        want = (tree.real_count[leaves] >= tree.virtual_count[leaves]).astype(np.int8)
        assert np.array_equal(tree.label[leaves], want)

    def test_i_min_ceiling_leafs_the_root(self):
        tree = grow_tree(two_blob_points(), self.config(i_min=0.5))
        assert tree.node_count == 1
        assert tree.leaf_count == 1
        assert tree.label[0] == 1

    def test_m_min_above_m_leafs_the_root(self):
        pts = two_blob_points(m=20)
        tree = grow_tree(pts, self.config(m_min=21, i_min=0.0))
        assert tree.node_count == 1

    def test_i_min_zero_grows_to_small_leaves(self):
        tree = grow_tree(two_blob_points(m=60, seed=7), self.config(i_min=0.0))
        leaves = tree.feature < 0
        # Growth only stops on m_min or no-gain, so leaves stay small.
        assert tree.leaf_count > 10
        assert tree.real_count[leaves].max() <= 8

    def test_pruning_nests_across_i_min(self):
        pts = two_blob_points(m=100, seed=9)
        fine = grow_tree(pts, self.config(i_min=0.24))
        mid = grow_tree(pts, self.config(i_min=0.29))
        coarse = grow_tree(pts, self.config(i_min=0.34))
        assert fine.node_count >= mid.node_count >= coarse.node_count
        assert_pruned_prefix(mid, fine)
        assert_pruned_prefix(coarse, mid)
        assert_pruned_prefix(coarse, fine)

    def test_deterministic(self):
        pts = two_blob_points(m=80, seed=5)
        a = grow_tree(pts, self.config(), tree_index=3)
        b = grow_tree(pts, self.config(), tree_index=3)
        assert np.array_equal(a.feature, b.feature)
        assert np.array_equal(a.threshold[a.feature >= 0], b.threshold[b.feature >= 0])
        c = grow_tree(pts, self.config(), tree_index=4)
        different = a.node_count != c.node_count or not np.array_equal(a.feature, c.feature)
        assert different

    def test_affine_invariance(self):
        pts = two_blob_points(m=60, seed=11)
        scale = np.array([3.5, 0.25])
        shift = np.array([-2.0, 40.0])
        moved = pts * scale + shift
        cfg = self.config(i_min=0.2, m_min=3)
        a = grow_tree(pts, cfg, tree_index=1)
        b = grow_tree(moved, cfg, tree_index=1)
        assert np.array_equal(a.feature, b.feature)
        assert np.array_equal(a.leaf_id, b.leaf_id)
        assert np.array_equal(a.label, b.label)
        assert np.array_equal(a.real_count, b.real_count)
        assert np.allclose(a.virtual_count, b.virtual_count, rtol=1e-9)
        internal = a.feature >= 0
        f = a.feature[internal]
        want = a.threshold[internal] * scale[f] + shift[f]
        assert np.allclose(b.threshold[internal], want, rtol=1e-9)

    def test_single_point_is_a_leaf(self):
        tree = grow_tree(np.array([[1.0, 2.0]]), self.config())
        assert tree.node_count == 1
        assert tree.label[0] == 1  # 1 real vs 1 virtual


class TestApply:
    def test_scalar_matches_batch_and_oracle(self):
        pts = two_blob_points(m=90, seed=13)
        tree = grow_tree(pts, ForestConfig(tree_count=1, i_min=0.2, m_min=2, seed=1))
        probe = np.vstack([pts, np.random.default_rng(14).uniform(-4, 10, size=(50, 2))])
        batch = apply_batch(tree, probe)
        for i, row in enumerate(probe):
            assert apply(tree, row) == batch[i]
            assert route_to_leaf(tree, row) == batch[i]

    def test_left_on_equality(self):
        # A probe exactly at a threshold goes left.
        pts = np.array([[0.0], [1.0], [8.0], [9.0], [10.0]])
        cfg = ForestConfig(tree_count=1, i_min=0.0, m_min=2, seed=0, subspace_size=1)
        tree = grow_tree(pts, cfg)
        root_tau = tree.threshold[0]
        leaf = apply(tree, np.array([root_tau]))
        # Recompute by hand: equality routes into the left child.
        node = int(tree.left[0])
        while tree.feature[node] >= 0:
            if root_tau <= tree.threshold[node]:
                node = int(tree.left[node])
            else:
                node = int(tree.right[node])
        assert leaf == tree.leaf_id[node]


class TestForestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ForestConfig(tree_count=0)
        with pytest.raises(ValueError):
            ForestConfig(i_min=0.6)
        with pytest.raises(ValueError):
            ForestConfig(i_min=-0.01)
        with pytest.raises(ValueError):
            ForestConfig(m_min=1)
        with pytest.raises(ValueError):
            ForestConfig(seed=-1)

    def test_dict_round_trip(self):
        cfg = ForestConfig(tree_count=33, i_min=0.31, m_min=4, seed=9, subspace_size=2)
        assert ForestConfig.from_dict(cfg.to_dict()) == cfg
        default = ForestConfig()
        assert ForestConfig.from_dict(default.to_dict()) == default


class TestTrainForest:
    def test_bags_are_keyed_by_tree(self):
        mat = generate_synthetic(count_per_template=(20, 20, 20), seed=2)
        cfg = ForestConfig(tree_count=5, i_min=0.29, m_min=2, seed=42)
        forest = train_forest(mat, cfg)
        assert len(forest.trees) == 5
        assert forest.q == 10
        for t, bag in enumerate(forest.bag_indices):
            want = np.random.default_rng([42, t, 7]).integers(0, mat.m, size=mat.m)
            assert np.array_equal(bag, want)

    def test_accepts_plain_array(self):
        pts = two_blob_points(m=40)
        cfg = ForestConfig(tree_count=3, i_min=0.29, seed=1)
        forest = train_forest(pts, cfg)
        assert len(forest.trees) == 3

    def test_json_round_trip_identical(self):
        mat = generate_synthetic(count_per_template=(15, 15, 15), seed=3)
        cfg = ForestConfig(tree_count=4, i_min=0.24, m_min=3, seed=7)
        forest = train_forest(mat, cfg)
        text = forest.to_json()
        back = ClusterForest.from_json(text)
        assert back.config == forest.config
        assert back.q == forest.q
        assert back.to_json() == text
        for a, b in zip(forest.trees, back.trees):
            assert np.array_equal(a.feature, b.feature)
            assert np.array_equal(
                a.threshold[a.feature >= 0], b.threshold[b.feature >= 0]
            )
            assert np.array_equal(a.label, b.label)
        # Routing behaviour survives the round trip.
        probe = mat.rows
        for a, b in zip(forest.trees, back.trees):
            assert np.array_equal(apply_batch(a, probe), apply_batch(b, probe))

    def test_json_is_versioned(self):
        cfg = ForestConfig(tree_count=1, seed=0)
        forest = train_forest(two_blob_points(m=30), cfg)
        doc = json.loads(forest.to_json())
        assert doc["format"] == "urf-forest"
        assert doc["version"] == 1

    def test_training_is_deterministic(self):
        mat = generate_synthetic(count_per_template=(15, 15, 15), seed=3)
        cfg = ForestConfig(tree_count=3, i_min=0.29, seed=11)
        assert train_forest(mat, cfg).to_json() == train_forest(mat, cfg).to_json()
