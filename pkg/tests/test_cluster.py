import itertools

import numpy as np
import pytest
from scipy.cluster.hierarchy import linkage as scipy_linkage
from scipy.spatial.distance import squareform
from sklearn.metrics import silhouette_score

from macrostate.cluster import (
    LINKAGES,
    Dendrogram,
    cut_tree,
    hierarchical_cluster,
    select_k,
    silhouette,
    similarity_to_distance,
)
from macrostate.errors import ArgumentError, DataError, InsufficientDataError, KindError
from macrostate.similarity import DISTANCE, SIMILARITY, SquareMatrix, economic_state_similarity


def dist(entries, labels=None):
    entries = np.asarray(entries, float)
    labels = labels or [f"p{i}" for i in range(len(entries))]
    return SquareMatrix(tuple(labels), entries, DISTANCE)


def planted(blocks, within=0.1, across=0.9, seed=0):
    """Block distance matrix with shuffled membership; returns (matrix, membership)."""
    member = np.repeat(np.arange(len(blocks)), blocks)
    member = np.random.default_rng(seed).permutation(member)
    d = np.where(member[:, None] == member[None, :], within, across)
    np.fill_diagonal(d, 0.0)
    return dist(d), member


def same_partition(a, b):
    return len(set(zip(a, b))) == len(set(a)) == len(set(b))


def random_points_matrix(rng, n):
    x = rng.normal(size=(n, 3))
    return np.abs(x[:, None, :] - x[None, :, :]).sum(-1)


def test_similarity_to_distance():
    eye = SquareMatrix(("a", "b"), np.eye(2), SIMILARITY)
    assert similarity_to_distance(eye).entries.tolist() == [[0, 1], [1, 0]]
    ones = SquareMatrix(("a", "b"), np.ones((2, 2)), SIMILARITY)
    assert similarity_to_distance(ones).entries.tolist() == [[0, 0], [0, 0]]
    omega = economic_state_similarity([[1, 1], [1, 2]])
    assert similarity_to_distance(omega).entries[0, 1] == pytest.approx(0.051317, abs=1e-6)


def test_similarity_to_distance_kind_error():
    bad = SquareMatrix(("a", "b"), [[0.0, 0.2], [0.2, 0.0]], DISTANCE)
    with pytest.raises(KindError):
        similarity_to_distance(bad)


@pytest.mark.parametrize("method", LINKAGES)
def test_two_points(method):
    d = hierarchical_cluster(dist([[0, 2.5], [2.5, 0]]), method)
    assert len(d.merges) == 1
    assert d.merges[0].height == 2.5 and d.merges[0].size == 2


@pytest.mark.parametrize("method", LINKAGES)
def test_three_points_first_merge(method):
    # pair (0, 1) is at distance 1; others at 1 and 10 -> tie broken toward (p0, p1)
    m = dist([[0, 1, 10], [1, 0, 1], [10, 1, 0]])
    d = hierarchical_cluster(m, method)
    assert (d.merges[0].left, d.merges[0].right) == (0, 1)
    assert d.merges[0].height == 1.0


@pytest.mark.parametrize("method", LINKAGES)
def test_matches_scipy_on_generic_input(method, rng):
    for _ in range(20):
        n = int(rng.integers(3, 15))
        x = random_points_matrix(rng, n)
        ours = hierarchical_cluster(dist(x), method)
        ref = scipy_linkage(squareform(x, checks=False), method=method)
        np.testing.assert_allclose(ours.heights(), ref[:, 2], rtol=1e-12)
        for k in range(1, n + 1):
            from scipy.cluster.hierarchy import fcluster
            ref_labels = fcluster(ref, k, criterion="maxclust")
            if len(set(ref_labels)) == k:
                assert same_partition(cut_tree(ours, k), ref_labels)


def test_single_linkage_is_mst(rng):
    for n in (5, 12, 30):
        x = random_points_matrix(rng, n)
        # Prim's algorithm by brute force
        in_tree = {0}
        edges = []
        while len(in_tree) < n:
            w, j = min((x[i, j], j) for i in in_tree for j in range(n) if j not in in_tree)
            edges.append(w)
            in_tree.add(j)
        d = hierarchical_cluster(dist(x), "single")
        np.testing.assert_allclose(d.heights(), sorted(edges), rtol=1e-12)


@pytest.mark.parametrize("method", LINKAGES)
def test_merge_structure(method, rng):
    x = random_points_matrix(rng, 10)
    d = hierarchical_cluster(dist(x), method)
    assert len(d.merges) == 9
    assert np.all(np.diff(d.heights()) >= -1e-12)
    assert sorted(d.members(2 * 10 - 2)) == list(range(10))
    assert d.merges[-1].size == 10


@pytest.mark.parametrize("method", LINKAGES)
def test_permutation_invariance(method, rng):
    x = random_points_matrix(rng, 9)
    labels = [f"L{i}" for i in range(9)]
    base = hierarchical_cluster(dist(x, labels), method)
    perm = rng.permutation(9)
    other = hierarchical_cluster(dist(x[np.ix_(perm, perm)], [labels[i] for i in perm]), method)

    def described(d):
        return [(frozenset(d.leaf_labels[i] for i in d.members(m.left)),
                 frozenset(d.leaf_labels[i] for i in d.members(m.right)), round(m.height, 12)) for m in d.merges]

    assert described(base) == described(other)


@pytest.mark.parametrize("method", LINKAGES)
def test_permutation_invariance_with_ties(method):
    m, member = planted([4, 4])
    labels = list(m.labels)
    base = hierarchical_cluster(m, method)
    perm = np.random.default_rng(3).permutation(8)
    other = hierarchical_cluster(dist(m.entries[np.ix_(perm, perm)], [labels[i] for i in perm]), method)
    for a, b in zip(base.merges, other.merges):
        assert {base.leaf_labels[i] for i in base.members(a.left)} == {other.leaf_labels[i] for i in other.members(b.left)}


@pytest.mark.parametrize("method", LINKAGES)
def test_planted_blocks_final_merge_separates(method):
    m, member = planted([4, 4])
    d = hierarchical_cluster(m, method)
    last = d.merges[-1]
    left = {member[i] for i in d.members(last.left)}
    right = {member[i] for i in d.members(last.right)}
    assert len(left) == len(right) == 1 and left != right


def block_separating_orders(member):
    """Enumerate every minimum-linkage merge order on a 2-block instance (n <= 8) and
    report whether all of them end with the two blocks separated. Distances are
    planted so every within-block merge beats every cross-block one."""
    # the search state is a frozenset of frozensets; memoise on it
    from functools import lru_cache

    within, across = 0.1, 0.9

    def link(a, b):
        return within if member[next(iter(a))] == member[next(iter(b))] and \
            len({member[i] for i in a | b}) == 1 else across

    @lru_cache(maxsize=None)
    def ok(state):
        if len(state) == 2:
            a, b = tuple(state)
            return {member[i] for i in a}.isdisjoint({member[i] for i in b})
        pairs = list(itertools.combinations(state, 2))
        best = min(link(a, b) for a, b in pairs)
        return all(ok((state - {a, b}) | {a | b}) for a, b in pairs if link(a, b) == best)

    return ok(frozenset(frozenset([i]) for i in range(len(member))))


def test_planted_every_merge_order_separates():
    _, member = planted([4, 4])
    assert block_separating_orders(tuple(member))


def test_cut_tree_extremes(rng):
    d = hierarchical_cluster(dist(random_points_matrix(rng, 7)))
    assert set(cut_tree(d, 1)) == {0}
    assert sorted(cut_tree(d, 7)) == list(range(7))
    for k in range(1, 8):
        assert len(set(cut_tree(d, k))) == k
    with pytest.raises(ArgumentError):
        cut_tree(d, 0)
    with pytest.raises(ArgumentError):
        cut_tree(d, 8)


@pytest.mark.parametrize("method", LINKAGES)
@pytest.mark.parametrize("blocks", [[4, 4], [3, 3, 2]])
def test_planted_recovery_and_select_k(method, blocks):
    m, member = planted(blocks, seed=len(blocks))
    d = hierarchical_cluster(m, method)
    assert same_partition(cut_tree(d, len(blocks)), member)
    assert select_k(m, d) == len(blocks)


def test_exhaustive_k_sweep_peaks_at_planted():
    m, member = planted([3, 3, 2], seed=11)
    d = hierarchical_cluster(m)
    scores = {k: silhouette(m.entries, cut_tree(d, k)) for k in range(2, 8)}
    assert max(scores, key=scores.get) == 3


def test_uniform_matrix_selects_two():
    x = np.full((6, 6), 0.7)
    np.fill_diagonal(x, 0)
    m = dist(x)
    assert select_k(m, hierarchical_cluster(m)) == 2


def test_silhouette_matches_sklearn(rng):
    for _ in range(20):
        n = int(rng.integers(4, 20))
        x = random_points_matrix(rng, n)
        labels = rng.integers(0, 3, n)
        if len(set(labels)) < 2:
            continue
        assert silhouette(x, labels) == pytest.approx(silhouette_score(x, labels, metric="precomputed"), abs=1e-12)


def test_select_k_errors(rng):
    m = dist([[0, 1], [1, 0]])
    with pytest.raises(InsufficientDataError):
        select_k(m, hierarchical_cluster(m))
    m5 = dist(random_points_matrix(rng, 5))
    with pytest.raises(ArgumentError):
        select_k(m5, hierarchical_cluster(m5), k_max=5)


def test_nan_rejected():
    with pytest.raises(DataError):
        hierarchical_cluster(dist([[0, np.nan], [np.nan, 0]]))


def test_unknown_linkage():
    with pytest.raises(ArgumentError):
        hierarchical_cluster(dist([[0, 1], [1, 0]]), "ward")


def test_dendrogram_json_roundtrip(rng):
    d = hierarchical_cluster(dist(random_points_matrix(rng, 6)))
    back = Dendrogram.from_dict(d.to_dict())
    assert back == d
    assert d.to_linkage().shape == (5, 4)
