import numpy as np
import pytest

from wtslam import vocabulary as V


def cluster_corpus(rng, centers, per_cluster=30, sigma=0.01):
    docs = []
    for c in centers:
        docs.append(c + rng.normal(0, sigma, (per_cluster, 384)))
    return docs


class TestTraining:
    def test_four_separated_clusters(self):
        rng = np.random.default_rng(0)
        centers = rng.standard_normal((4, 384)) * 5
        docs = cluster_corpus(rng, centers)
        tree = V.VocabTree.train(docs, k=4, depth=1, seed=1)
        assert tree.word_count == 4
        # every descriptor lands in the word nearest its generating center
        leaf_cents = np.array([n.centroid for n in tree.nodes if n.word_id >= 0])
        for doc, center in zip(docs, centers):
            expected = int(np.argmin(np.linalg.norm(leaf_cents - center, axis=1)))
            for d in doc:
                got = tree.word_of(d)
                brute = int(np.argmin(np.linalg.norm(leaf_cents - d, axis=1)))
                assert got == [n.word_id for n in tree.nodes
                               if n.word_id >= 0][brute]
                assert got == [n.word_id for n in tree.nodes
                               if n.word_id >= 0][expected]

    def test_exact_two_means(self):
        a = np.zeros(384)
        b = np.ones(384)
        tree = V.VocabTree.train([np.stack([a, b])], k=2, depth=1, seed=0)
        cents = sorted(
            (n.centroid for n in tree.nodes), key=lambda c: float(c.sum()))
        assert np.allclose(cents[0], a)
        assert np.allclose(cents[1], b)

    def test_empty_corpus(self):
        with pytest.raises(V.InsufficientData):
            V.VocabTree.train([], k=2, depth=1)

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        docs = [rng.standard_normal((50, 384)) for _ in range(6)]
        t1 = V.VocabTree.train(docs, k=3, depth=2, seed=5)
        t2 = V.VocabTree.train(docs, k=3, depth=2, seed=5)
        p1, p2 = tmp_path / "a.rwtv", tmp_path / "b.rwtv"
        t1.save(p1)
        t2.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_kmeans_assignment_invariant(self):
        rng = np.random.default_rng(2)
        docs = [rng.standard_normal((80, 384)) for _ in range(4)]
        tree = V.VocabTree.train(docs, k=3, depth=2, seed=3)
        X = np.concatenate(docs)
        # post-hoc: each descriptor's chosen child is nearest among siblings
        for x in X[::7]:
            ids = tree.root_children
            while True:
                cents = np.array([tree.nodes[i].centroid for i in ids])
                d = np.linalg.norm(cents - x, axis=1)
                chosen = ids[int(np.argmin(d))]
                assert d[ids.index(chosen)] == d.min()
                if tree.nodes[chosen].is_leaf:
                    break
                ids = tree.nodes[chosen].children


class TestTransform:
    def test_leaf_centroid_single_word(self):
        rng = np.random.default_rng(3)
        docs = [rng.standard_normal((40, 384)) for _ in range(5)]
        tree = V.VocabTree.train(docs, k=3, depth=1, seed=0)
        leaf = next(n for n in tree.nodes if n.word_id >= 0)
        bow = tree.transform(leaf.centroid[None, :])
        assert list(bow) == [leaf.word_id]
        assert bow[leaf.word_id] == pytest.approx(1.0)

    def test_empty_input(self):
        rng = np.random.default_rng(4)
        tree = V.VocabTree.train([rng.standard_normal((10, 384))],
                                 k=2, depth=1, seed=0)
        assert tree.transform(np.zeros((0, 384))) == {}

    def test_flat_tree_matches_brute_force(self):
        rng = np.random.default_rng(5)
        docs = [rng.standard_normal((100, 384)) for _ in range(5)]
        tree = V.VocabTree.train(docs, k=8, depth=1, seed=1)
        cents = {n.word_id: n.centroid for n in tree.nodes if n.word_id >= 0}
        ids = sorted(cents)
        C = np.array([cents[i] for i in ids])
        queries = rng.standard_normal((100, 384))
        for q in queries:
            brute = ids[int(np.argmin(np.linalg.norm(C - q, axis=1)))]
            assert tree.word_of(q) == brute

    def test_l1_normalized(self):
        rng = np.random.default_rng(6)
        docs = [rng.standard_normal((60, 384)) for _ in range(4)]
        tree = V.VocabTree.train(docs, k=3, depth=2, seed=2)
        bow = tree.transform(rng.standard_normal((30, 384)))
        assert sum(bow.values()) == pytest.approx(1.0, abs=1e-6)
        assert list(bow) == sorted(bow)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(7)
        docs = [rng.standard_normal((60, 384)) for _ in range(4)]
        tree = V.VocabTree.train(docs, k=3, depth=2, seed=2)
        D = rng.standard_normal((40, 384))
        assert tree.transform(D) == tree.transform(D[::-1])


class TestSimilarity:
    def test_self_similarity_is_one(self):
        a = {1: 0.25, 5: 0.75}
        assert V.similarity(a, a) == pytest.approx(1.0)

    def test_disjoint_supports(self):
        assert V.similarity({1: 1.0}, {2: 1.0}) == pytest.approx(0.0)

    def test_hand_evaluated(self):
        assert V.similarity({1: 1.0}, {1: 0.5, 2: 0.5}) == pytest.approx(0.5)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            def rand_bow():
                w = rng.uniform(0.01, 1, rng.integers(1, 8))
                keys = rng.choice(20, size=len(w), replace=False)
                return dict(zip(keys.tolist(), (w / w.sum()).tolist()))
            a, b = rand_bow(), rand_bow()
            s = V.similarity(a, b)
            assert 0.0 <= s <= 1.0
            assert s == pytest.approx(V.similarity(b, a))


class TestPersistence:
    def make_tree(self, seed=0, k=10, depth=3):
        rng = np.random.default_rng(seed)
        docs = [rng.standard_normal((120, 384)) for _ in range(8)]
        return V.VocabTree.train(docs, k=k, depth=depth, seed=seed)

    def test_save_load_save_identical(self, tmp_path):
        tree = self.make_tree(k=4, depth=2)
        p1, p2 = tmp_path / "a.rwtv", tmp_path / "b.rwtv"
        tree.save(p1)
        V.VocabTree.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_is_corrupt(self, tmp_path):
        tree = self.make_tree(k=3, depth=2)
        p = tmp_path / "a.rwtv"
        tree.save(p)
        p.write_bytes(p.read_bytes()[:-20])
        with pytest.raises(V.Corrupt):
            V.VocabTree.load(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "a.rwtv"
        p.write_bytes(b"NOPE" + b"\0" * 40)
        with pytest.raises((V.BadMagic, V.Corrupt)):
            V.VocabTree.load(p)

    def test_round_trip_behavioral_equivalence(self, tmp_path):
        tree = self.make_tree(seed=9, k=10, depth=3)
        p = tmp_path / "a.rwtv"
        tree.save(p)
        loaded = V.VocabTree.load(p)
        rng = np.random.default_rng(10)
        queries = [rng.standard_normal((20, 384)) for _ in range(100)]
        ref = tree.transform(queries[0])
        for q in queries:
            a = tree.transform(q)
            b = loaded.transform(q)
            assert V.similarity(a, ref) == pytest.approx(
                V.similarity(b, ref), abs=1e-6)
