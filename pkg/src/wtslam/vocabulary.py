"""Hierarchical k-means visual vocabulary over 384-dim descriptors.

Training uses recursive Lloyd iterations with deterministic k-means++
seeding; word weights are inverse document frequencies computed over
per-frame descriptor sets. BoW vectors are L1-normalized tf-idf maps and
are scored with the L1 similarity s(a,b) = 1 - 0.5*sum|a_w - b_w|.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import DESCRIPTOR_DIM

RWTV_MAGIC = b"RWTV"
RWTV_VERSION = 1

DEFAULT_BRANCHING = 10
DEFAULT_DEPTH = 5
KMEANS_MAX_ITERS = 50
KMEANS_TOL = 1e-6


class VocabularyError(Exception):
    pass


class InsufficientData(VocabularyError):
    pass


class BadMagic(VocabularyError):
    pass


class VersionMismatch(VocabularyError):
    pass


class Corrupt(VocabularyError):
    pass


@dataclass
class Node:
    centroid: np.ndarray
    children: list[int] = field(default_factory=list)
    weight: float = 0.0
    word_id: int = -1

    @property
    def is_leaf(self):
        return not self.children


def _kmeans(X, k, rng):
    """Deterministic k-means with k-means++ init. Returns (centroids, labels).

    Duplicate/insufficient data may yield fewer than k centroids; empty
    clusters are dropped (never resampled) to keep determinism.
    """
    n = len(X)
    if n <= k:
        centroids = X.copy()
    else:
        # k-means++ seeding
        idx = [int(rng.randint(n))]
        d2 = np.sum((X - X[idx[0]])**2, axis=1)
        for _ in range(1, k):
            total = d2.sum()
            if total <= 0:
                break
            probs = d2 / total
            idx.append(int(rng.choice(n, p=probs)))
            d2 = np.minimum(d2, np.sum((X - X[idx[-1]])**2, axis=1))
        centroids = X[idx].copy()
    for _ in range(KMEANS_MAX_ITERS):
        d = _sqdist(X, centroids)
        labels = np.argmin(d, axis=1)
        new_centroids = []
        remap = {}
        for c in range(len(centroids)):
            members = X[labels == c]
            if len(members) == 0:
                continue
            remap[c] = len(new_centroids)
            new_centroids.append(members.mean(axis=0))
        new_centroids = np.array(new_centroids)
        shift = np.inf
        if new_centroids.shape == centroids.shape:
            shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < KMEANS_TOL:
            break
    d = _sqdist(X, centroids)
    labels = np.argmin(d, axis=1)
    return centroids, labels


def _sqdist(X, C):
    return (np.sum(X * X, axis=1)[:, None] + np.sum(C * C, axis=1)[None, :]
            - 2.0 * (X @ C.T))


class VocabTree:
    """Hierarchical k-means vocabulary: branching k, depth L, idf weights."""

    def __init__(self, k, depth, nodes, root_children, word_count):
        self.k = k
        self.depth = depth
        self.nodes = nodes
        self.root_children = root_children
        self.word_count = word_count

    # -- training ------------------------------------------------------------

    @classmethod
    def train(cls, documents, k=DEFAULT_BRANCHING, depth=DEFAULT_DEPTH, seed=0):
        """Build the tree from documents (one (N,384) descriptor array each).

        Deterministic for a fixed seed; idf(w) = ln(N_docs / n_docs_with_w).
        """
        docs = [np.asarray(d, dtype=np.float64).reshape(-1, DESCRIPTOR_DIM)
                for d in documents if len(d)]
        if not docs:
            raise InsufficientData("empty training corpus")
        if k < 2 or depth < 1:
            raise ValueError("need k >= 2 and depth >= 1")
        X = np.concatenate(docs, axis=0)
        nodes = []
        word_counter = [0]

        def build(data, level, path):
            rng = np.random.RandomState(
                (seed * 2654435761 + zlib.crc32(bytes(path))) % (2**32))
            centroids, labels = _kmeans(data, k, rng)
            ids = []
            for c in range(len(centroids)):
                # float32 centroids so the in-memory tree matches its
                # binary round trip exactly
                node = Node(centroid=centroids[c].astype(np.float32)
                            .astype(np.float64))
                node_id = len(nodes)
                nodes.append(node)
                ids.append(node_id)
                members = data[labels == c]
                if level + 1 < depth and len(members) > 1:
                    node.children = build(members, level + 1,
                                          path + [c % 256])
                if not node.children:
                    node.word_id = word_counter[0]
                    word_counter[0] += 1
            return ids

        root_children = build(X, 0, [])
        tree = cls(k, depth, nodes, root_children, word_counter[0])
        tree._compute_idf(docs)
        return tree

    def _compute_idf(self, docs):
        n_docs = len(docs)
        doc_freq = np.zeros(self.word_count, dtype=np.int64)
        for d in docs:
            words = {self.word_of(x) for x in d}
            for w in words:
                doc_freq[w] += 1
        for node in self.nodes:
            if node.word_id >= 0:
                df = doc_freq[node.word_id]
                w = float(np.log(n_docs / df)) if df > 0 else 0.0
                node.weight = float(np.float32(w))

    # -- lookup --------------------------------------------------------------

    def word_of(self, descriptor):
        """Greedy nearest-centroid descent to a leaf word id."""
        d = np.asarray(descriptor, dtype=np.float64).ravel()
        ids = self.root_children
        while True:
            cents = np.array([self.nodes[i].centroid for i in ids])
            best = ids[int(np.argmin(np.sum((cents - d)**2, axis=1)))]
            node = self.nodes[best]
            if node.is_leaf:
                return node.word_id
            ids = node.children

    def transform(self, descriptors):
        """BoW vector (word_id -> L1-normalized tf*idf) for a descriptor set."""
        D = np.asarray(descriptors, dtype=np.float64)
        if D.size == 0:
            return {}
        D = D.reshape(-1, DESCRIPTOR_DIM)
        counts = {}
        for d in D:
            w = self.word_of(d)
            counts[w] = counts.get(w, 0) + 1
        total = len(D)
        idf = {n.word_id: n.weight for n in self.nodes if n.word_id >= 0}
        raw = {w: (c / total) * idf[w] for w, c in counts.items()}
        s = sum(raw.values())
        if s <= 0:
            # all idf zero (e.g. single-document corpus): fall back to tf
            raw = {w: c / total for w, c in counts.items()}
            s = sum(raw.values())
        return {w: raw[w] / s for w in sorted(raw)}

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        buf = bytearray()
        buf += struct.pack("<4sIIIII", RWTV_MAGIC, RWTV_VERSION, self.k,
                           self.depth, len(self.nodes), self.word_count)
        buf += struct.pack("<I", len(self.root_children))
        buf += struct.pack(f"<{len(self.root_children)}I", *self.root_children)
        for node in self.nodes:
            buf += np.asarray(node.centroid, dtype="<f4").tobytes()
            buf += struct.pack("<fiI", node.weight, node.word_id,
                               len(node.children))
            if node.children:
                buf += struct.pack(f"<{len(node.children)}I", *node.children)
        buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
        Path(path).write_bytes(bytes(buf))

    @classmethod
    def load(cls, path):
        data = Path(path).read_bytes()
        if len(data) < 28:
            raise Corrupt(f"{path}: too short")
        if data[:4] != RWTV_MAGIC:
            raise BadMagic(f"{path}: magic {data[:4]!r}")
        stored_crc = struct.unpack_from("<I", data, len(data) - 4)[0]
        if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
            raise Corrupt(f"{path}: checksum mismatch")
        _, version, k, depth, n_nodes, word_count = struct.unpack_from(
            "<4sIIIII", data, 0)
        if version != RWTV_VERSION:
            raise VersionMismatch(f"{path}: version {version}")
        off = 24
        (n_root,) = struct.unpack_from("<I", data, off)
        off += 4
        root_children = list(struct.unpack_from(f"<{n_root}I", data, off))
        off += 4 * n_root
        nodes = []
        try:
            for _ in range(n_nodes):
                centroid = np.frombuffer(data, dtype="<f4",
                                         count=DESCRIPTOR_DIM, offset=off
                                         ).astype(np.float64)
                off += 4 * DESCRIPTOR_DIM
                weight, word_id, n_children = struct.unpack_from("<fiI", data, off)
                off += 12
                children = list(struct.unpack_from(f"<{n_children}I", data, off))
                off += 4 * n_children
                nodes.append(Node(centroid, children, weight, word_id))
        except struct.error:
            raise Corrupt(f"{path}: truncated node table")
        return cls(k, depth, nodes, root_children, word_count)


def similarity(a, b):
    """L1 similarity of two L1-normalized BoW vectors, in [0, 1]."""
    if not a or not b:
        return 0.0
    keys = set(a) | set(b)
    diff = sum(abs(a.get(w, 0.0) - b.get(w, 0.0)) for w in keys)
    return max(0.0, 1.0 - 0.5 * diff)
