"""Marked trees, the track map, sibling shuffling, and the collision counts.

The track of a vertex is the word of marks along its ancestry (the root mark
plays no role).  Tracking a walk-decoded tree recovers the walk's visited
subtree of U; sorting sibling blocks by mark and then identifying equal
tracks turns the decoded tree into the range tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .samplers import HeightStabilized, ModelParams, Walk
from .trees import (
    InvalidTree,
    OrderedTree,
    SinTreeSlice,
    parents,
    reorder_children,
    subtree_end,
)


class TrackNotMonotone(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MarkedTree:
    tree: OrderedTree
    marks: np.ndarray

    def __post_init__(self):
        if self.marks.shape[0] != self.tree.size:
            raise InvalidTree("need one mark per vertex")
        if (self.marks < 1).any():
            raise InvalidTree("marks must be positive integers")

    @property
    def size(self) -> int:
        return self.tree.size

    def to_csv(self) -> str:
        lines = ["children_count,mark"]
        for k, m in zip(self.tree.children_counts, self.marks):
            lines.append(f"{int(k)},{int(m)}")
        return "\n".join(lines)


class ZMap:
    """Trie over tracked words; Z_v = number of vertices tracking to v.

    The support is prefix-closed by construction and every node has a
    positive count (each tracked word's ancestors are tracks of ancestors).
    """

    def __init__(self):
        self.letter = [0]
        self.parent = [-1]
        self.count = [0]
        self._children: list[dict[int, int]] = [{}]

    def child(self, node: int, letter: int) -> int:
        nxt = self._children[node].get(letter, -1)
        if nxt < 0:
            nxt = len(self.letter)
            self.letter.append(letter)
            self.parent.append(node)
            self.count.append(0)
            self._children.append({})
            self._children[node][letter] = nxt
        return nxt

    def word_of(self, node: int) -> tuple[int, ...]:
        out = []
        while node > 0:
            out.append(self.letter[node])
            node = self.parent[node]
        return tuple(reversed(out))

    def count_of(self, word) -> int:
        node = 0
        for c in word:
            node = self._children[node].get(c, -1)
            if node < 0:
                return 0
        return self.count[node]

    @property
    def distinct(self) -> int:
        return len(self.letter)

    @property
    def total(self) -> int:
        return sum(self.count)

    def items(self):
        """(word, count) pairs in lexicographic order of words."""
        stack = [(0, iter(sorted(self._children[0].items())))]
        yield (), self.count[0]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                continue
            _, child = nxt
            yield self.word_of(child), self.count[child]
            stack.append((child, iter(sorted(self._children[child].items()))))

    def canonical(self):
        """Nested (letter -> subtree) form; equality means equal word sets."""

        def rec(node):
            return tuple((c, rec(w)) for c, w in sorted(self._children[node].items()))

        return rec(0)

    def to_csv(self) -> str:
        lines = ["word,count"]
        for word, count in self.items():
            lines.append(f"{' '.join(map(str, word))},{count}")
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class Track:
    """Per-vertex track: node_of[v] indexes into the ZMap trie."""

    node_of: np.ndarray
    zmap: ZMap

    def word_of(self, v: int) -> tuple[int, ...]:
        return self.zmap.word_of(int(self.node_of[v]))


def attach_iid_marks(t: OrderedTree, params: ModelParams,
                     rng: np.random.Generator) -> MarkedTree:
    cum = params.cum_weights()
    marks = np.searchsorted(cum, rng.random(t.size), side="right") + 1
    return MarkedTree(t, marks.astype(np.int64))


def track(marked: MarkedTree) -> tuple[Track, ZMap]:
    z = ZMap()
    par = parents(marked.tree)
    node_of = np.zeros(marked.size, dtype=np.int64)
    z.count[0] += 1
    for v in range(1, marked.size):
        node = z.child(int(node_of[par[v]]), int(marked.marks[v]))
        node_of[v] = node
        z.count[node] += 1
    tr = Track(node_of, z)
    return tr, z


def track_forest(forest: list[MarkedTree]) -> ZMap:
    """Shared-trie Z map of a marked forest (roots all track to the empty
    word; the fictive root is not counted)."""
    z = ZMap()
    for marked in forest:
        par = parents(marked.tree)
        node_of = np.zeros(marked.size, dtype=np.int64)
        z.count[0] += 1
        for v in range(1, marked.size):
            node = z.child(int(node_of[par[v]]), int(marked.marks[v]))
            node_of[v] = node
            z.count[node] += 1
    return z


def distinct_ratio(z: ZMap) -> tuple[int, int]:
    return z.distinct, z.total


def shuffle_with_perm(marked: MarkedTree,
                      rng: np.random.Generator) -> tuple[MarkedTree, np.ndarray]:
    """Mark-sorted sibling shuffle; returns (shuffled, perm) with
    perm[new_index] = old_index.  Ties are broken uniformly at random."""
    n = marked.size
    if n == 1:
        return marked, np.zeros(1, dtype=np.int64)
    par = parents(marked.tree)
    tie = rng.random(n - 1)
    order = np.lexsort((tie, marked.marks[1:], par[1:])) + 1
    new_tree, perm = reorder_children(marked.tree, order.astype(np.int64))
    return MarkedTree(new_tree, marked.marks[perm]), perm


def shuffle(marked: MarkedTree, rng: np.random.Generator) -> MarkedTree:
    return shuffle_with_perm(marked, rng)[0]


def uniform_shuffle_tree(t: OrderedTree, rng: np.random.Generator) -> OrderedTree:
    """Plain Sh(t): reorder sibling blocks uniformly at random."""
    if t.size == 1:
        return t
    par = parents(t)
    key = rng.random(t.size - 1)
    order = np.lexsort((key, par[1:])) + 1
    new_tree, _ = reorder_children(t, order.astype(np.int64))
    return new_tree


def siblings_mark_sorted(marked: MarkedTree) -> bool:
    """Whether every vertex's children carry nondecreasing marks."""
    if marked.size <= 2:
        return True
    par = parents(marked.tree)
    order = np.argsort(par[1:], kind="stable") + 1
    m = marked.marks[order]
    p = par[order]
    bad = (np.diff(m) < 0) & (p[1:] == p[:-1])
    return not bad.any()


def track_monotone_violations(marked: MarkedTree) -> int:
    """Number of consecutive DFS pairs with decreasing tracks.

    Zero iff u <= v implies Tr(u) <= Tr(v) for all pairs (the sequence of
    tracks is sorted iff consecutive pairs are).
    """
    tr, _ = track(marked)
    bad = 0
    prev: tuple[int, ...] = ()
    for v in range(marked.size):
        w = tr.word_of(v)
        if _word_lt(w, prev):
            bad += 1
        prev = w
    return bad


def _word_lt(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    """a < b in the lexicographic order with shorter-prefix-first."""
    for x, y in zip(a, b):
        if x != y:
            return x < y
    return len(a) < len(b)


@dataclass(frozen=True, eq=False)
class DecodedWalk:
    """Walk decoded into the marked tree whose left contour is |W|."""

    tree: OrderedTree
    marks: np.ndarray
    spine: np.ndarray

    def marked(self) -> MarkedTree:
        return MarkedTree(self.tree, self.marks)

    def slice(self) -> SinTreeSlice:
        return SinTreeSlice(self.tree, self.spine)


def decode_walk_to_marked_tree(walk: Walk, params: ModelParams,
                               rng: np.random.Generator,
                               x_cut: int | None = None) -> DecodedWalk:
    """Rebuild the fictive tree behind |W|, marked by upcrossing directions.

    The root mark is drawn fresh from the weights.  With `x_cut` set (or a
    HeightStabilized walk), strict descendants of the spine vertex at that
    height are dropped, mirroring the [.]_{u*_x} cut.
    """
    moves = walk.moves
    n_up = int(np.count_nonzero(moves))
    counts, marks, spine, ok = kernels.decode_moves(moves, n_up)
    if not ok:
        raise InvalidTree("walk height went below zero; not a conditioned walk")
    cum = params.cum_weights()
    marks = marks.copy()
    marks[0] = int(np.searchsorted(cum, rng.random(), side="right")) + 1
    if x_cut is None and isinstance(getattr(walk, "stop", None), HeightStabilized):
        x_cut = walk.stop.x_target
    if x_cut is None or x_cut >= spine.shape[0] - 1:
        # final vertex has no children yet; counts already reflect the stop
        tree = OrderedTree(counts)
        return DecodedWalk(tree, marks, spine)
    v = int(spine[x_cut])
    tree = OrderedTree(counts)
    end = subtree_end(tree, v)
    keep = np.ones(tree.size, dtype=bool)
    keep[v + 1 : end] = False
    new_counts = counts.copy()
    new_counts[v] = 0
    cut_tree = OrderedTree(new_counts[keep])
    new_index = np.cumsum(keep) - 1
    return DecodedWalk(cut_tree, marks[keep], new_index[spine[: x_cut + 1]])


def decode_walk_prefix(walk: Walk, params: ModelParams,
                       rng: np.random.Generator, upto: int) -> DecodedWalk:
    """Decode only the first `upto` moves: the tree whose left contour is
    (|W_n|; n <= upto).

    Its track image is exactly {W_n; n <= upto}.  With upto = the last time
    at or below x_eps, the end-of-walk stack is the spine u*_0..u*_{x_eps}.
    """
    moves = walk.moves[:upto]
    n_up = int(np.count_nonzero(moves))
    counts, marks_arr, spine, ok = kernels.decode_moves(moves, n_up)
    if not ok:
        raise InvalidTree("walk height went below zero; not a conditioned walk")
    cum = params.cum_weights()
    marks_arr = marks_arr.copy()
    marks_arr[0] = int(np.searchsorted(cum, rng.random(), side="right")) + 1
    return DecodedWalk(OrderedTree(counts), marks_arr, spine)


def shrink_to_range_tree(marked: MarkedTree) -> OrderedTree:
    """Canonical ordered tree of the track image (identify equal tracks)."""
    if not siblings_mark_sorted(marked):
        raise TrackNotMonotone("sibling marks must be nondecreasing; shuffle first")
    _, z = track(marked)
    counts = np.zeros(z.distinct, dtype=np.int64)
    pos = 0
    stack = [(0, iter(sorted(z._children[0].items())))]
    counts[pos] = len(z._children[0])
    pos += 1
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            continue
        _, child = nxt
        counts[pos] = len(z._children[child])
        pos += 1
        stack.append((child, iter(sorted(z._children[child].items()))))
    return OrderedTree(counts)


def visited_trie_canonical(walk: Walk, params: ModelParams,
                           upto: int | None = None):
    """Canonical nested form of the walk's visited set (letters included)."""
    moves = walk.moves if upto is None else walk.moves[:upto]
    z = ZMap()
    node = 0
    for m in moves:
        if m > 0:
            node = z.child(node, int(m))
        else:
            node = z.parent[node]
    return z.canonical()


def track_image_canonical(marked: MarkedTree):
    _, z = track(marked)
    return z.canonical()
