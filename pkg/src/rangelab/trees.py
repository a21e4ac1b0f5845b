"""Ordered rooted trees, sin-tree slices, and the DFS encodings.

Trees are stored as the DFS-preorder sequence of children counts, which is
equivalent to the Lukasiewicz path.  Ulam-Harris words are derived on demand
and never stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

PATH_KINDS = ("height", "contour", "lukasiewicz")


class InvalidTree(ValueError):
    pass


class InvalidPath(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OrderedTree:
    """Finite rooted ordered tree as DFS-preorder children counts."""

    children_counts: np.ndarray

    @property
    def size(self) -> int:
        return int(self.children_counts.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, OrderedTree):
            return NotImplemented
        return np.array_equal(self.children_counts, other.children_counts)

    def __repr__(self) -> str:
        return f"OrderedTree({' '.join(str(int(k)) for k in self.children_counts)})"

    def to_text(self) -> str:
        """One-line serialization: space-separated children counts."""
        return " ".join(str(int(k)) for k in self.children_counts)

    @classmethod
    def from_text(cls, line: str) -> "OrderedTree":
        return build_tree([int(tok) for tok in line.split()])


@dataclass(frozen=True, eq=False)
class PathSeq:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise InvalidPath(f"unknown path kind {self.kind!r}")
        v = self.values
        if self.kind == "contour":
            if v.shape[0] and (v < 0).any():
                raise InvalidPath("contour values must be nonnegative")
            if v.shape[0] > 1 and (np.abs(np.diff(v)) != 1).any():
                raise InvalidPath("contour increments must be +-1")
        elif self.kind == "lukasiewicz":
            if v.shape[0] > 1 and (np.diff(v) < -1).any():
                raise InvalidPath("lukasiewicz increments must be >= -1")

    def __eq__(self, other) -> bool:
        if not isinstance(other, PathSeq):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.values, other.values)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def to_csv_column(self) -> str:
        return "\n".join(str(int(x)) for x in self.values)


@dataclass(frozen=True, eq=False)
class SinTreeSlice:
    """Sin-tree cut at its spine vertex of height n.

    `spine` holds the DFS indices of u*_0 ... u*_n inside `tree`.
    """

    tree: OrderedTree
    spine: np.ndarray

    @property
    def spine_height(self) -> int:
        return int(self.spine.shape[0]) - 1

    def __post_init__(self):
        h = heights(self.tree)
        sp = self.spine
        if sp.shape[0] == 0 or sp[0] != 0:
            raise InvalidTree("spine must start at the root")
        if not np.array_equal(h[sp], np.arange(sp.shape[0])):
            raise InvalidTree("spine must contain one vertex per height 0..n")
        par = kernels.parents_from_counts(self.tree.children_counts)
        for i in range(1, sp.shape[0]):
            if par[sp[i]] != sp[i - 1]:
                raise InvalidTree("spine indices must form an ancestral chain")


@dataclass(frozen=True)
class SpineDecomposition:
    n_of_p: np.ndarray
    p_of_n: np.ndarray
    alpha: np.ndarray
    L: np.ndarray


def build_tree(children_counts) -> OrderedTree:
    counts = np.asarray(children_counts, dtype=np.int64)
    if counts.ndim != 1 or counts.shape[0] == 0:
        raise InvalidTree("children_counts must be a nonempty 1-d sequence")
    if (counts < 0).any():
        raise InvalidTree("children counts must be nonnegative")
    v = np.concatenate(([0], np.cumsum(counts - 1)))
    if (v[:-1] < 0).any() or v[-1] != -1:
        raise InvalidTree("Lukasiewicz path must stay >= 0 and end at -1")
    counts = counts.copy()
    counts.flags.writeable = False
    return OrderedTree(counts)


def heights(t: OrderedTree) -> np.ndarray:
    return kernels.heights_from_counts(t.children_counts)


def parents(t: OrderedTree) -> np.ndarray:
    return kernels.parents_from_counts(t.children_counts)


def height_process(t: OrderedTree) -> PathSeq:
    return PathSeq(heights(t), "height")


def lukasiewicz_path(t: OrderedTree) -> PathSeq:
    counts = t.children_counts
    v = np.concatenate(([0], np.cumsum(counts - 1)))
    return PathSeq(v, "lukasiewicz")


def height_from_lukasiewicz(path: PathSeq) -> PathSeq:
    if path.kind != "lukasiewicz":
        raise InvalidPath("expected a lukasiewicz path")
    if len(path) < 2:
        raise InvalidPath("lukasiewicz path of a tree has length >= 2")
    h = kernels.height_from_lukasiewicz_kernel(path.values)
    return PathSeq(h, "height")


def contour_from_height(path: PathSeq, size: int | None = None) -> PathSeq:
    if path.kind != "height":
        raise InvalidPath("expected a height path")
    if size is not None and size != len(path):
        raise InvalidPath("size does not match height path length")
    c = kernels.contour_from_height_kernel(path.values)
    return PathSeq(c, "contour")


def contour_direct(t: OrderedTree) -> PathSeq:
    return PathSeq(kernels.contour_direct_kernel(t.children_counts), "contour")


def words(t: OrderedTree) -> list[tuple[int, ...]]:
    """Ulam-Harris words in DFS order (derived, for tests and small trees)."""
    par = parents(t)
    slot = np.zeros(t.size, dtype=np.int64)
    seen = np.zeros(t.size, dtype=np.int64)
    out: list[tuple[int, ...]] = [()]
    for i in range(1, t.size):
        p = par[i]
        seen[p] += 1
        slot[i] = seen[p]
        out.append(out[p] + (int(slot[i]),))
    return out


def _children_table(t: OrderedTree):
    """(child_ptr, child_list): children of each vertex, left to right."""
    counts = t.children_counts
    par = parents(t)
    n = t.size
    ends = np.cumsum(counts)
    ptr = ends - counts
    if n == 1:
        return ptr, np.zeros(0, dtype=np.int64)
    order = np.argsort(par[1:], kind="stable") + 1
    return ptr, order.astype(np.int64)


def reorder_children(t: OrderedTree, child_list: np.ndarray) -> tuple[OrderedTree, np.ndarray]:
    """Rebuild the tree with the given flattened new child order.

    Returns (new_tree, perm) with perm[new_pos] = old index.
    """
    counts = t.children_counts
    ptr, _ = _children_table(t)
    perm = kernels.emit_preorder(counts, ptr, child_list)
    return OrderedTree(counts[perm]), perm


def mirror_with_perm(t: OrderedTree) -> tuple[OrderedTree, np.ndarray]:
    """Mirror image plus the permutation perm[new_pos] = old index."""
    if t.size == 1:
        return t, np.zeros(1, dtype=np.int64)
    par = parents(t)
    idx = np.arange(t.size, dtype=np.int64)
    child_list = np.lexsort((-idx[1:], par[1:]))
    return reorder_children(t, (child_list + 1).astype(np.int64))


def mirror(t: OrderedTree) -> OrderedTree:
    return mirror_with_perm(t)[0]


def mirror_slice(s: SinTreeSlice) -> SinTreeSlice:
    """Mirror image of a slice with the spine carried along."""
    new, perm = mirror_with_perm(s.tree)
    inv = np.empty(s.tree.size, dtype=np.int64)
    inv[perm] = np.arange(s.tree.size)
    return SinTreeSlice(new, inv[s.spine])


def all_trees(max_size: int) -> list[OrderedTree]:
    """Every ordered rooted tree with at most max_size vertices."""
    forests: dict[int, list[tuple[tuple[int, ...], int]]] = {0: [((), 0)]}
    tree_seqs: dict[int, list[tuple[int, ...]]] = {}
    for n in range(1, max_size + 1):
        tree_seqs[n] = [(k,) + fseq for fseq, k in forests[n - 1]]
        combos = []
        for m in range(1, n + 1):
            for tseq in tree_seqs[m]:
                for fseq, k in forests[n - m]:
                    combos.append((tseq + fseq, k + 1))
        forests[n] = combos
    out = []
    for n in range(1, max_size + 1):
        out.extend(build_tree(seq) for seq in tree_seqs[n])
    return out


def subtree_end(t: OrderedTree, v: int, h: np.ndarray | None = None) -> int:
    """One past the last DFS index of v's subtree."""
    if h is None:
        h = heights(t)
    after = np.nonzero(h[v + 1 :] <= h[v])[0]
    return int(v + 1 + after[0]) if after.size else t.size


def truncate_at_height(t: OrderedTree, n: int) -> OrderedTree:
    """[t]_n: keep vertices of height <= n."""
    h = heights(t)
    keep = h <= n
    counts = np.where(h == n, 0, t.children_counts)[keep]
    return OrderedTree(counts)


def truncate_at_spine(s: SinTreeSlice, m: int) -> SinTreeSlice:
    """[t]_{u*_m}: drop the strict descendants of the spine vertex at height m."""
    if not 0 <= m <= s.spine_height:
        raise InvalidTree(f"spine height {m} out of range 0..{s.spine_height}")
    if m == s.spine_height:
        return s
    t = s.tree
    v = int(s.spine[m])
    end = subtree_end(t, v)
    keep = np.ones(t.size, dtype=bool)
    keep[v + 1 : end] = False
    counts = t.children_counts.copy()
    counts[v] = 0
    counts = counts[keep]
    new_index = np.cumsum(keep) - 1
    return SinTreeSlice(OrderedTree(counts), new_index[s.spine[: m + 1]])


def left_part_heights(s: SinTreeSlice) -> np.ndarray:
    """Heights of the slice vertices at-or-left of the spine, in DFS order."""
    h = heights(s.tree)
    tip = int(s.spine[-1])
    return h[: tip + 1]


def sigma_n(path: PathSeq, n: int) -> int:
    """Last index with height <= n (Eq. sup{k : H_k <= n})."""
    if path.kind != "height":
        raise InvalidPath("expected a height path")
    v = path.values
    if not (v > n).any():
        raise InvalidPath(f"height never exceeds {n}: sigma undefined")
    return int(np.nonzero(v <= n)[0][-1])


def _is_spine_index(s: SinTreeSlice) -> np.ndarray:
    mask = np.zeros(s.tree.size, dtype=bool)
    mask[s.spine] = True
    return mask


def bush_forest(s: SinTreeSlice) -> list[OrderedTree]:
    """f(t): bushes rooted strictly left of the spine, in lex order of roots."""
    t = s.tree
    h = heights(t)
    on_spine = _is_spine_index(s)
    tip = int(s.spine[-1])
    out = []
    v = 0
    while v <= tip:
        if v > 0 and not on_spine[v]:
            end = subtree_end(t, v, h)
            par = v  # bush root; its subtree is preorder-contiguous
            out.append(OrderedTree(t.children_counts[par:end].copy()))
            v = end
        else:
            v += 1
    return out


def forest_lukasiewicz(forest: list[OrderedTree]) -> np.ndarray:
    """V(f): concatenated Lukasiewicz path of the forest (V_0 = 0)."""
    if not forest:
        return np.zeros(1, dtype=np.int64)
    steps = np.concatenate([t.children_counts - 1 for t in forest])
    return np.concatenate(([0], np.cumsum(steps)))


def forest_heights(forest: list[OrderedTree]) -> np.ndarray:
    if not forest:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([heights(t) for t in forest])


def spine_decomposition(s: SinTreeSlice) -> SpineDecomposition:
    """Maps n(p), p(n), alpha(p) and the ladder L_k for the left part."""
    on_spine = _is_spine_index(s)
    tip = int(s.spine[-1])
    m = s.spine_height

    # L_k = (l_1 - 1) + ... + (l_k - 1): spine child slots from sibling ranks
    par = parents(s.tree)
    slot = np.zeros(m + 1, dtype=np.int64)
    for k in range(1, m + 1):
        v = int(s.spine[k])
        p = int(s.spine[k - 1])
        rank = 1
        w = p + 1
        h = heights(s.tree)
        while w < v:
            if par[w] == p:
                rank += 1
            w = subtree_end(s.tree, w, h)
        slot[k] = rank
    L = np.concatenate(([0], np.cumsum(slot[1:] - 1)))

    f = bush_forest(s)
    vf = forest_lukasiewicz(f)
    n_bush = sum(t.size for t in f)

    alpha = np.zeros(n_bush, dtype=np.int64)
    run_min = 0
    for p in range(n_bush):
        run_min = min(run_min, int(vf[p]))
        need = 1 - run_min
        ks = np.nonzero(L >= need)[0]
        alpha[p] = int(ks[0])
    n_of_p = np.arange(n_bush, dtype=np.int64) + alpha

    n_left = tip + 1
    p_of_n = np.zeros(n_left, dtype=np.int64)
    acc = 0
    for n in range(n_left):
        p_of_n[n] = acc
        if not on_spine[n]:
            acc += 1
    return SpineDecomposition(n_of_p, p_of_n, alpha, L)


def range_tree(moves: np.ndarray, b: int, upto: int | None = None) -> OrderedTree:
    """Canonical ordered tree of the walk's visited subtree of U.

    `moves` are Up(j)/Down codes; `upto` restricts to positions visited within
    the first `upto` moves (defaults to all).
    """
    moves = np.asarray(moves, dtype=np.int64)
    if moves.shape[0] == 0:
        raise InvalidTree("walk must have at least one move")
    n_up = int(np.count_nonzero(moves))
    child, _parent, first_step, _cur = kernels.walk_trie(moves, n_up, b)
    if upto is None:
        upto = moves.shape[0]
    counts = kernels.trie_to_counts(child, first_step, upto)
    return OrderedTree(counts)
