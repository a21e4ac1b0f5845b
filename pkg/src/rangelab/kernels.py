"""Hot numeric kernels.

Every kernel is written as a plain numpy/int-loop function and compiled with
numba's @njit when available.  Set RANGELAB_NO_NUMBA=1 to force the
interpreted fallback.  Both paths consume pre-drawn uniforms in the same
order, so results are bit-identical regardless of backend.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_OFF = os.environ.get("RANGELAB_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _FORCE_OFF:
        raise ImportError("numba disabled via RANGELAB_NO_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised via env flag
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def py_func(kernel):
    """Return the uncompiled version of a kernel (the kernel itself on the
    fallback path)."""
    return getattr(kernel, "py_func", kernel)


@njit(cache=True)
def walk_fill(us, p_tab, p_hi, cum_a, h0, mode, target, moves):
    """Advance the conditioned walk, writing moves into `moves`.

    us       -- uniforms, consumed in pairs (step, direction)
    p_tab    -- up-probability by current height; p_hi used above the table
    cum_a    -- cumulative direction weights
    mode     -- 0: stop after `target` steps; 1: stop once height >= target
    moves[i] -- j >= 1 for Up(j), 0 for Down

    Returns (n_steps, h_final, done).
    """
    h = h0
    cap = moves.shape[0]
    npairs = us.shape[0] // 2
    ntab = p_tab.shape[0]
    b = cum_a.shape[0]
    n = 0
    done = False
    while n < cap and n < npairs:
        if mode == 0:
            if n >= target:
                done = True
                break
        else:
            if h >= target:
                done = True
                break
        u1 = us[2 * n]
        if h < ntab:
            p = p_tab[h]
        else:
            p = p_hi
        if u1 < p:
            u2 = us[2 * n + 1]
            j = b
            for i in range(b - 1):
                if u2 < cum_a[i]:
                    j = i + 1
                    break
            moves[n] = j
            h += 1
        else:
            moves[n] = 0
            h -= 1
        n += 1
    if mode == 0 and n >= target:
        done = True
    if mode == 1 and h >= target:
        done = True
    return n, h, done


@njit(cache=True)
def decode_moves(moves, n_up):
    """Rebuild the tree whose left contour is the walk's height path.

    Vertices are created one per up-move, in DFS preorder.  Returns
    (children_counts, marks, spine, ok); spine is the root-to-final-position
    path, marks[v] is the branch index of the up-move that created v
    (marks[0] is left at 0 for the caller to fill).
    """
    n = n_up + 1
    counts = np.zeros(n, np.int64)
    marks = np.zeros(n, np.int64)
    stack = np.zeros(n, np.int64)
    sp = 0
    nxt = 1
    for i in range(moves.shape[0]):
        m = moves[i]
        if m > 0:
            counts[stack[sp]] += 1
            marks[nxt] = m
            sp += 1
            stack[sp] = nxt
            nxt += 1
        else:
            if sp == 0:
                return counts, marks, stack[:1], False
            sp -= 1
    return counts, marks, stack[: sp + 1].copy(), True


@njit(cache=True)
def heights_from_counts(counts):
    """DFS-preorder vertex heights from children counts."""
    n = counts.shape[0]
    h = np.zeros(n, np.int64)
    rem = np.zeros(n + 1, np.int64)
    sp = -1
    for i in range(n):
        h[i] = sp + 1
        k = counts[i]
        if k > 0:
            sp += 1
            rem[sp] = k
        else:
            while sp >= 0:
                rem[sp] -= 1
                if rem[sp] == 0:
                    sp -= 1
                else:
                    break
    return h


@njit(cache=True)
def parents_from_counts(counts):
    n = counts.shape[0]
    par = np.full(n, -1, np.int64)
    rem = np.zeros(n + 1, np.int64)
    vtx = np.zeros(n + 1, np.int64)
    sp = -1
    for i in range(n):
        while sp >= 0 and rem[sp] == 0:
            sp -= 1
        if sp >= 0:
            par[i] = vtx[sp]
            rem[sp] -= 1
        k = counts[i]
        if k > 0:
            sp += 1
            vtx[sp] = i
            rem[sp] = k
    return par


@njit(cache=True)
def height_from_lukasiewicz_kernel(v):
    """Weak-record count H_n = #{j < n : V_j = min_{j<=k<=n} V_k}.

    Runs the record definition with a monotone stack; O(n) total.
    """
    n = v.shape[0] - 1
    h = np.zeros(n, np.int64)
    stack = np.zeros(n + 1, np.int64)
    sp = -1
    for i in range(n):
        while sp >= 0 and stack[sp] > v[i]:
            sp -= 1
        h[i] = sp + 1
        sp += 1
        stack[sp] = v[i]
    return h


@njit(cache=True)
def contour_from_height_kernel(hgt):
    """Integer-time contour samples from the height process (b_n transform)."""
    n = hgt.shape[0]
    out = np.zeros(2 * (n - 1) + 1, np.int64) if n > 1 else np.zeros(1, np.int64)
    if n == 1:
        out[0] = hgt[0]
        return out
    out[0] = hgt[0]
    for i in range(n - 1):
        b_next = 2 * (i + 1) - hgt[i + 1]
        s = 2 * i - hgt[i]
        val = hgt[i]
        while s < b_next - 1:
            s += 1
            val -= 1
            out[s] = val
        out[b_next] = hgt[i + 1]
    s = 2 * (n - 1) - hgt[n - 1]
    val = hgt[n - 1]
    last = out.shape[0] - 1
    while s < last:
        s += 1
        val -= 1
        out[s] = val
    return out


@njit(cache=True)
def contour_direct_kernel(counts):
    """Euler tour of the planar tree: unit-speed clockwise particle."""
    n = counts.shape[0]
    if n == 1:
        return np.zeros(1, np.int64)
    out = np.zeros(2 * (n - 1) + 1, np.int64)
    rem = np.zeros(n + 1, np.int64)
    sp = 0
    rem[0] = counts[0]
    h = 0
    t = 0
    nxt = 1
    while True:
        if rem[sp] > 0:
            rem[sp] -= 1
            sp += 1
            rem[sp] = counts[nxt]
            nxt += 1
            h += 1
            t += 1
            out[t] = h
        else:
            if sp == 0:
                break
            sp -= 1
            h -= 1
            t += 1
            out[t] = h
    return out


@njit(cache=True)
def emit_preorder(counts, child_ptr, child_list):
    """New DFS preorder when each vertex's children are re-ordered.

    child_list[child_ptr[v] : child_ptr[v] + counts[v]] are v's children
    (old indices) in the desired new order.  Returns perm with
    perm[new_pos] = old_index.
    """
    n = counts.shape[0]
    perm = np.zeros(n, np.int64)
    stack = np.zeros(n + 1, np.int64)
    cur = np.zeros(n + 1, np.int64)
    sp = 0
    stack[0] = 0
    cur[0] = 0
    perm[0] = 0
    pos = 1
    while sp >= 0:
        v = stack[sp]
        c = cur[sp]
        if c < counts[v]:
            cur[sp] = c + 1
            w = child_list[child_ptr[v] + c]
            perm[pos] = w
            pos += 1
            sp += 1
            stack[sp] = w
            cur[sp] = 0
        else:
            sp -= 1
    return perm


@njit(cache=True)
def walk_trie(moves, n_up, b):
    """Visited-subtree trie of the walk inside the b-ary tree.

    Returns (child_table, parent, first_step, final_node); first_step[v] is
    the 1-based move index at which v was first visited (0 for the root).
    """
    cap = n_up + 1
    child = np.full((cap, b), -1, np.int64)
    parent = np.full(cap, -1, np.int64)
    first_step = np.zeros(cap, np.int64)
    n_nodes = 1
    cur = 0
    for i in range(moves.shape[0]):
        m = moves[i]
        if m > 0:
            t = child[cur, m - 1]
            if t < 0:
                t = n_nodes
                child[cur, m - 1] = t
                parent[t] = cur
                first_step[t] = i + 1
                n_nodes += 1
            cur = t
        else:
            cur = parent[cur]
    return child[:n_nodes], parent[:n_nodes], first_step[:n_nodes], cur


@njit(cache=True)
def trie_to_counts(child, first_step, upto):
    """Canonical ordered tree of the trie nodes first visited by step `upto`.

    Children are emitted in branch order, which is exactly the unique
    root-fixing, adjacency- and order-preserving relabeling.
    """
    nc = child.shape[0]
    b = child.shape[1]
    n_inc = 0
    for v in range(nc):
        if first_step[v] <= upto:
            n_inc += 1
    counts = np.zeros(n_inc, np.int64)
    sn = np.zeros(nc + 1, np.int64)
    sc = np.zeros(nc + 1, np.int64)
    k = 0
    for j in range(b):
        w = child[0, j]
        if w >= 0 and first_step[w] <= upto:
            k += 1
    counts[0] = k
    pos = 1
    sp = 0
    sn[0] = 0
    sc[0] = 0
    while sp >= 0:
        v = sn[sp]
        j = sc[sp]
        pushed = False
        while j < b:
            w = child[v, j]
            j += 1
            if w >= 0 and first_step[w] <= upto:
                sc[sp] = j
                k = 0
                for jj in range(b):
                    ww = child[w, jj]
                    if ww >= 0 and first_step[ww] <= upto:
                        k += 1
                counts[pos] = k
                pos += 1
                sp += 1
                sn[sp] = w
                sc[sp] = 0
                pushed = True
                break
        if not pushed:
            sp -= 1
    return counts
