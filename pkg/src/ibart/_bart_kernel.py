"""Compiled backfitting MCMC for sum-of-trees regression.

Trees are stored in heap layout (children of node ``i`` are ``2i+1`` and
``2i+2``), so depth is implicit and no pointers are needed.  Every array is
indexed ``[tree, node]``.  Node state is 0 (unused), 1 (leaf) or 2 (internal).

The caller scales the response, fixes the hyperparameters and seeds the
kernel; everything here is pure numerics.
"""

import math

import numpy as np
from numba import njit

UNUSED = 0
LEAF = 1
INTERNAL = 2


@njit(cache=True, nogil=True)
def _depth(node):
    d = 0
    node += 1
    while node > 1:
        node >>= 1
        d += 1
    return d


@njit(cache=True, nogil=True)
def _psplit(d, alpha, beta, max_depth):
    if d >= max_depth:
        return 0.0
    return alpha * (1.0 + d) ** (-beta)


@njit(cache=True, nogil=True)
def _leaf_loglik(cnt, total, sigma2, tau2):
    # integrated over the N(0, tau2) leaf value; terms shared by all trees dropped
    denom = sigma2 + cnt * tau2
    return 0.5 * math.log(sigma2 / denom) + tau2 * total * total / (2.0 * sigma2 * denom)


@njit(cache=True, nogil=True)
def _gather(leaf_of_t, node, idx):
    k = 0
    for i in range(leaf_of_t.shape[0]):
        if leaf_of_t[i] == node:
            idx[k] = i
            k += 1
    return k


@njit(cache=True, nogil=True)
def _is_splittable(col, idx, k):
    if k < 2:
        return False
    first = col[idx[0]]
    for j in range(1, k):
        if col[idx[j]] != first:
            return True
    return False


@njit(cache=True, nogil=True)
def _pick_variable(Xt, idx, k, valid_buf):
    """Uniform draw among variables with at least two distinct values in the node.

    Rejection sampling is exact for the uniform law on the valid set; the
    full scan only runs when the first few blind draws all fail.
    """
    p = Xt.shape[0]
    if k < 2:
        return -1
    for _ in range(min(p, 16)):
        v = np.random.randint(0, p)
        if _is_splittable(Xt[v], idx, k):
            return v
    nvalid = 0
    for v in range(p):
        if _is_splittable(Xt[v], idx, k):
            valid_buf[nvalid] = v
            nvalid += 1
    if nvalid == 0:
        return -1
    return valid_buf[np.random.randint(0, nvalid)]


@njit(cache=True, nogil=True)
def _pick_cut(col, idx, k, vals):
    """Uniform draw among the distinct node values except the largest."""
    for j in range(k):
        vals[j] = col[idx[j]]
    s = np.sort(vals[:k])
    ndistinct = 1
    for j in range(1, k):
        if s[j] != s[j - 1]:
            s[ndistinct] = s[j]
            ndistinct += 1
    return s[np.random.randint(0, ndistinct - 1)]


@njit(cache=True, nogil=True)
def _split_stats(col, idx, k, cut, r):
    nl = 0
    sl = 0.0
    sr = 0.0
    for j in range(k):
        i = idx[j]
        if col[i] <= cut:
            nl += 1
            sl += r[i]
        else:
            sr += r[i]
    return nl, sl, k - nl, sr


@njit(cache=True, nogil=True)
def _count_nog(state_t, leaves_t, nleaf):
    # internal nodes whose children are both leaves, found through their left child
    w = 0
    for j in range(nleaf):
        node = leaves_t[j]
        if node > 0 and node % 2 == 1 and state_t[node + 1] == LEAF:
            w += 1
    return w


@njit(cache=True, nogil=True)
def _nth_nog(state_t, leaves_t, nleaf, which):
    w = 0
    for j in range(nleaf):
        node = leaves_t[j]
        if node > 0 and node % 2 == 1 and state_t[node + 1] == LEAF:
            if w == which:
                return (node - 1) // 2
            w += 1
    return -1


@njit(cache=True, nogil=True)
def _remove_leaf(leaves_t, nleaf, node):
    for j in range(nleaf):
        if leaves_t[j] == node:
            leaves_t[j] = leaves_t[nleaf - 1]
            return nleaf - 1
    return nleaf


@njit(cache=True, nogil=True)
def _grow(t, Xt, r, state, var, cut, leaves, nleaf, leaf_of, split_count,
          idx, vals, valid_buf, sigma2, tau2, alpha, beta, max_depth,
          p_grow, p_prune, stats):
    b = nleaf[t]
    node = leaves[t, np.random.randint(0, b)]
    d = _depth(node)
    ps = _psplit(d, alpha, beta, max_depth)
    if ps <= 0.0:
        return
    k = _gather(leaf_of[t], node, idx)
    v = _pick_variable(Xt, idx, k, valid_buf)
    if v < 0:
        return
    c = _pick_cut(Xt[v], idx, k, vals)
    nl, sl, nr, sr = _split_stats(Xt[v], idx, k, c, r)
    if nl == 0 or nr == 0:
        return
    w_new = _count_nog(state[t], leaves[t], b)
    if node > 0:
        sib = node + 1 if node % 2 == 1 else node - 1
        if state[t, sib] == LEAF:
            w_new -= 1
    w_new += 1
    pg = 1.0 if b == 1 else p_grow
    ps_child = _psplit(d + 1, alpha, beta, max_depth)
    log_r = (math.log(p_prune / pg) + math.log(b) - math.log(w_new)
             + math.log(ps) + 2.0 * math.log(1.0 - ps_child) - math.log(1.0 - ps)
             + _leaf_loglik(nl, sl, sigma2, tau2) + _leaf_loglik(nr, sr, sigma2, tau2)
             - _leaf_loglik(k, sl + sr, sigma2, tau2))
    stats[0] += 1
    if math.log(np.random.random()) < log_r:
        stats[1] += 1
        left = 2 * node + 1
        right = left + 1
        state[t, node] = INTERNAL
        var[t, node] = v
        cut[t, node] = c
        state[t, left] = LEAF
        state[t, right] = LEAF
        for j in range(b):
            if leaves[t, j] == node:
                leaves[t, j] = left
                break
        leaves[t, b] = right
        nleaf[t] = b + 1
        col = Xt[v]
        for j in range(k):
            i = idx[j]
            leaf_of[t, i] = left if col[i] <= c else right
        split_count[v] += 1


@njit(cache=True, nogil=True)
def _prune(t, r, state, var, leaves, nleaf, leaf_of, split_count, sigma2, tau2,
           alpha, beta, max_depth, p_grow, p_prune, stats):
    b = nleaf[t]
    w = _count_nog(state[t], leaves[t], b)
    node = _nth_nog(state[t], leaves[t], b, np.random.randint(0, w))
    left = 2 * node + 1
    right = left + 1
    nl = 0
    nr = 0
    sl = 0.0
    sr = 0.0
    lt = leaf_of[t]
    for i in range(lt.shape[0]):
        if lt[i] == left:
            nl += 1
            sl += r[i]
        elif lt[i] == right:
            nr += 1
            sr += r[i]
    d = _depth(node)
    ps = _psplit(d, alpha, beta, max_depth)
    ps_child = _psplit(d + 1, alpha, beta, max_depth)
    b_new = b - 1
    pg_new = 1.0 if b_new == 1 else p_grow
    log_r = (math.log(pg_new / p_prune) + math.log(w) - math.log(b_new)
             - (math.log(ps) + 2.0 * math.log(1.0 - ps_child) - math.log(1.0 - ps))
             - (_leaf_loglik(nl, sl, sigma2, tau2) + _leaf_loglik(nr, sr, sigma2, tau2)
                - _leaf_loglik(nl + nr, sl + sr, sigma2, tau2)))
    stats[2] += 1
    if math.log(np.random.random()) < log_r:
        stats[3] += 1
        split_count[var[t, node]] -= 1
        state[t, node] = LEAF
        state[t, left] = UNUSED
        state[t, right] = UNUSED
        var[t, node] = -1
        b = _remove_leaf(leaves[t], b, left)
        b = _remove_leaf(leaves[t], b, right)
        leaves[t, b] = node
        nleaf[t] = b + 1
        for i in range(lt.shape[0]):
            if lt[i] == left or lt[i] == right:
                lt[i] = node


@njit(cache=True, nogil=True)
def _change(t, Xt, r, state, var, cut, leaves, nleaf, leaf_of, split_count,
            idx, vals, valid_buf, sigma2, tau2, stats):
    b = nleaf[t]
    w = _count_nog(state[t], leaves[t], b)
    node = _nth_nog(state[t], leaves[t], b, np.random.randint(0, w))
    left = 2 * node + 1
    right = left + 1
    lt = leaf_of[t]
    k = 0
    for i in range(lt.shape[0]):
        if lt[i] == left or lt[i] == right:
            idx[k] = i
            k += 1
    v = _pick_variable(Xt, idx, k, valid_buf)
    if v < 0:
        return
    c = _pick_cut(Xt[v], idx, k, vals)
    nl, sl, nr, sr = _split_stats(Xt[v], idx, k, c, r)
    if nl == 0 or nr == 0:
        return
    ol, osl, onr, osr = _split_stats(Xt[var[t, node]], idx, k, cut[t, node], r)
    log_r = (_leaf_loglik(nl, sl, sigma2, tau2) + _leaf_loglik(nr, sr, sigma2, tau2)
             - _leaf_loglik(ol, osl, sigma2, tau2) - _leaf_loglik(onr, osr, sigma2, tau2))
    stats[4] += 1
    if math.log(np.random.random()) < log_r:
        stats[5] += 1
        split_count[var[t, node]] -= 1
        split_count[v] += 1
        var[t, node] = v
        cut[t, node] = c
        col = Xt[v]
        for j in range(k):
            i = idx[j]
            lt[i] = left if col[i] <= c else right


@njit(cache=True, nogil=True)
def run_chain(Xt, y, n_trees, n_burn, n_keep, thin, alpha, beta, tau, nu, lam,
              sigma2_init, max_depth, p_grow, p_prune, fix_sigma2, freeze_trees,
              record_depths, seed):
    """Run one chain and return per-draw split counts and noise variances.

    Parameters
    ----------
    Xt : (p, n) float64, C-contiguous
        Predictors, one row per variable.
    y : (n,) float64
        Scaled response.

    Returns
    -------
    counts : (n_keep, p) int64
        Number of split rules on each variable, summed over trees, per kept draw.
    sigma2_draws : (n_keep,) float64
    depth_table : (max_depth + 1, 2) int64
        Only filled when ``record_depths``.  Over kept draws: number of nodes at each depth, and how many were internal.
    move_stats : (6,) int64
        Proposed/accepted counts for grow, prune and change.
    """
    np.random.seed(seed)
    p, n = Xt.shape
    cap = 2 ** (max_depth + 1) - 1
    max_leaves = 2 ** max_depth
    state = np.zeros((n_trees, cap), dtype=np.int8)
    var = np.full((n_trees, cap), -1, dtype=np.int64)
    cut = np.zeros((n_trees, cap))
    mu = np.zeros((n_trees, cap))
    leaves = np.zeros((n_trees, max_leaves + 1), dtype=np.int64)
    nleaf = np.ones(n_trees, dtype=np.int64)
    leaf_of = np.zeros((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        state[t, 0] = LEAF

    split_count = np.zeros(p, dtype=np.int64)
    f = np.zeros(n)
    r = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    valid_buf = np.empty(p, dtype=np.int64)
    leaf_cnt = np.zeros(cap, dtype=np.int64)
    leaf_sum = np.zeros(cap)

    counts = np.zeros((n_keep, p), dtype=np.int64)
    sigma2_draws = np.empty(n_keep)
    depth_table = np.zeros((max_depth + 1, 2), dtype=np.int64)
    stats = np.zeros(6, dtype=np.int64)

    sigma2 = sigma2_init
    tau2 = tau * tau
    p_change = 1.0 - p_grow - p_prune
    total_iter = n_burn + n_keep * thin
    kept = 0
    for it in range(total_iter):
        if not freeze_trees:
            for t in range(n_trees):
                lt = leaf_of[t]
                mt = mu[t]
                for i in range(n):
                    r[i] = y[i] - f[i] + mt[lt[i]]
                if nleaf[t] == 1:
                    _grow(t, Xt, r, state, var, cut, leaves, nleaf, leaf_of, split_count,
                          idx, vals, valid_buf, sigma2, tau2, alpha, beta, max_depth,
                          p_grow, p_prune, stats)
                else:
                    u = np.random.random()
                    if u < p_grow:
                        _grow(t, Xt, r, state, var, cut, leaves, nleaf, leaf_of,
                              split_count, idx, vals, valid_buf, sigma2, tau2, alpha,
                              beta, max_depth, p_grow, p_prune, stats)
                    elif u < p_grow + p_prune:
                        _prune(t, r, state, var, leaves, nleaf, leaf_of, split_count,
                               sigma2, tau2, alpha, beta, max_depth, p_grow, p_prune,
                               stats)
                    elif p_change > 0.0:
                        _change(t, Xt, r, state, var, cut, leaves, nleaf, leaf_of,
                                split_count, idx, vals, valid_buf, sigma2, tau2, stats)
                # leaf values from their normal full conditionals
                nl = nleaf[t]
                for j in range(nl):
                    node = leaves[t, j]
                    leaf_cnt[node] = 0
                    leaf_sum[node] = 0.0
                for i in range(n):
                    leaf_cnt[lt[i]] += 1
                    leaf_sum[lt[i]] += r[i]
                for j in range(nl):
                    node = leaves[t, j]
                    denom = sigma2 + leaf_cnt[node] * tau2
                    mean = tau2 * leaf_sum[node] / denom
                    sd = math.sqrt(sigma2 * tau2 / denom)
                    mt[node] = mean + sd * np.random.standard_normal()
                for i in range(n):
                    f[i] = y[i] - r[i] + mt[lt[i]]
        if not fix_sigma2:
            sse = 0.0
            for i in range(n):
                e = y[i] - f[i]
                sse += e * e
            sigma2 = (nu * lam + sse) / np.random.chisquare(nu + n)
        if it >= n_burn and (it - n_burn) % thin == 0:
            for j in range(p):
                counts[kept, j] = split_count[j]
            sigma2_draws[kept] = sigma2
            for t in range(n_trees if record_depths else 0):
                for node in range(cap):
                    s = state[t, node]
                    if s != UNUSED:
                        d = _depth(node)
                        depth_table[d, 0] += 1
                        if s == INTERNAL:
                            depth_table[d, 1] += 1
            kept += 1
    return counts, sigma2_draws, depth_table, stats
