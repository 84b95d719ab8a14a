"""Numba kernels for tree growing and batch prediction.

Both tree learners work on pre-binned numeric columns (uint8) and
integer-coded categorical columns (int32). Categorical splits order the
node-local categories by target rate (forest) or by gradient statistics
(booster) and scan contiguous prefixes of that order.

All kernels are single-threaded and branch-deterministic, so identical
inputs and seeds reproduce identical trees bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = np.int32(-1)
EPS_GAIN = 1e-12


@njit(cache=True, inline="always")
def _rand_step(state):
    state ^= state >> np.uint64(12)
    state ^= state << np.uint64(25)
    state ^= state >> np.uint64(27)
    return state, state * np.uint64(2685821657736338717)


@njit(cache=True, inline="always")
def _seed_state(seed):
    state = np.uint64(seed) ^ np.uint64(0x9E3779B97F4A7C15)
    if state == np.uint64(0):
        state = np.uint64(88172645463325252)
    return state


@njit(cache=True)
def grow_tree_gini(
    Xb,            # (n, d_num) uint8 binned numeric columns
    Xc,            # (n, d_cat) int32 category codes
    y,             # (n,) uint8 labels
    rows,          # (m,) int32 bootstrap sample (row indices, repeats allowed)
    nbins,         # (d_num,) int32 bins per numeric feature
    cat_counts,    # (d_cat,) int32 categories per categorical feature
    max_depth,
    min_leaf,
    k_features,
    seed,
    node_feature,  # out arrays, preallocated to max_nodes
    node_thr_bin,
    node_left,
    node_right,
    node_value,
    node_majority_left,
    node_cat_off,
    node_cat_len,
    cat_buf,       # int32 bump buffer of left-going category codes
    feat_gain,     # (d_num + d_cat,) float64 split-gain accumulator
):
    """Grow one classification tree; returns (n_nodes, cat_used) or (-1, -1)
    on node overflow and (-2, -2) on category-buffer overflow."""
    n_num = Xb.shape[1]
    n_cat = Xc.shape[1]
    d = n_num + n_cat
    m = rows.shape[0]
    max_nodes = node_feature.shape[0]

    perm = rows.copy()
    tmp = np.empty(m, dtype=np.int32)
    hist = np.zeros((2, 256), dtype=np.int64)
    kmax = 1
    for c in range(n_cat):
        if cat_counts[c] > kmax:
            kmax = cat_counts[c]
    cat_cnt = np.zeros((2, kmax), dtype=np.int64)
    cat_rate = np.empty(kmax, dtype=np.float64)
    cat_present = np.empty(kmax, dtype=np.int32)
    cat_go_left = np.zeros(kmax, dtype=np.uint8)
    best_cat_prefix = np.empty(kmax, dtype=np.int32)
    feat_pool = np.empty(d, dtype=np.int32)

    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_start = np.empty(max_nodes, dtype=np.int64)
    stack_end = np.empty(max_nodes, dtype=np.int64)
    stack_depth = np.empty(max_nodes, dtype=np.int64)

    state = _seed_state(seed)
    n_nodes = 1
    cat_ptr = 0
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        n_node = end - start

        count1 = 0
        for i in range(start, end):
            count1 += y[perm[i]]
        count0 = n_node - count1

        node_feature[node] = LEAF
        node_value[node] = count1 / n_node
        node_cat_len[node] = 0

        if (
            depth >= max_depth
            or n_node < 2 * min_leaf
            or count1 == 0
            or count0 == 0
        ):
            continue

        parent_score = (count0 * count1) / n_node
        best_gain = 0.0
        best_feature = -1
        best_bin = -1
        best_cat_n = 0
        best_left_count = 0

        for i in range(d):
            feat_pool[i] = i
        k = k_features if k_features < d else d
        for pick in range(k):
            state, r = _rand_step(state)
            j = pick + np.int64(r % np.uint64(d - pick))
            f = feat_pool[j]
            feat_pool[j] = feat_pool[pick]
            feat_pool[pick] = f

            if f < n_num:
                nb = nbins[f]
                for b in range(nb):
                    hist[0, b] = 0
                    hist[1, b] = 0
                for i in range(start, end):
                    row = perm[i]
                    hist[y[row], Xb[row, f]] += 1
                l0 = 0
                l1 = 0
                for b in range(nb - 1):
                    l0 += hist[0, b]
                    l1 += hist[1, b]
                    nl = l0 + l1
                    nr = n_node - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    r0 = count0 - l0
                    r1 = count1 - l1
                    child = (l0 * l1) / nl + (r0 * r1) / nr
                    gain = parent_score - child
                    if gain > best_gain + EPS_GAIN:
                        best_gain = gain
                        best_feature = f
                        best_bin = b
                        best_cat_n = 0
                        best_left_count = nl
            else:
                cf = f - n_num
                kc = cat_counts[cf]
                for c in range(kc):
                    cat_cnt[0, c] = 0
                    cat_cnt[1, c] = 0
                for i in range(start, end):
                    row = perm[i]
                    cat_cnt[y[row], Xc[row, cf]] += 1
                kp = 0
                for c in range(kc):
                    tot = cat_cnt[0, c] + cat_cnt[1, c]
                    if tot > 0:
                        cat_present[kp] = c
                        cat_rate[kp] = cat_cnt[1, c] / tot
                        kp += 1
                if kp < 2:
                    continue
                order = np.argsort(cat_rate[:kp], kind="mergesort")
                l0 = 0
                l1 = 0
                for p in range(kp - 1):
                    c = cat_present[order[p]]
                    l0 += cat_cnt[0, c]
                    l1 += cat_cnt[1, c]
                    nl = l0 + l1
                    nr = n_node - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    r0 = count0 - l0
                    r1 = count1 - l1
                    child = (l0 * l1) / nl + (r0 * r1) / nr
                    gain = parent_score - child
                    if gain > best_gain + EPS_GAIN:
                        best_gain = gain
                        best_feature = f
                        best_bin = -1
                        best_cat_n = p + 1
                        for q in range(p + 1):
                            best_cat_prefix[q] = cat_present[order[q]]
                        best_left_count = nl

        if best_feature < 0:
            continue

        if n_nodes + 2 > max_nodes:
            return -1, -1

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2

        if best_feature < n_num:
            f = best_feature
            w = 0
            for i in range(start, end):
                row = perm[i]
                if Xb[row, f] <= best_bin:
                    tmp[w] = row
                    w += 1
            w2 = w
            for i in range(start, end):
                row = perm[i]
                if Xb[row, f] > best_bin:
                    tmp[w2] = row
                    w2 += 1
            node_thr_bin[node] = best_bin
            node_cat_len[node] = 0
            node_cat_off[node] = 0
        else:
            cf = best_feature - n_num
            kc = cat_counts[cf]
            if cat_ptr + best_cat_n > cat_buf.shape[0]:
                return -2, -2
            for c in range(kc):
                cat_go_left[c] = 0
            for q in range(best_cat_n):
                cat_go_left[best_cat_prefix[q]] = 1
                cat_buf[cat_ptr + q] = best_cat_prefix[q]
            node_cat_off[node] = cat_ptr
            node_cat_len[node] = best_cat_n
            cat_ptr += best_cat_n
            node_thr_bin[node] = -1
            w = 0
            for i in range(start, end):
                row = perm[i]
                if cat_go_left[Xc[row, cf]] == 1:
                    tmp[w] = row
                    w += 1
            w2 = w
            for i in range(start, end):
                row = perm[i]
                if cat_go_left[Xc[row, cf]] == 0:
                    tmp[w2] = row
                    w2 += 1

        for i in range(start, end):
            perm[i] = tmp[i - start]

        node_feature[node] = best_feature
        node_left[node] = left_id
        node_right[node] = right_id
        node_majority_left[node] = 1 if best_left_count >= n_node - best_left_count else 0
        feat_gain[best_feature] += best_gain

        mid = start + best_left_count
        stack_node[top] = left_id
        stack_start[top] = start
        stack_end[top] = mid
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = right_id
        stack_start[top] = mid
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1

    return n_nodes, cat_ptr


@njit(cache=True)
def grow_tree_newton(
    Xb,
    Xc,
    grad,        # (n,) float64
    hess,        # (n,) float64
    nbins,
    cat_counts,
    max_leaves,
    min_leaf,
    l2,
    node_feature,
    node_thr_bin,
    node_left,
    node_right,
    node_value,
    node_majority_left,
    node_cat_off,
    node_cat_len,
    cat_buf,
    feat_gain,
    out_pred,    # (n,) float64; leaf value written per training row
):
    """Grow one Newton-step regression tree leaf-wise (best-first).

    Returns (n_nodes, cat_used), or (-2, -2) on category-buffer overflow.
    Leaf values are raw Newton steps -G/(H+l2); the learning rate is applied
    by the caller.
    """
    n = Xb.shape[0]
    n_num = Xb.shape[1]
    n_cat = Xc.shape[1]
    d = n_num + n_cat
    max_nodes = 2 * max_leaves  # at most 2*max_leaves - 1 nodes

    perm = np.empty(n, dtype=np.int32)
    for i in range(n):
        perm[i] = i
    tmp = np.empty(n, dtype=np.int32)

    hist_g = np.zeros(256, dtype=np.float64)
    hist_h = np.zeros(256, dtype=np.float64)
    hist_c = np.zeros(256, dtype=np.int64)
    kmax = 1
    for c in range(n_cat):
        if cat_counts[c] > kmax:
            kmax = cat_counts[c]
    cat_g = np.zeros(kmax, dtype=np.float64)
    cat_h = np.zeros(kmax, dtype=np.float64)
    cat_c = np.zeros(kmax, dtype=np.int64)
    cat_key = np.empty(kmax, dtype=np.float64)
    cat_present = np.empty(kmax, dtype=np.int32)
    cat_go_left = np.zeros(kmax, dtype=np.uint8)

    node_start = np.empty(max_nodes, dtype=np.int64)
    node_end = np.empty(max_nodes, dtype=np.int64)
    node_g = np.empty(max_nodes, dtype=np.float64)
    node_h = np.empty(max_nodes, dtype=np.float64)
    cand_gain = np.full(max_nodes, -1.0, dtype=np.float64)
    cand_feature = np.full(max_nodes, -1, dtype=np.int64)
    cand_bin = np.empty(max_nodes, dtype=np.int64)
    cand_left_count = np.empty(max_nodes, dtype=np.int64)
    cand_cat_n = np.zeros(max_nodes, dtype=np.int64)
    cand_cat_codes = np.empty((max_nodes, kmax), dtype=np.int32)
    is_leaf = np.zeros(max_nodes, dtype=np.uint8)

    g_total = 0.0
    h_total = 0.0
    for i in range(n):
        g_total += grad[i]
        h_total += hess[i]
    node_start[0] = 0
    node_end[0] = n
    node_g[0] = g_total
    node_h[0] = h_total
    is_leaf[0] = 1
    n_nodes = 1
    cat_ptr = 0

    # Split evaluation is driven by a small work queue: the root first, then
    # the two children of whichever leaf was just split.
    eval_queue = np.empty(max_nodes, dtype=np.int64)
    eval_queue[0] = 0
    n_eval = 1

    n_leaves = 1
    while True:
        # Process pending split evaluations.
        for qi in range(n_eval):
            node = eval_queue[qi]
            start = node_start[node]
            end = node_end[node]
            n_node = end - start
            g_node = node_g[node]
            h_node = node_h[node]
            parent = (g_node * g_node) / (h_node + l2)
            best_gain = 0.0
            best_feature = -1
            best_bin = -1
            best_cat_n = 0
            best_left_count = 0
            if n_node >= 2 * min_leaf:
                for f in range(d):
                    if f < n_num:
                        nb = nbins[f]
                        for b in range(nb):
                            hist_g[b] = 0.0
                            hist_h[b] = 0.0
                            hist_c[b] = 0
                        for i in range(start, end):
                            row = perm[i]
                            b = Xb[row, f]
                            hist_g[b] += grad[row]
                            hist_h[b] += hess[row]
                            hist_c[b] += 1
                        gl = 0.0
                        hl = 0.0
                        cl = 0
                        for b in range(nb - 1):
                            gl += hist_g[b]
                            hl += hist_h[b]
                            cl += hist_c[b]
                            cr = n_node - cl
                            if cl < min_leaf or cr < min_leaf:
                                continue
                            gr = g_node - gl
                            hr = h_node - hl
                            gain = (
                                (gl * gl) / (hl + l2)
                                + (gr * gr) / (hr + l2)
                                - parent
                            )
                            if gain > best_gain + EPS_GAIN:
                                best_gain = gain
                                best_feature = f
                                best_bin = b
                                best_cat_n = 0
                                best_left_count = cl
                    else:
                        cf = f - n_num
                        kc = cat_counts[cf]
                        for c in range(kc):
                            cat_g[c] = 0.0
                            cat_h[c] = 0.0
                            cat_c[c] = 0
                        for i in range(start, end):
                            row = perm[i]
                            c = Xc[row, cf]
                            cat_g[c] += grad[row]
                            cat_h[c] += hess[row]
                            cat_c[c] += 1
                        kp = 0
                        for c in range(kc):
                            if cat_c[c] > 0:
                                cat_present[kp] = c
                                cat_key[kp] = cat_g[c] / (cat_h[c] + 1.0)
                                kp += 1
                        if kp < 2:
                            continue
                        order = np.argsort(cat_key[:kp], kind="mergesort")
                        gl = 0.0
                        hl = 0.0
                        cl = 0
                        for p in range(kp - 1):
                            c = cat_present[order[p]]
                            gl += cat_g[c]
                            hl += cat_h[c]
                            cl += cat_c[c]
                            cr = n_node - cl
                            if cl < min_leaf or cr < min_leaf:
                                continue
                            gr = g_node - gl
                            hr = h_node - hl
                            gain = (
                                (gl * gl) / (hl + l2)
                                + (gr * gr) / (hr + l2)
                                - parent
                            )
                            if gain > best_gain + EPS_GAIN:
                                best_gain = gain
                                best_feature = f
                                best_bin = -1
                                best_cat_n = p + 1
                                for q in range(p + 1):
                                    cand_cat_codes[node, q] = cat_present[order[q]]
                                best_left_count = cl
            cand_gain[node] = best_gain if best_feature >= 0 else -1.0
            cand_feature[node] = best_feature
            cand_bin[node] = best_bin
            cand_cat_n[node] = best_cat_n
            cand_left_count[node] = best_left_count
        n_eval = 0

        if n_leaves >= max_leaves:
            break
        best_node = -1
        best_gain = EPS_GAIN
        for node in range(n_nodes):
            if is_leaf[node] == 1 and cand_gain[node] > best_gain:
                best_gain = cand_gain[node]
                best_node = node
        if best_node < 0:
            break

        node = best_node
        start = node_start[node]
        end = node_end[node]
        n_node = end - start
        f = cand_feature[node]

        if f < n_num:
            b = cand_bin[node]
            w = 0
            for i in range(start, end):
                row = perm[i]
                if Xb[row, f] <= b:
                    tmp[w] = row
                    w += 1
            w2 = w
            for i in range(start, end):
                row = perm[i]
                if Xb[row, f] > b:
                    tmp[w2] = row
                    w2 += 1
            node_thr_bin[node] = b
            node_cat_len[node] = 0
            node_cat_off[node] = 0
        else:
            cf = f - n_num
            kc = cat_counts[cf]
            ncat = cand_cat_n[node]
            if cat_ptr + ncat > cat_buf.shape[0]:
                return -2, -2
            for c in range(kc):
                cat_go_left[c] = 0
            for q in range(ncat):
                code = cand_cat_codes[node, q]
                cat_go_left[code] = 1
                cat_buf[cat_ptr + q] = code
            node_cat_off[node] = cat_ptr
            node_cat_len[node] = ncat
            cat_ptr += ncat
            node_thr_bin[node] = -1
            w = 0
            for i in range(start, end):
                row = perm[i]
                if cat_go_left[Xc[row, cf]] == 1:
                    tmp[w] = row
                    w += 1
            w2 = w
            for i in range(start, end):
                row = perm[i]
                if cat_go_left[Xc[row, cf]] == 0:
                    tmp[w2] = row
                    w2 += 1

        for i in range(start, end):
            perm[i] = tmp[i - start]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        mid = start + cand_left_count[node]

        gl = 0.0
        hl = 0.0
        for i in range(start, mid):
            row = perm[i]
            gl += grad[row]
            hl += hess[row]
        node_start[left_id] = start
        node_end[left_id] = mid
        node_g[left_id] = gl
        node_h[left_id] = hl
        node_start[right_id] = mid
        node_end[right_id] = end
        node_g[right_id] = node_g[node] - gl
        node_h[right_id] = node_h[node] - hl

        node_feature[node] = f
        node_left[node] = left_id
        node_right[node] = right_id
        node_majority_left[node] = (
            1 if cand_left_count[node] >= n_node - cand_left_count[node] else 0
        )
        feat_gain[f] += cand_gain[node]
        is_leaf[node] = 0
        is_leaf[left_id] = 1
        is_leaf[right_id] = 1
        eval_queue[0] = left_id
        eval_queue[1] = right_id
        n_eval = 2
        n_leaves += 1

    for node in range(n_nodes):
        if is_leaf[node] == 1:
            node_feature[node] = LEAF
            value = -node_g[node] / (node_h[node] + l2)
            node_value[node] = value
            node_cat_len[node] = 0
            for i in range(node_start[node], node_end[node]):
                out_pred[perm[i]] = value
    return n_nodes, cat_ptr


@njit(cache=True)
def accumulate_leaf_values(
    Xnum,         # (n, d_num) float64, already standardized
    Xcat,         # (n, d_cat) int32, unseen encoded as cat_counts[cf]
    tree_off,     # (n_trees + 1,) int64 node offsets per tree
    feature,      # flattened node arrays (global child indices)
    threshold,
    left,
    right,
    value,
    majority_left,
    cat_off,      # into mask pool
    cat_len,      # mask length (category count of the split feature)
    mask,         # uint8 pool, 1 = go left
    d_num,
    out,          # (n,) float64 summed leaf values
):
    n = Xnum.shape[0]
    n_trees = tree_off.shape[0] - 1
    for i in range(n):
        total = 0.0
        for t in range(n_trees):
            node = tree_off[t]
            while feature[node] >= 0:
                f = feature[node]
                if f < d_num:
                    if Xnum[i, f] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                else:
                    code = Xcat[i, f - d_num]
                    if code >= cat_len[node]:
                        node = left[node] if majority_left[node] == 1 else right[node]
                    elif mask[cat_off[node] + code] == 1:
                        node = left[node]
                    else:
                        node = right[node]
            total += value[node]
        out[i] = total
