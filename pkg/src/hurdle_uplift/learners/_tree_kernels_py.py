"""Pure numpy fallback for the compiled tree kernels.

Accumulations follow the same sequential order as the compiled loops so that
split decisions (and therefore fitted trees) agree exactly between backends.
"""

import numpy as np


def find_best_splits(
    xs_sorted,
    order,
    node_of,
    g,
    h,
    w,
    g_tot,
    h_tot,
    w_tot,
    min_leaf_weight,
    best_gain,
    best_feat,
    best_thr,
):
    n_nodes = g_tot.shape[0]
    pscore = np.zeros(n_nodes)
    pos = h_tot > 0.0
    pscore[pos] = g_tot[pos] * g_tot[pos] / h_tot[pos]

    for f in range(xs_sorted.shape[0]):
        rows = order[f]
        nodes = node_of[rows]
        active = nodes >= 0
        rows = rows[active]
        nodes = nodes[active]
        xv = xs_sorted[f][active]
        # stable grouping by node keeps the value order inside each node
        grp = np.argsort(nodes, kind="stable")
        rows = rows[grp]
        nodes = nodes[grp]
        xv = xv[grp]
        bounds = np.flatnonzero(np.diff(nodes)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [nodes.shape[0]]))
        for s, e in zip(starts, ends):
            if e - s < 2:
                continue
            nd = nodes[s]
            r = rows[s:e]
            x = xv[s:e]
            # left sums before position k+1 are cumulative sums through k
            GL = np.cumsum(g[r])[:-1]
            HL = np.cumsum(h[r])[:-1]
            WL = np.cumsum(w[r])[:-1]
            cand = x[1:] > x[:-1]
            WR = w_tot[nd] - WL
            HR = h_tot[nd] - HL
            ok = cand & (WL >= min_leaf_weight) & (WR >= min_leaf_weight) & (HL > 0.0) & (HR > 0.0)
            if not ok.any():
                continue
            idx = np.flatnonzero(ok)
            gl = GL[idx]
            hl = HL[idx]
            hr = HR[idx]
            gr = g_tot[nd] - gl
            gain = gl * gl / hl + gr * gr / hr - pscore[nd]
            j = int(np.argmax(gain))
            best = gain[j]
            k = idx[j] if best > best_gain[nd] else -1
            if k >= 0:
                lo, hi = x[k], x[k + 1]
                thr = 0.5 * (lo + hi)
                if thr >= hi:
                    thr = lo
                best_gain[nd] = best
                best_feat[nd] = f
                best_thr[nd] = thr


def apply_splits(X, node_of, split_feat, split_thr, left_child, right_child):
    active = np.flatnonzero(node_of >= 0)
    nd = node_of[active]
    f = split_feat[nd]
    leaf = f < 0
    node_of[active[leaf]] = -1
    act = active[~leaf]
    nd = nd[~leaf]
    go_left = X[act, f[~leaf]] <= split_thr[nd]
    node_of[act] = np.where(go_left, left_child[nd], right_child[nd])


def predict_margin(
    X, feature, threshold, left, right, value, tree_start, base_score, learning_rate, checkpoints
):
    n = X.shape[0]
    out = np.empty((len(checkpoints), n))
    acc = np.zeros(n)
    rows = np.arange(n)
    c = 0
    while c < len(checkpoints) and checkpoints[c] == 0:
        out[c] = base_score
        c += 1
    n_needed = int(max(checkpoints)) if len(checkpoints) else 0
    for t in range(n_needed):
        start = tree_start[t]
        node = np.zeros(n, dtype=np.intp)
        live = feature[start + node] >= 0
        while live.any():
            r = rows[live]
            nd = start + node[r]
            go_left = X[r, feature[nd]] <= threshold[nd]
            node[r] = np.where(go_left, left[nd], right[nd])
            live = feature[start + node] >= 0
        acc = acc + value[start + node]
        while c < len(checkpoints) and checkpoints[c] == t + 1:
            out[c] = base_score + learning_rate * acc
            c += 1
    return out


class SplitFinder:
    """Numpy counterpart of the compiled split finder (same protocol)."""

    def __init__(self, X, order, xs_sorted, min_leaf_weight):
        self.X = X
        self.order = order
        self.xs_sorted = xs_sorted
        self.min_leaf_weight = float(min_leaf_weight)
        self.node_of = np.zeros(X.shape[0], dtype=np.intp)

    def start_tree(self, g, h, w):
        self.g, self.h, self.w = g, h, w
        self.node_of[:] = 0

    def find_best(self, g_tot, h_tot, w_tot, best_gain, best_feat, best_thr):
        find_best_splits(
            self.xs_sorted, self.order, self.node_of, self.g, self.h, self.w,
            g_tot, h_tot, w_tot, self.min_leaf_weight, best_gain, best_feat, best_thr,
        )

    def apply(self, split_feat, split_thr, left_child, right_child, n_children, partition=True):
        apply_splits(self.X, self.node_of, split_feat, split_thr, left_child, right_child)
