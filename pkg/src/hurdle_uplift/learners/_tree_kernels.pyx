# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for exact-greedy tree growth and ensemble prediction.

Each feature's presorted row list is kept partitioned into contiguous
per-node segments; a split rewrites the lists with a stable partition, so
inside every node rows are always visited in presorted order. The numpy twin
in ``_tree_kernels_py`` visits rows in the same order and performs the same
floating point operations, so both backends grow identical trees.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

# Division-free screen, loosened by a relative slack far above rounding error
# so it never rejects a split the exact gain would accept. The decision is
# therefore the first strict argmax of the exact gain.
cdef double SCREEN_SLACK = 1.0 + 1e-12


cdef struct RowStat:
    double g
    double h
    double w


cdef class SplitFinder:
    """Per-fit split search state over presorted features.

    Usage per tree: ``start_tree(g, h, w)``, then alternate ``find_best`` and
    ``apply`` level by level. ``node_of`` maps each row to its node index at
    the current level (-1 once the row sits in a finished leaf).
    """

    cdef const double[:, ::1] X
    cdef const cnp.intp_t[:, ::1] order0
    cdef const double[:, ::1] xs0
    cdef cnp.intp_t[:, ::1] ord_a
    cdef double[:, ::1] xs_a
    cdef cnp.intp_t[:, ::1] ord_b
    cdef double[:, ::1] xs_b
    cdef int level
    cdef double min_leaf_weight
    cdef object rows_arr
    cdef RowStat* rows
    cdef public object node_of
    cdef cnp.intp_t[::1] node_view
    cdef object seg_start_arr
    cdef cnp.intp_t[::1] seg_start
    cdef Py_ssize_t n_nodes

    def __init__(self, X, order, xs_sorted, double min_leaf_weight):
        self.X = X
        self.order0 = order
        self.xs0 = xs_sorted
        p, n = xs_sorted.shape[0], xs_sorted.shape[1]
        self.ord_a = np.empty((p, n), dtype=np.intp)
        self.xs_a = np.empty((p, n), dtype=np.float64)
        self.ord_b = np.empty((p, n), dtype=np.intp)
        self.xs_b = np.empty((p, n), dtype=np.float64)
        self.min_leaf_weight = min_leaf_weight
        self.rows_arr = np.empty(n * 3, dtype=np.float64)
        self.rows = <RowStat*> cnp.PyArray_DATA(self.rows_arr)
        self.node_of = np.zeros(n, dtype=np.intp)
        self.node_view = self.node_of

    def start_tree(self, const double[::1] g, const double[::1] h, const double[::1] w):
        cdef Py_ssize_t i, n = g.shape[0]
        for i in range(n):
            self.rows[i].g = g[i]
            self.rows[i].h = h[i]
            self.rows[i].w = w[i]
            self.node_view[i] = 0
        self.level = 0
        self.n_nodes = 1
        self.seg_start_arr = np.array([0, n], dtype=np.intp)
        self.seg_start = self.seg_start_arr

    def find_best(
        self,
        const double[::1] g_tot,
        const double[::1] h_tot,
        const double[::1] w_tot,
        double[::1] best_gain,
        cnp.intp_t[::1] best_feat,
        double[::1] best_thr,
    ):
        """Best split per current node; ``best_gain`` carries the minimum gain in."""
        cdef const cnp.intp_t[:, ::1] ordv
        cdef const double[:, ::1] xsv
        if self.level == 0:
            ordv = self.order0
            xsv = self.xs0
        elif self.level % 2 == 1:
            ordv = self.ord_a
            xsv = self.xs_a
        else:
            ordv = self.ord_b
            xsv = self.xs_b
        cdef Py_ssize_t p = xsv.shape[0]
        cdef Py_ssize_t f, k, nd, i, lo, hi, best_f
        cdef double x, last, gl, hl, wl, gr, hr, wr, gain, thr
        cdef double gt, ht, wt, ps, best, best_t
        cdef double mlw = self.min_leaf_weight
        cdef const cnp.intp_t* op
        cdef const double* xp
        cdef RowStat* rs = self.rows
        with nogil:
            for nd in range(self.n_nodes):
                lo = self.seg_start[nd]
                hi = self.seg_start[nd + 1]
                if hi - lo < 2:
                    continue
                gt = g_tot[nd]
                ht = h_tot[nd]
                wt = w_tot[nd]
                ps = gt * gt / ht if ht > 0.0 else 0.0
                best = best_gain[nd]
                best_f = best_feat[nd]
                best_t = best_thr[nd]
                for f in range(p):
                    op = &ordv[f, 0]
                    xp = &xsv[f, 0]
                    i = op[lo]
                    gl = rs[i].g
                    hl = rs[i].h
                    wl = rs[i].w
                    last = xp[lo]
                    for k in range(lo + 1, hi):
                        x = xp[k]
                        if x > last:
                            wr = wt - wl
                            hr = ht - hl
                            if wl >= mlw and wr >= mlw and hl > 0.0 and hr > 0.0:
                                gr = gt - gl
                                if (gl * gl * hr + gr * gr * hl) * SCREEN_SLACK > (best + ps) * (hl * hr):
                                    gain = gl * gl / hl + gr * gr / hr - ps
                                    if gain > best:
                                        thr = 0.5 * (last + x)
                                        if thr >= x:
                                            thr = last
                                        best = gain
                                        best_f = f
                                        best_t = thr
                        i = op[k]
                        gl = gl + rs[i].g
                        hl = hl + rs[i].h
                        wl = wl + rs[i].w
                        last = x
                best_gain[nd] = best
                best_feat[nd] = best_f
                best_thr[nd] = best_t

    def apply(
        self,
        const cnp.intp_t[::1] split_feat,
        const double[::1] split_thr,
        const cnp.intp_t[::1] left_child,
        const cnp.intp_t[::1] right_child,
        Py_ssize_t n_children,
        bint partition=True,
    ):
        """Route rows to children and stably partition the feature lists.

        Children of one parent must be numbered consecutively (left, right) in
        parent order. With ``partition=False`` only ``node_of`` is updated.
        """
        cdef Py_ssize_t n = self.X.shape[0]
        cdef Py_ssize_t p = self.xs0.shape[0]
        cdef Py_ssize_t i, nd, f, k, c, lo, hi, pl, pr, lc, isl
        cdef cnp.intp_t[::1] node = self.node_view
        counts_arr = np.zeros(n_children + 1, dtype=np.intp)
        cdef cnp.intp_t[::1] counts = counts_arr
        with nogil:
            for i in range(n):
                nd = node[i]
                if nd < 0:
                    continue
                f = split_feat[nd]
                if f < 0:
                    node[i] = -1
                    continue
                if self.X[i, f] <= split_thr[nd]:
                    c = left_child[nd]
                else:
                    c = right_child[nd]
                node[i] = c
                counts[c + 1] += 1
        starts_arr = np.cumsum(counts_arr).astype(np.intp)
        cdef cnp.intp_t[::1] starts = starts_arr
        if not partition:
            self.n_nodes = 0
            self.level += 1
            return

        cdef const cnp.intp_t[:, ::1] src_o
        cdef const double[:, ::1] src_x
        cdef cnp.intp_t[:, ::1] dst_o
        cdef double[:, ::1] dst_x
        if self.level == 0:
            src_o = self.order0
            src_x = self.xs0
            dst_o = self.ord_a
            dst_x = self.xs_a
        elif self.level % 2 == 1:
            src_o = self.ord_a
            src_x = self.xs_a
            dst_o = self.ord_b
            dst_x = self.xs_b
        else:
            src_o = self.ord_b
            src_x = self.xs_b
            dst_o = self.ord_a
            dst_x = self.xs_a
        cdef const cnp.intp_t* so
        cdef const double* sx
        cdef cnp.intp_t* do
        cdef double* dx
        with nogil:
            for nd in range(self.n_nodes):
                if split_feat[nd] < 0:
                    continue
                lo = self.seg_start[nd]
                hi = self.seg_start[nd + 1]
                lc = left_child[nd]
                for f in range(p):
                    so = &src_o[f, 0]
                    sx = &src_x[f, 0]
                    do = &dst_o[f, 0]
                    dx = &dst_x[f, 0]
                    pl = starts[lc]
                    pr = starts[right_child[nd]]
                    # branchless stable two-way partition
                    for k in range(lo, hi):
                        i = so[k]
                        isl = node[i] == lc
                        c = pl if isl else pr
                        do[c] = i
                        dx[c] = sx[k]
                        pl += isl
                        pr += 1 - isl
        self.seg_start_arr = starts_arr
        self.seg_start = starts_arr
        self.n_nodes = n_children
        self.level += 1


def predict_margin(
    const double[:, ::1] X,
    const cnp.intp_t[::1] feature,
    const double[::1] threshold,
    const cnp.intp_t[::1] left,
    const cnp.intp_t[::1] right,
    const double[::1] value,
    const cnp.intp_t[::1] tree_start,
    double base_score,
    double learning_rate,
    const cnp.intp_t[::1] checkpoints,
):
    """Ensemble margins after each tree count listed in ``checkpoints``.

    Node indices inside a tree are relative to that tree's ``tree_start``.
    Returns an array of shape (len(checkpoints), n_rows).
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_ck = checkpoints.shape[0]
    cdef Py_ssize_t i, t, c, node, start, n_trees_needed
    cdef double acc
    out_arr = np.empty((n_ck, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    n_trees_needed = 0
    for c in range(n_ck):
        if checkpoints[c] > n_trees_needed:
            n_trees_needed = checkpoints[c]
    with nogil:
        for i in range(n):
            acc = 0.0
            c = 0
            while c < n_ck and checkpoints[c] == 0:
                out[c, i] = base_score
                c += 1
            for t in range(n_trees_needed):
                start = tree_start[t]
                node = 0
                while feature[start + node] >= 0:
                    if X[i, feature[start + node]] <= threshold[start + node]:
                        node = left[start + node]
                    else:
                        node = right[start + node]
                acc = acc + value[start + node]
                while c < n_ck and checkpoints[c] == t + 1:
                    out[c, i] = base_score + learning_rate * acc
                    c += 1
    return out_arr
