"""Bounded revised simplex kernel, compiled with numba.

Solves  max c'x  s.t.  A x = b,  l <= x <= u  where A is handed over in CSC
form and already contains slack (and, during phase one, artificial) columns.
The caller supplies the starting basis; feasibility of that basis is the
caller's problem (phase-one orchestration lives in ``mip``).

The basis inverse is kept in product form: a file of eta vectors grown by one
per pivot and compacted by refactorisation from the identity every
``refactor_every`` pivots.  Pricing is Dantzig-in-section partial pricing
with a rotating start section; after a run of degenerate pivots the kernel
drops to Bland's rule, which guarantees termination.
"""

from __future__ import annotations

import numpy as np
from numba import njit

KERNEL_OPTIMAL = 0
KERNEL_UNBOUNDED = 2
KERNEL_ITER_LIMIT = 3
KERNEL_SINGULAR = 4

_INF = np.inf


@njit(cache=True)
def _apply_etas(n_eta, eta_row, eta_start, eta_idx, eta_val, z):
    # z <- E_k^-1 ... E_1^-1 z, oldest eta first
    for t in range(n_eta):
        r = eta_row[t]
        zr = z[r]
        if zr != 0.0:
            for k in range(eta_start[t], eta_start[t + 1]):
                i = eta_idx[k]
                if i == r:
                    z[i] = eta_val[k] * zr
                else:
                    z[i] += eta_val[k] * zr


@njit(cache=True)
def _apply_etas_transposed(n_eta, eta_row, eta_start, eta_idx, eta_val, y):
    # y <- E_1^-T ... E_k^-T y, newest eta first; only component r changes
    for t in range(n_eta - 1, -1, -1):
        r = eta_row[t]
        s = 0.0
        for k in range(eta_start[t], eta_start[t + 1]):
            s += eta_val[k] * y[eta_idx[k]]
        y[r] = s


@njit(cache=True)
def _compute_basic_values(m, n_total, indptr, indices, data, lb, ub, b, vstat,
                          n_eta, eta_row, eta_start, eta_idx, eta_val, out):
    # out <- B^-1 (b - A_N x_N)
    for i in range(m):
        out[i] = b[i]
    for j in range(n_total):
        st = vstat[j]
        if st != 2:
            xj = ub[j] if st == 1 else lb[j]
            if xj != 0.0:
                for k in range(indptr[j], indptr[j + 1]):
                    out[indices[k]] -= data[k] * xj
    _apply_etas(n_eta, eta_row, eta_start, eta_idx, eta_val, out)


@njit(cache=True)
def simplex_kernel(m, n_total, indptr, indices, data, c, lb, ub, b,
                   basis, vstat, opt_tol, max_iter, bland_after, refactor_every):
    """Run bounded simplex to optimality from the given starting basis.

    Mutates ``basis`` and ``vstat`` in place.  Returns
    (status, iterations, x, objective); x is meaningful only on optimal.
    """
    max_etas = refactor_every + m + 16
    eta_row = np.empty(max_etas, dtype=np.int64)
    eta_start = np.zeros(max_etas + 1, dtype=np.int64)
    cap = 16 * (m + 16)
    eta_idx = np.empty(cap, dtype=np.int64)
    eta_val = np.empty(cap, dtype=np.float64)
    n_eta = 0

    xB = np.zeros(m)
    y = np.zeros(m)
    d = np.zeros(m)

    pivot_tol = 1e-10
    degen_tol = 1e-11

    # the eta file starts empty, which stands for B = I; any other starting
    # basis (e.g. with negatively-signed auxiliary columns) needs factorising
    identity_start = True
    for i in range(m):
        j = basis[i]
        k0 = indptr[j]
        if indptr[j + 1] - k0 != 1 or indices[k0] != i or data[k0] != 1.0:
            identity_start = False
            break
    if not identity_start:
        while True:
            n_eta = _refactor(m, indptr, indices, data, basis, d,
                              eta_row, eta_start, eta_idx, eta_val, cap, pivot_tol)
            if n_eta == -2:
                cap = cap * 2
                eta_idx = np.empty(cap, dtype=np.int64)
                eta_val = np.empty(cap, dtype=np.float64)
                continue
            break
        if n_eta < 0:
            return KERNEL_SINGULAR, 0, xB, 0.0

    _compute_basic_values(m, n_total, indptr, indices, data, lb, ub, b, vstat,
                          n_eta, eta_row, eta_start, eta_idx, eta_val, xB)

    n_sections = 1 + (n_total - 1) // 8192
    section_size = 1 + (n_total - 1) // n_sections
    section0 = 0

    bland = False
    degen_run = 0
    pivots_since_refactor = 0
    iters = 0

    while True:
        if iters >= max_iter:
            return KERNEL_ITER_LIMIT, iters, xB, 0.0
        iters += 1

        # BTRAN: y = B^-T c_B
        for i in range(m):
            y[i] = c[basis[i]]
        _apply_etas_transposed(n_eta, eta_row, eta_start, eta_idx, eta_val, y)

        # pricing: entering column q moving in direction q_dir from its bound
        q = -1
        q_dir = 0
        best_rc = 0.0
        if bland:
            for j in range(n_total):
                if vstat[j] == 2 or not ub[j] - lb[j] > 0.0:
                    continue
                rc = c[j]
                for k in range(indptr[j], indptr[j + 1]):
                    rc -= data[k] * y[indices[k]]
                if vstat[j] == 0 and rc > opt_tol:
                    q = j
                    q_dir = 1
                    break
                if vstat[j] == 1 and rc < -opt_tol:
                    q = j
                    q_dir = -1
                    break
        else:
            for srel in range(n_sections):
                s = (section0 + srel) % n_sections
                j0 = s * section_size
                j1 = min(j0 + section_size, n_total)
                for j in range(j0, j1):
                    if vstat[j] == 2 or not ub[j] - lb[j] > 0.0:
                        continue
                    rc = c[j]
                    for k in range(indptr[j], indptr[j + 1]):
                        rc -= data[k] * y[indices[k]]
                    if vstat[j] == 0:
                        if rc > opt_tol and rc > best_rc:
                            best_rc = rc
                            q = j
                            q_dir = 1
                    elif rc < -opt_tol and -rc > best_rc:
                        best_rc = -rc
                        q = j
                        q_dir = -1
                if q >= 0:
                    section0 = s
                    break

        if q < 0:
            break  # optimal

        # FTRAN: d = B^-1 A_q
        for i in range(m):
            d[i] = 0.0
        for k in range(indptr[q], indptr[q + 1]):
            d[indices[k]] = data[k]
        _apply_etas(n_eta, eta_row, eta_start, eta_idx, eta_val, d)

        # ratio test; blocking == -1 means the entering variable's own gap
        gap = ub[q] - lb[q]
        theta = gap if np.isfinite(gap) else _INF
        blocking = -1
        block_at_upper = False
        block_d = 0.0
        for i in range(m):
            di = d[i] * q_dir
            if di > pivot_tol:
                bvar = basis[i]
                lo = lb[bvar]
                if np.isfinite(lo):
                    t = xB[i] - lo
                    if t < 0.0:
                        t = 0.0
                    t = t / di
                    take = False
                    if t < theta - 1e-12:
                        take = True
                    elif t <= theta + 1e-12 and blocking >= 0:
                        if bland:
                            take = bvar < basis[blocking]
                        else:
                            take = abs(di) > abs(block_d)
                    if take:
                        theta = t
                        blocking = i
                        block_at_upper = False
                        block_d = di
            elif di < -pivot_tol:
                bvar = basis[i]
                hi = ub[bvar]
                if np.isfinite(hi):
                    t = hi - xB[i]
                    if t < 0.0:
                        t = 0.0
                    t = t / (-di)
                    take = False
                    if t < theta - 1e-12:
                        take = True
                    elif t <= theta + 1e-12 and blocking >= 0:
                        if bland:
                            take = bvar < basis[blocking]
                        else:
                            take = abs(di) > abs(block_d)
                    if take:
                        theta = t
                        blocking = i
                        block_at_upper = True
                        block_d = di
            # rows with |d_i| below pivot_tol never block

        if not np.isfinite(theta):
            return KERNEL_UNBOUNDED, iters, xB, 0.0

        if theta <= degen_tol:
            degen_run += 1
            if degen_run > bland_after:
                bland = True
        else:
            degen_run = 0

        if blocking < 0:
            # bound flip, no basis change
            for i in range(m):
                if d[i] != 0.0:
                    xB[i] -= q_dir * theta * d[i]
            vstat[q] = 1 - vstat[q]
            continue

        # pivot at row r
        r = blocking
        dr = d[r]
        if abs(dr) < pivot_tol:
            return KERNEL_SINGULAR, iters, xB, 0.0
        leaving = basis[r]
        enter_val = (lb[q] + theta) if q_dir > 0 else (ub[q] - theta)
        for i in range(m):
            if i != r and d[i] != 0.0:
                xB[i] -= q_dir * theta * d[i]
        vstat[leaving] = 1 if block_at_upper else 0
        basis[r] = q
        vstat[q] = 2
        xB[r] = enter_val

        # append the eta of this pivot
        nnz = 0
        for i in range(m):
            if d[i] != 0.0:
                nnz += 1
        while eta_start[n_eta] + nnz > cap:
            new_cap = cap * 2
            new_idx = np.empty(new_cap, dtype=np.int64)
            new_val = np.empty(new_cap, dtype=np.float64)
            new_idx[:cap] = eta_idx[:cap]
            new_val[:cap] = eta_val[:cap]
            eta_idx = new_idx
            eta_val = new_val
            cap = new_cap
        pos = eta_start[n_eta]
        for i in range(m):
            if d[i] != 0.0:
                eta_idx[pos] = i
                eta_val[pos] = (1.0 / dr) if i == r else (-d[i] / dr)
                pos += 1
        eta_row[n_eta] = r
        n_eta += 1
        eta_start[n_eta] = pos
        pivots_since_refactor += 1

        if pivots_since_refactor >= refactor_every or n_eta >= max_etas - 1:
            while True:
                n_eta = _refactor(m, indptr, indices, data, basis, d,
                                  eta_row, eta_start, eta_idx, eta_val, cap, pivot_tol)
                if n_eta == -2:
                    # eta storage too small for the refactor fill: grow and retry
                    cap = cap * 2
                    eta_idx = np.empty(cap, dtype=np.int64)
                    eta_val = np.empty(cap, dtype=np.float64)
                    continue
                break
            if n_eta < 0:
                return KERNEL_SINGULAR, iters, xB, 0.0
            pivots_since_refactor = 0
            _compute_basic_values(m, n_total, indptr, indices, data, lb, ub, b, vstat,
                                  n_eta, eta_row, eta_start, eta_idx, eta_val, xB)

    # extract the solution
    x = np.zeros(n_total)
    for j in range(n_total):
        st = vstat[j]
        if st != 2:
            x[j] = ub[j] if st == 1 else lb[j]
    for i in range(m):
        x[basis[i]] = xB[i]
    obj = 0.0
    for j in range(n_total):
        if x[j] != 0.0:
            obj += c[j] * x[j]
    return KERNEL_OPTIMAL, iters, x, obj


@njit(cache=True)
def _refactor(m, indptr, indices, data, basis, d,
              eta_row, eta_start, eta_idx, eta_val, cap, pivot_tol):
    """Rebuild the eta file from the identity by re-pivoting the basis columns.

    Columns are processed sparsest-remaining-first (lazy bucket queue), which
    gives zero fill on forest-structured bases and small fill otherwise.
    Reassigns basis positions in place; returns the new eta count, -1 if the
    basis is numerically singular, or -2 if the value arrays are too small
    for the fill (the caller grows them and retries).
    """
    col_of = np.empty(m, dtype=np.int64)
    for p in range(m):
        col_of[p] = basis[p]

    # row -> basis positions holding a structural entry in that row
    row_ptr = np.zeros(m + 2, dtype=np.int64)
    for p in range(m):
        j = col_of[p]
        for k in range(indptr[j], indptr[j + 1]):
            row_ptr[indices[k] + 2] += 1
    for i in range(2, m + 2):
        row_ptr[i] += row_ptr[i - 1]
    total = row_ptr[m + 1]
    row_cols = np.empty(total, dtype=np.int64)
    for p in range(m):
        j = col_of[p]
        for k in range(indptr[j], indptr[j + 1]):
            i = indices[k] + 1
            row_cols[row_ptr[i]] = p
            row_ptr[i] += 1
    # row_ptr[i] .. row_ptr[i+1] now spans row i's positions

    cnt = np.empty(m, dtype=np.int64)
    max_cnt = 0
    for p in range(m):
        j = col_of[p]
        cnt[p] = indptr[j + 1] - indptr[j]
        if cnt[p] > max_cnt:
            max_cnt = cnt[p]

    # lazy bucket queue over cnt values; queue entries are append-only nodes
    # (one per push), because a column re-queued at a lower count must not
    # disturb the chain of the bucket its stale entry still sits in
    pool_cap = m + total + 8
    node_col = np.empty(pool_cap, dtype=np.int64)
    node_next = np.empty(pool_cap, dtype=np.int64)
    n_nodes = 0
    bucket_head = np.full(max_cnt + 2, -1, dtype=np.int64)
    in_bucket_for = np.full(m, -1, dtype=np.int64)
    for p in range(m - 1, -1, -1):
        cp = cnt[p]
        node_col[n_nodes] = p
        node_next[n_nodes] = bucket_head[cp]
        bucket_head[cp] = n_nodes
        in_bucket_for[p] = cp
        n_nodes += 1

    row_free = np.ones(m, dtype=np.bool_)
    done = np.zeros(m, dtype=np.bool_)
    new_basis = np.empty(m, dtype=np.int64)

    n_eta = 0
    eta_start[0] = 0
    lowest = 0
    for _step in range(m):
        # pop the sparsest unprocessed column (skip stale bucket entries)
        best_p = -1
        while lowest <= max_cnt + 1:
            e = bucket_head[lowest]
            if e < 0:
                lowest += 1
                continue
            bucket_head[lowest] = node_next[e]
            p = node_col[e]
            if done[p] or in_bucket_for[p] != lowest:
                continue
            best_p = p
            break
        if best_p < 0:
            return -1

        j = col_of[best_p]
        for i in range(m):
            d[i] = 0.0
        for k in range(indptr[j], indptr[j + 1]):
            d[indices[k]] = data[k]
        _apply_etas(n_eta, eta_row, eta_start, eta_idx, eta_val, d)
        rbest = -1
        dbest = 0.0
        for i in range(m):
            if row_free[i] and abs(d[i]) > dbest:
                dbest = abs(d[i])
                rbest = i
        if rbest < 0 or dbest < pivot_tol:
            return -1

        trivial = abs(d[rbest] - 1.0) < 1e-14
        if trivial:
            for i in range(m):
                if i != rbest and d[i] != 0.0:
                    trivial = False
                    break
        if not trivial:
            nnz = 0
            for i in range(m):
                if d[i] != 0.0:
                    nnz += 1
            if eta_start[n_eta] + nnz > cap:
                return -2  # storage overflow: caller grows the arrays and retries
            pos = eta_start[n_eta]
            drr = d[rbest]
            for i in range(m):
                if d[i] != 0.0:
                    eta_idx[pos] = i
                    eta_val[pos] = (1.0 / drr) if i == rbest else (-d[i] / drr)
                    pos += 1
            eta_row[n_eta] = rbest
            n_eta += 1
            eta_start[n_eta] = pos

        done[best_p] = True
        row_free[rbest] = False
        new_basis[rbest] = j
        for k in range(row_ptr[rbest], row_ptr[rbest + 1]):
            p = row_cols[k]
            if not done[p]:
                cnt[p] -= 1
                cp = cnt[p]
                node_col[n_nodes] = p
                node_next[n_nodes] = bucket_head[cp]
                bucket_head[cp] = n_nodes
                in_bucket_for[p] = cp
                n_nodes += 1
                if cp < lowest:
                    lowest = cp

    for i in range(m):
        basis[i] = new_basis[i]
    return n_eta
