"""Compiled kernels for ordering, symbolic analysis and LDL^T.

All arrays are CSC-style (pointer, index) pairs with int64 indices.  The
symmetric input to the symbolic/numeric kernels is the *full* (both
triangles) permuted pattern with sorted row indices; kernels read only the
entries i <= k of column k.
"""
import heapq

import numpy as np
from numba import njit


@njit(cache=True)
def _flip(i):
    return -i - 2


@njit(cache=True)
def _wclear(mark, lemax, w, n):
    if mark < 2 or mark + lemax < 0:
        for k in range(n):
            if w[k] != 0:
                w[k] = 1
        mark = 2
    return mark


@njit(cache=True)
def amd_kernel(n, Ap, Ai, aggressive):
    """Approximate minimum degree ordering of a symmetric pattern.

    ``Ap, Ai`` hold both triangles with the diagonal removed.  Quotient-graph
    elimination with approximate external degrees, supervariable detection
    and mass elimination.  Among variables of equal approximate degree the
    lowest index is eliminated first.  The result is the pivot sequence
    itself (members of a supervariable and mass-eliminated nodes follow
    their pivot, dense rows go last), ``perm[k]`` = original index.
    """
    if n == 0:
        return np.empty(0, dtype=np.int64)
    cnz = Ap[n]
    nzmax = cnz + cnz // 5 + 2 * n + 1
    Ci = np.empty(nzmax, dtype=np.int64)
    Ci[:cnz] = Ai[:cnz]
    Cp = np.empty(n + 1, dtype=np.int64)
    Cp[:] = Ap[: n + 1]

    ln = np.zeros(n + 1, dtype=np.int64)
    nv = np.ones(n + 1, dtype=np.int64)
    nxt = np.full(n + 1, -1, dtype=np.int64)
    elen = np.zeros(n + 1, dtype=np.int64)
    degree = np.zeros(n + 1, dtype=np.int64)
    w = np.ones(n + 1, dtype=np.int64)
    hhead = np.full(n + 1, -1, dtype=np.int64)
    last = np.full(n + 1, -1, dtype=np.int64)
    inlist = np.zeros(n + 1, dtype=np.bool_)

    dense = max(16.0, 10.0 * np.sqrt(n))
    dense = min(float(n - 2), dense)

    for k in range(n):
        ln[k] = Cp[k + 1] - Cp[k]
        degree[k] = ln[k]
    ln[n] = 0
    nv[n] = 0
    mark = _wclear(0, 0, w, n)
    elen[n] = -2
    Cp[n] = -1
    w[n] = 0

    step = np.full(n + 1, -1, dtype=np.int64)
    nstep = 0
    heap = [(np.int64(0), np.int64(0))]
    heap.pop()
    nel = 0
    for i in range(n):
        d = degree[i]
        if d == 0:
            step[i] = nstep
            nstep += 1
            elen[i] = -2
            nel += 1
            Cp[i] = -1
            w[i] = 0
        elif d > dense:
            nv[i] = 0
            elen[i] = -1
            nel += 1
            Cp[i] = _flip(n)
            nv[n] += 1
        else:
            heapq.heappush(heap, (d, np.int64(i)))
            inlist[i] = True

    lemax = 0
    while nel < n:
        # -- pivot of least approximate degree, lowest index on ties
        k = -1
        while len(heap) > 0:
            d, cand = heapq.heappop(heap)
            if inlist[cand] and degree[cand] == d and nv[cand] > 0:
                k = cand
                break
        if k < 0:
            break
        inlist[k] = False
        step[k] = nstep
        nstep += 1
        elenk = elen[k]
        nvk = nv[k]
        nel += nvk

        # -- compact Ci if the new element may not fit
        if elenk > 0 and cnz + degree[k] + 1 >= nzmax:
            for j in range(n):
                p = Cp[j]
                if p >= 0:
                    Cp[j] = Ci[p]
                    Ci[p] = _flip(j)
            q = 0
            p = 0
            while p < cnz:
                j = _flip(Ci[p])
                p += 1
                if j >= 0:
                    Ci[q] = Cp[j]
                    Cp[j] = q
                    q += 1
                    for _ in range(ln[j] - 1):
                        Ci[q] = Ci[p]
                        q += 1
                        p += 1
            cnz = q

        # -- construct new element Lk
        dk = 0
        nv[k] = -nvk
        p = Cp[k]
        pk1 = p if elenk == 0 else cnz
        pk2 = pk1
        for k1 in range(1, elenk + 2):
            if k1 > elenk:
                e = k
                pj = p
                lne = ln[k] - elenk
            else:
                e = Ci[p]
                p += 1
                pj = Cp[e]
                lne = ln[e]
            for _ in range(lne):
                i = Ci[pj]
                pj += 1
                nvi = nv[i]
                if nvi <= 0:
                    continue
                dk += nvi
                nv[i] = -nvi
                Ci[pk2] = i
                pk2 += 1
                inlist[i] = False
            if e != k:
                Cp[e] = _flip(k)
                w[e] = 0
        if elenk != 0:
            cnz = pk2
        degree[k] = dk
        Cp[k] = pk1
        ln[k] = pk2 - pk1
        elen[k] = -2

        # -- scan 1: |Le \ Lk| for every element adjacent to Lk
        mark = _wclear(mark, lemax, w, n)
        for pk in range(pk1, pk2):
            i = Ci[pk]
            eln = elen[i]
            if eln <= 0:
                continue
            nvi = -nv[i]
            wnvi = mark - nvi
            for p in range(Cp[i], Cp[i] + eln):
                e = Ci[p]
                if w[e] >= mark:
                    w[e] -= nvi
                elif w[e] != 0:
                    w[e] = degree[e] + wnvi

        # -- scan 2: approximate degree update, prune, hash
        for pk in range(pk1, pk2):
            i = Ci[pk]
            p1 = Cp[i]
            p2 = p1 + elen[i] - 1
            pn = p1
            h = 0
            d = 0
            for p in range(p1, p2 + 1):
                e = Ci[p]
                if w[e] != 0:
                    dext = w[e] - mark
                    if dext > 0 or not aggressive:
                        d += dext
                        Ci[pn] = e
                        pn += 1
                        h += e
                    else:
                        Cp[e] = _flip(k)
                        w[e] = 0
            elen[i] = pn - p1 + 1
            p3 = pn
            p4 = p1 + ln[i]
            for p in range(p2 + 1, p4):
                j = Ci[p]
                nvj = nv[j]
                if nvj <= 0:
                    continue
                d += nvj
                Ci[pn] = j
                pn += 1
                h += j
            if d == 0:
                # mass elimination
                Cp[i] = _flip(k)
                nvi = -nv[i]
                dk -= nvi
                nvk += nvi
                nel += nvi
                nv[i] = 0
                elen[i] = -1
            else:
                degree[i] = min(degree[i], d)
                Ci[pn] = Ci[p3]
                Ci[p3] = Ci[p1]
                Ci[p1] = k
                ln[i] = pn - p1 + 1
                h = h % n
                nxt[i] = hhead[h]
                hhead[h] = i
                last[i] = h
        degree[k] = dk
        lemax = max(lemax, dk)
        mark = _wclear(mark + lemax, lemax, w, n)

        # -- supervariable detection
        for pk in range(pk1, pk2):
            i = Ci[pk]
            if nv[i] >= 0:
                continue
            h = last[i]
            i = hhead[h]
            hhead[h] = -1
            while i != -1 and nxt[i] != -1:
                lni = ln[i]
                eln = elen[i]
                for p in range(Cp[i] + 1, Cp[i] + lni):
                    w[Ci[p]] = mark
                jlast = i
                j = nxt[i]
                while j != -1:
                    ok = ln[j] == lni and elen[j] == eln
                    p = Cp[j] + 1
                    while ok and p <= Cp[j] + lni - 1:
                        if w[Ci[p]] != mark:
                            ok = False
                        p += 1
                    if ok:
                        Cp[j] = _flip(i)
                        nv[i] += nv[j]
                        nv[j] = 0
                        elen[j] = -1
                        j = nxt[j]
                        nxt[jlast] = j
                    else:
                        jlast = j
                        j = nxt[j]
                i = nxt[i]
                mark += 1

        # -- finalize Lk and reinsert its variables
        p = pk1
        for pk in range(pk1, pk2):
            i = Ci[pk]
            nvi = -nv[i]
            if nvi <= 0:
                continue
            nv[i] = nvi
            d = degree[i] + dk - nvi
            d = min(d, n - nel - nvi)
            degree[i] = d
            heapq.heappush(heap, (d, np.int64(i)))
            inlist[i] = True
            Ci[p] = i
            p += 1
        nv[k] = nvk
        ln[k] = p - pk1
        if ln[k] == 0:
            Cp[k] = -1
            w[k] = 0
        if elenk != 0:
            cnz = p

    # -- expand supervariables: every node inherits the step of its pivot
    step[n] = nstep
    key = np.empty(n, dtype=np.int64)
    for j in range(n):
        x = j
        while step[x] < 0:
            x = _flip(Cp[x])
        key[j] = step[x]
    return np.argsort(key, kind="mergesort").astype(np.int64)


@njit(cache=True)
def etree_kernel(n, Sp, Si):
    """Elimination tree of a symmetric matrix from the upper part of its columns."""
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(Sp[k], Sp[k + 1]):
            i = Si[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@njit(cache=True)
def colcount_kernel(n, Sp, Si, parent):
    """Column counts of L (diagonal included) by traversing row subtrees."""
    counts = np.ones(n, dtype=np.int64)
    flag = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        flag[k] = k
        for p in range(Sp[k], Sp[k + 1]):
            i = Si[p]
            if i >= k:
                continue
            while flag[i] != k:
                counts[i] += 1
                flag[i] = k
                i = parent[i]
    return counts


@njit(cache=True)
def pattern_kernel(n, Sp, Si, parent, Lp):
    """Row indices of the strictly lower part of L, column by column, sorted."""
    Li = np.empty(Lp[n], dtype=np.int64)
    fill = Lp[:n].copy()
    flag = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        flag[k] = k
        for p in range(Sp[k], Sp[k + 1]):
            i = Si[p]
            if i >= k:
                continue
            while flag[i] != k:
                Li[fill[i]] = k
                fill[i] += 1
                flag[i] = k
                i = parent[i]
    return Li


@njit(cache=True)
def ldl_numeric_kernel(n, Sp, Si, Sx, parent, Lp, tol):
    """Up-looking LDL^T.  Returns (Li, Lx, D, failed_column or -1)."""
    nnz = Lp[n]
    Li = np.empty(nnz, dtype=np.int64)
    Lx = np.empty(nnz, dtype=np.float64)
    D = np.empty(n, dtype=np.float64)
    Y = np.zeros(n, dtype=np.float64)
    pattern = np.empty(n, dtype=np.int64)
    flag = np.full(n, -1, dtype=np.int64)
    lnz = np.zeros(n, dtype=np.int64)
    for k in range(n):
        top = n
        flag[k] = k
        for p in range(Sp[k], Sp[k + 1]):
            i = Si[p]
            if i > k:
                continue
            Y[i] += Sx[p]
            length = 0
            while flag[i] != k:
                pattern[length] = i
                length += 1
                flag[i] = k
                i = parent[i]
            while length > 0:
                top -= 1
                length -= 1
                pattern[top] = pattern[length]
        dk = Y[k]
        Y[k] = 0.0
        while top < n:
            i = pattern[top]
            top += 1
            yi = Y[i]
            Y[i] = 0.0
            p2 = Lp[i] + lnz[i]
            for p in range(Lp[i], p2):
                Y[Li[p]] -= Lx[p] * yi
            lki = yi / D[i]
            dk -= lki * yi
            Li[p2] = k
            Lx[p2] = lki
            lnz[i] += 1
        D[k] = dk
        if not dk > tol:
            return Li, Lx, D, k
    return Li, Lx, D, -1


@njit(cache=True, nogil=True)
def ldl_solve_kernel(n, Lp, Li, Lx, D, B):
    """Overwrite B (n x r, row-major) with (L D L^T)^{-1} B."""
    r = B.shape[1]
    for j in range(n):
        for p in range(Lp[j], Lp[j + 1]):
            i = Li[p]
            l = Lx[p]
            for c in range(r):
                B[i, c] -= l * B[j, c]
    for j in range(n):
        dj = D[j]
        for c in range(r):
            B[j, c] /= dj
    for j in range(n - 1, -1, -1):
        for p in range(Lp[j], Lp[j + 1]):
            i = Li[p]
            l = Lx[p]
            for c in range(r):
                B[j, c] -= l * B[i, c]


@njit(cache=True, nogil=True)
def inv_diag_kernel(n, Lp, Li, Lx, D, parent, cols):
    """Diagonal entries (C^{-1})_{jj} for permuted indices ``cols``.

    Uses e_j^T C^{-1} e_j = sum_t x_t^2 / d_t with x = L^{-1} e_j, whose
    nonzeros lie on the elimination-tree path from j to its root.
    """
    out = np.empty(cols.size, dtype=np.float64)
    x = np.zeros(n, dtype=np.float64)
    for c in range(cols.size):
        j = cols[c]
        x[j] = 1.0
        t = j
        acc = 0.0
        while t != -1:
            xt = x[t]
            x[t] = 0.0
            if xt != 0.0:
                acc += xt * xt / D[t]
                for p in range(Lp[t], Lp[t + 1]):
                    x[Li[p]] -= Lx[p] * xt
            t = parent[t]
        out[c] = acc
    return out
