"""Compiled inner loops for convolution and alias tables."""
from __future__ import annotations

import numba as nb
import numpy as np

_MULT = np.int64(-7046029254386353131)


@nb.njit(cache=True)
def _product_key(A, B, p, q, ti, tj, tk, lo, radix, c):
    kdim = A.shape[1]
    for d in range(kdim):
        c[d] = A[p, d] + B[q, d]
    for t in range(ti.shape[0]):
        c[tk[t]] += A[p, ti[t]] * B[q, tj[t]]
    key = np.int64(0)
    for d in range(kdim):
        key = key * radix[d] + (c[d] - lo[d])
    return key


@nb.njit(cache=True)
def dense_bilinear(A, a, B, b, ti, tj, tk, lo, radix, out):
    """out[key(A[p] * B[q])] += a[p] * b[q] for every pair.

    The loop runs over B outside so that consecutive products land close
    together in ``out`` when A is sorted.
    """
    c = np.empty(A.shape[1], np.int64)
    for q in range(B.shape[0]):
        bq = b[q]
        for p in range(A.shape[0]):
            key = _product_key(A, B, p, q, ti, tj, tk, lo, radix, c)
            out[key] += a[p] * bq


@nb.njit(cache=True)
def hash_bilinear(A, a, B, b, p0, p1, ti, tj, tk, lo, radix, keys, vals):
    """Open-addressing accumulation of products A[p0:p1] x B; returns new slots used."""
    mask = keys.shape[0] - 1
    c = np.empty(A.shape[1], np.int64)
    used = 0
    for p in range(p0, p1):
        ap = a[p]
        for q in range(B.shape[0]):
            key = _product_key(A, B, p, q, ti, tj, tk, lo, radix, c)
            h = ((key * _MULT) >> np.int64(20)) & mask
            while True:
                if keys[h] == -1:
                    keys[h] = key
                    vals[h] = ap * b[q]
                    used += 1
                    break
                if keys[h] == key:
                    vals[h] += ap * b[q]
                    break
                h = (h + 1) & mask
    return used


@nb.njit(cache=True)
def hash_insert(keys, vals, new_keys, new_vals):
    mask = keys.shape[0] - 1
    used = 0
    for i in range(new_keys.shape[0]):
        key = new_keys[i]
        h = ((key * _MULT) >> np.int64(20)) & mask
        while True:
            if keys[h] == -1:
                keys[h] = key
                vals[h] = new_vals[i]
                used += 1
                break
            if keys[h] == key:
                vals[h] += new_vals[i]
                break
            h = (h + 1) & mask
    return used


@nb.njit(cache=True)
def alias_build(p):
    n = p.shape[0]
    total = 0.0
    for i in range(n):
        total += p[i]
    scaled = p * (n / total)
    prob = np.zeros(n)
    alias = np.arange(n)
    small = np.empty(n, np.int64)
    large = np.empty(n, np.int64)
    ns = 0
    nl = 0
    for i in range(n - 1, -1, -1):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        l = large[nl]
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] + scaled[s] - 1.0
        if scaled[l] < 1.0:
            small[ns] = l
            ns += 1
        else:
            large[nl] = l
            nl += 1
    for i in range(nl):
        prob[large[i]] = 1.0
    for i in range(ns):
        prob[small[i]] = 1.0
    return prob, alias
