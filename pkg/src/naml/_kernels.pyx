# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the convolution window transform and embedding scatter."""

from cython cimport floating
from libc.string cimport memcpy, memset

import numpy as np


def unfold_same(floating[:, :, ::1] x, Py_ssize_t half, floating[:, :, ::1] out):
    cdef Py_ssize_t B = x.shape[0], L = x.shape[1], D = x.shape[2]
    cdef Py_ssize_t W = 2 * half + 1
    cdef Py_ssize_t b, i, w, src
    cdef size_t row = D * sizeof(floating)
    with nogil:
        for b in range(B):
            for i in range(L):
                for w in range(W):
                    src = i - half + w
                    if src < 0 or src >= L:
                        memset(&out[b, i, w * D], 0, row)
                    else:
                        memcpy(&out[b, i, w * D], &x[b, src, 0], row)


def fold_same(floating[:, :, ::1] g, Py_ssize_t half, floating[:, :, ::1] out):
    cdef Py_ssize_t B = out.shape[0], L = out.shape[1], D = out.shape[2]
    cdef Py_ssize_t W = 2 * half + 1
    cdef Py_ssize_t b, i, w, d, dst
    with nogil:
        for b in range(B):
            for i in range(L):
                for w in range(W):
                    dst = i - half + w
                    if dst < 0 or dst >= L:
                        continue
                    for d in range(D):
                        out[b, dst, d] += g[b, i, w * D + d]


def scatter_add_rows(floating[:, ::1] table, const long long[::1] ids, floating[:, ::1] rows):
    cdef Py_ssize_t N = ids.shape[0], D = table.shape[1]
    cdef Py_ssize_t n, d, r
    with nogil:
        for n in range(N):
            r = ids[n]
            for d in range(D):
                table[r, d] += rows[n, d]
