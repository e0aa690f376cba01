# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the sparse state engine.

Both functions mirror :mod:`upb_locc._kernels_py` exactly; the pure-Python
module is the reference and the fallback when this extension is not built.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def pattern_mask(const cnp.int64_t[::1] keys,
                 const cnp.int64_t[::1] strides,
                 const cnp.int64_t[::1] dims,
                 const cnp.uint8_t[:, :, ::1] tables):
    """Return a uint8 mask: 1 where the decoded multi-index matches any pattern."""
    cdef Py_ssize_t n = keys.shape[0]
    cdef Py_ssize_t nreg = strides.shape[0]
    cdef Py_ssize_t npat = tables.shape[0]
    cdef Py_ssize_t i, p, r
    cdef cnp.int64_t key, digit
    cdef bint ok
    out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] mask = out
    with nogil:
        for i in range(n):
            key = keys[i]
            for p in range(npat):
                ok = True
                for r in range(nreg):
                    digit = (key // strides[r]) % dims[r]
                    if not tables[p, r, digit]:
                        ok = False
                        break
                if ok:
                    mask[i] = 1
                    break
    return out


def gram(const cnp.int64_t[::1] ptr,
         const cnp.int64_t[::1] keys,
         const double complex[::1] vals):
    """Gram matrix G[a, b] = <row a | row b> for rows stored CSR-style (keys unique per row).

    A key-sorted copy of the entries lets each row collect its overlaps from
    the rows sharing each of its keys, so writes stay within one output row.
    """
    cdef Py_ssize_t m = ptr.shape[0] - 1
    cdef Py_ssize_t n = keys.shape[0]
    out = np.zeros((m, m), dtype=np.complex128)
    if n == 0:
        return out
    key_arr = np.asarray(keys)
    order_arr = np.argsort(key_arr, kind="stable")
    bounds = np.flatnonzero(np.diff(key_arr[order_arr])) + 1
    start_arr = np.concatenate([[0], bounds, [n]]).astype(np.int64)
    group_arr = np.empty(n, dtype=np.int64)
    group_arr[order_arr] = np.repeat(np.arange(len(start_arr) - 1, dtype=np.int64), np.diff(start_arr))
    rows_arr = np.repeat(np.arange(m, dtype=np.int64), np.diff(np.asarray(ptr)))[order_arr]
    sorted_vals = np.ascontiguousarray(np.asarray(vals)[order_arr])
    cdef cnp.int64_t[::1] group = group_arr
    cdef cnp.int64_t[::1] start = start_arr
    cdef cnp.int64_t[::1] rows = rows_arr
    cdef double complex[::1] sv = sorted_vals
    cdef double complex[:, ::1] g = out
    cdef Py_ssize_t a, i, y
    cdef cnp.int64_t grp
    cdef double complex va
    with nogil:
        for a in range(m):
            for i in range(ptr[a], ptr[a + 1]):
                va = vals[i].conjugate()
                grp = group[i]
                for y in range(start[grp], start[grp + 1]):
                    g[a, rows[y]] += va * sv[y]
    return out
