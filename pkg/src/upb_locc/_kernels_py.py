"""Pure numpy/scipy versions of the compiled kernels (reference + fallback)."""

import numpy as np
import scipy.sparse as sp


def pattern_mask(keys, strides, dims, tables):
    keys = np.asarray(keys, dtype=np.int64)
    out = np.zeros(keys.shape[0], dtype=bool)
    if keys.size == 0:
        return out.astype(np.uint8)
    digits = (keys[:, None] // strides[None, :]) % dims[None, :]
    cols = np.arange(len(strides))
    for table in tables:
        out |= np.all(table[cols[None, :], digits], axis=1).astype(bool)
    return out.astype(np.uint8)


def gram(ptr, keys, vals):
    m = len(ptr) - 1
    if m == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    # Keys are arbitrary int64; compress them to column ids first.
    uniq, cols = np.unique(keys, return_inverse=True)
    rows = np.repeat(np.arange(m), np.diff(ptr))
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(m, max(len(uniq), 1)))
    return np.asarray((mat.conj() @ mat.T).todense())
