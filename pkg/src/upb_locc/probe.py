"""Seesaw search for a product vector inside the orthogonal complement of a set.

A diagnostic only: a best overlap close to 1 exhibits a product state the
set can be extended by; anything below 1 proves nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .upb import UPBSet, complement_basis


@dataclass(frozen=True)
class ProbeResult:
    best: float
    restarts: int
    iters: int
    seed: int
    complement_dim: int


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _top_vector(m: np.ndarray) -> tuple[float, np.ndarray]:
    w, v = np.linalg.eigh(m)
    return float(w[-1]), v[:, -1]


def seesaw_probe(basis: np.ndarray, dims: Sequence[int], restarts: int = 100, iters: int = 200, seed: int = 0) -> ProbeResult:
    """Maximize ||P_comp (x1 (x) x2 (x) ...)||^2 over unit product vectors.

    ``basis`` rows are an orthonormal basis of the complement. Each sweep
    replaces one factor by the top eigenvector of its reduced operator,
    which never decreases the objective.
    """
    dims = tuple(int(x) for x in dims)
    basis = np.asarray(basis, dtype=np.complex128)
    if basis.shape[0] == 0:
        return ProbeResult(0.0, restarts, iters, seed, 0)
    rng = np.random.default_rng(seed)
    # complement vectors as tensors, conjugated: <c_r| x> = sum conj(c_r) x
    comp = basis.conj().reshape((basis.shape[0],) + dims)
    best = 0.0
    letters = "abcdefgh"[: len(dims)]
    for _ in range(restarts):
        xs = [_random_unit(rng, n) for n in dims]
        value = 0.0
        for _ in range(iters):
            for slot in range(len(dims)):
                # contract every factor except ``slot``: rows r, free index of slot
                sub = "r" + letters
                ops = [comp]
                subs = [sub]
                for other, x in enumerate(xs):
                    if other != slot:
                        ops.append(x)
                        subs.append(letters[other])
                g = np.einsum(",".join(subs) + "->r" + letters[slot], *ops)
                value, xs[slot] = _top_vector(g.conj().T @ g)
            if 1.0 - value < 1e-14:
                break
        best = max(best, min(value, 1.0))
    return ProbeResult(best, restarts, iters, seed, basis.shape[0])


def seesaw_unextendibility_probe(upb: UPBSet, restarts: int = 100, iters: int = 200, seed: int = 0) -> ProbeResult:
    d = upb.d
    return seesaw_probe(complement_basis(upb.dense()), (d, d, d), restarts, iters, seed)


def counter_fixture() -> np.ndarray:
    """2x2x2 set {|000>, |111>}: its complement contains |010>, so the probe should reach 1."""
    v = np.zeros((2, 8), dtype=np.complex128)
    v[0, 0] = 1
    v[1, 7] = 1
    return v
