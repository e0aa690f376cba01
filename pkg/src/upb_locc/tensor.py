"""Sparse complex states over ordered, lab-owned qudit registers.

States are stored as sorted linear keys (row-major over the layout, first
register most significant) plus complex amplitudes. Kets are kept
unnormalized; probabilities are always computed as ratios of squared norms.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels

PRUNE_TOL = 1e-12
ORTH_TOL = 1e-9

LABS = ("Alice", "Bob", "Charlie")


class LayoutError(ValueError):
    """Register ids collide or a register is missing from a layout."""


class NonUnitaryError(ValueError):
    pass


@dataclass(frozen=True)
class Register:
    name: str
    dim: int
    owner: str

    def __post_init__(self):
        if self.dim < 2:
            raise LayoutError(f"register {self.name!r} has dimension {self.dim} < 2")
        if self.owner not in LABS:
            raise LayoutError(f"unknown lab {self.owner!r}")


@dataclass(frozen=True)
class Layout:
    registers: tuple[Register, ...]

    def __post_init__(self):
        names = [r.name for r in self.registers]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate register ids in {names}")

    @classmethod
    def of(cls, *specs) -> "Layout":
        """``Layout.of(("A", 3, "Alice"), ("B", 3, "Bob"))``"""
        return cls(tuple(s if isinstance(s, Register) else Register(*s) for s in specs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(r.dim for r in self.registers)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.registers)

    def __contains__(self, name):
        return name in self.names

    def position(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LayoutError(f"register {name!r} not in layout {self.names}") from None

    def register(self, name: str) -> Register:
        return self.registers[self.position(name)]

    def owner(self, name: str) -> str:
        return self.register(name).owner

    def owned_by(self, lab: str) -> tuple[str, ...]:
        return tuple(r.name for r in self.registers if r.owner == lab)

    def with_owner(self, name: str, lab: str) -> "Layout":
        pos = self.position(name)
        regs = list(self.registers)
        regs[pos] = Register(regs[pos].name, regs[pos].dim, lab)
        return Layout(tuple(regs))

    def concat(self, other: "Layout") -> "Layout":
        return Layout(self.registers + other.registers)

    def strides(self) -> np.ndarray:
        dims = self.dims
        out = np.ones(len(dims), dtype=np.int64)
        for i in range(len(dims) - 2, -1, -1):
            out[i] = out[i + 1] * dims[i + 1]
        return out

    def encode(self, index: Sequence[int]) -> int:
        if len(index) != len(self.registers):
            raise LayoutError(f"index {tuple(index)} has wrong length for {self.names}")
        key = 0
        for v, d in zip(index, self.dims):
            if not 0 <= v < d:
                raise LayoutError(f"index {tuple(index)} out of range for dims {self.dims}")
            key = key * d + int(v)
        return key

    def decode(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        return (keys[:, None] // self.strides()[None, :]) % np.asarray(self.dims, dtype=np.int64)[None, :]


@dataclass(frozen=True, eq=False)
class SparseState:
    layout: Layout
    keys: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, layout: Layout, keys, values) -> "SparseState":
        keys = np.asarray(keys, dtype=np.int64)
        values = np.asarray(values, dtype=np.complex128)
        if keys.size:
            order = np.argsort(keys, kind="stable")
            keys, values = keys[order], values[order]
            if np.any(np.diff(keys) == 0):
                uniq, inv = np.unique(keys, return_inverse=True)
                summed = np.zeros(len(uniq), dtype=np.complex128)
                np.add.at(summed, inv, values)
                keys, values = uniq, summed
            if not np.all(np.isfinite(values)):
                raise ValueError("non-finite amplitude")
            keep = np.abs(values) >= PRUNE_TOL
            keys, values = keys[keep], values[keep]
        keys.setflags(write=False)
        values.setflags(write=False)
        return cls(layout, keys, values)

    @classmethod
    def from_dict(cls, layout: Layout, amplitudes: Mapping[tuple, complex]) -> "SparseState":
        keys = [layout.encode(idx) for idx in amplitudes]
        return cls.from_arrays(layout, keys, list(amplitudes.values()))

    @classmethod
    def empty(cls, layout: Layout) -> "SparseState":
        return cls.from_arrays(layout, [], [])

    @property
    def amplitudes(self) -> dict[tuple[int, ...], complex]:
        idx = self.layout.decode(self.keys)
        return {tuple(int(v) for v in row): complex(a) for row, a in zip(idx, self.values)}

    @property
    def nnz(self) -> int:
        return int(self.keys.size)

    def norm_sq(self) -> float:
        return float(np.vdot(self.values, self.values).real)

    def normalized(self) -> "SparseState":
        n = math.sqrt(self.norm_sq())
        if n == 0:
            raise ValueError("cannot normalize the zero state")
        return SparseState(self.layout, self.keys, self.values / n)

    def scaled(self, factor: complex) -> "SparseState":
        return SparseState.from_arrays(self.layout, self.keys, self.values * factor)

    def __add__(self, other: "SparseState") -> "SparseState":
        _require_same_layout(self, other)
        return SparseState.from_arrays(
            self.layout,
            np.concatenate([self.keys, other.keys]),
            np.concatenate([self.values, other.values]),
        )

    def relayout(self, layout: Layout) -> "SparseState":
        """Same amplitudes under a layout differing only in register owners."""
        if layout.names != self.layout.names or layout.dims != self.layout.dims:
            raise LayoutError("relayout may only change ownership")
        return SparseState(layout, self.keys, self.values)

    def digits(self) -> np.ndarray:
        return self.layout.decode(self.keys)

    def support(self, name: str) -> frozenset[int]:
        col = self.layout.position(name)
        return frozenset(int(v) for v in np.unique(self.digits()[:, col]))

    def allclose(self, other: "SparseState", tol: float = ORTH_TOL) -> bool:
        _require_same_layout(self, other)
        diff = self + other.scaled(-1)
        return bool(np.all(np.abs(diff.values) <= tol))

    def __repr__(self):
        terms = ", ".join(f"{k}: {v:.6g}" for k, v in self.amplitudes.items())
        return f"SparseState({self.layout.names}, {{{terms}}})"


def _require_same_layout(x: SparseState, y: SparseState):
    if x.layout.names != y.layout.names or x.layout.dims != y.layout.dims:
        raise LayoutError(f"layout mismatch: {x.layout.names} vs {y.layout.names}")


def ket(name: str, dim: int, owner: str, amplitudes: Mapping[int, complex]) -> SparseState:
    """Single-register state, e.g. ``ket("A", 3, "Alice", {0: 1, 1: -1})``."""
    layout = Layout((Register(name, dim, owner),))
    return SparseState.from_arrays(layout, list(amplitudes), list(amplitudes.values()))


def basis_ket(name: str, dim: int, owner: str, value: int) -> SparseState:
    return ket(name, dim, owner, {value: 1.0})


def tensor_product(factors: Sequence[SparseState]) -> SparseState:
    if not factors:
        raise ValueError("tensor_product needs at least one factor")
    layout = factors[0].layout
    keys, values = factors[0].keys, factors[0].values
    for f in factors[1:]:
        layout = layout.concat(f.layout)  # raises on duplicate ids
        size = f.layout.size
        keys = (keys[:, None] * size + f.keys[None, :]).ravel()
        values = (values[:, None] * f.values[None, :]).ravel()
    return SparseState.from_arrays(layout, keys, values)


def inner_product(x: SparseState, y: SparseState) -> complex:
    """<x|y>, conjugate-linear in x."""
    _require_same_layout(x, y)
    common, ix, iy = np.intersect1d(x.keys, y.keys, assume_unique=True, return_indices=True)
    if common.size == 0:
        return 0j
    return complex(np.dot(x.values[ix].conj(), y.values[iy]))


def gram_matrix(states: Sequence[SparseState]) -> np.ndarray:
    if not states:
        return np.zeros((0, 0), dtype=np.complex128)
    for s in states[1:]:
        _require_same_layout(states[0], s)
    ptr = np.zeros(len(states) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([s.nnz for s in states])
    keys = np.ascontiguousarray(np.concatenate([s.keys for s in states]), dtype=np.int64)
    vals = np.ascontiguousarray(np.concatenate([s.values for s in states]), dtype=np.complex128)
    return kernels.gram(ptr, keys, vals)


def max_normalized_overlap(states: Sequence[SparseState]) -> tuple[float, tuple[int, int] | None]:
    """Largest |<x|y>|/(|x||y|) over distinct pairs, with the offending pair."""
    if len(states) < 2:
        return 0.0, None
    g = gram_matrix(states)
    norms = np.sqrt(np.clip(np.diag(g).real, 0.0, None))
    norms[norms == 0] = 1.0
    ov = np.abs(g) / np.outer(norms, norms)
    np.fill_diagonal(ov, 0.0)
    flat = int(np.argmax(ov))
    a, b = divmod(flat, len(states))
    return float(ov[a, b]), (min(a, b), max(a, b))


@dataclass(frozen=True)
class DiagonalProjector:
    """Sum of projectors onto unions of computational basis patterns.

    Each pattern maps register ids to the allowed index set on that register;
    registers absent from a pattern are unconstrained.
    """

    patterns: tuple[Mapping[str, frozenset[int]], ...]

    @classmethod
    def build(cls, *patterns: Mapping[str, Iterable[int]]) -> "DiagonalProjector":
        return cls(tuple({k: frozenset(v) for k, v in sorted(p.items())} for p in patterns))

    @classmethod
    def identity(cls) -> "DiagonalProjector":
        return cls(({},))

    @property
    def registers(self) -> frozenset[str]:
        return frozenset(name for p in self.patterns for name in p)

    def tables(self, layout: Layout) -> np.ndarray:
        maxdim = max(layout.dims) if len(layout) else 1
        out = np.zeros((max(len(self.patterns), 1), len(layout), maxdim), dtype=np.uint8)
        if not self.patterns:
            return out[:0]
        for p, pattern in enumerate(self.patterns):
            for r, reg in enumerate(layout.registers):
                allowed = pattern.get(reg.name)
                if allowed is None:
                    out[p, r, : reg.dim] = 1
                else:
                    for v in allowed:
                        if 0 <= v < reg.dim:
                            out[p, r, v] = 1
        return out

    def mask(self, layout: Layout, keys: np.ndarray) -> np.ndarray:
        missing = self.registers - set(layout.names)
        if missing:
            raise LayoutError(f"projector references registers {sorted(missing)} absent from layout")
        if keys.size == 0 or not self.patterns:
            return np.zeros(keys.size, dtype=bool)
        m = kernels.pattern_mask(
            np.ascontiguousarray(keys, dtype=np.int64),
            layout.strides(),
            np.asarray(layout.dims, dtype=np.int64),
            self.tables(layout),
        )
        return np.asarray(m, dtype=bool)

    def relabel(self, register: str, perm: Mapping[int, int]) -> "DiagonalProjector":
        """Map allowed values on one register through ``perm``."""
        out = []
        for p in self.patterns:
            q = dict(p)
            if register in q:
                q[register] = frozenset(perm.get(v, v) for v in q[register])
            out.append(q)
        return DiagonalProjector(tuple(out))

    def describe(self) -> str:
        terms = []
        for p in self.patterns:
            if not p:
                terms.append("I")
                continue
            parts = []
            for name, vals in p.items():
                vs = sorted(vals)
                parts.append(f"{','.join(map(str, vs))}_{name}" if len(vs) != 1 else f"{vs[0]}_{name}")
            terms.append("P[" + "; ".join(parts) + "]")
        return " + ".join(terms) if terms else "0"


def apply_projector(s: SparseState, p: DiagonalProjector) -> tuple[SparseState, float]:
    """Filter ``s`` onto the projector's support; weight = |Ps|^2 / |s|^2."""
    keep = p.mask(s.layout, s.keys)
    out = SparseState(s.layout, s.keys[keep], s.values[keep])
    total = s.norm_sq()
    weight = out.norm_sq() / total if total > 0 else 0.0
    if weight <= PRUNE_TOL:
        return SparseState.empty(s.layout), 0.0
    return out, weight


def dft_matrix(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("dft_matrix needs n >= 1")
    r = np.arange(n)
    return np.exp(2j * np.pi * np.outer(r, r) / n) / math.sqrt(n)


def windowed_dft(dim: int, window: Sequence[int]) -> np.ndarray:
    """DFT on the given index window, identity elsewhere (columns = basis vectors)."""
    u = np.eye(dim, dtype=np.complex128)
    w = list(window)
    f = dft_matrix(len(w))
    u[np.ix_(w, w)] = f
    return u


def root_of_unity(n: int, power: int) -> complex:
    return cmath.exp(2j * math.pi * (power % n) / n)


def check_unitary(u: np.ndarray, tol: float = ORTH_TOL) -> None:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise NonUnitaryError(f"matrix of shape {u.shape} is not square")
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=tol):
        raise NonUnitaryError("matrix is not unitary within tolerance")


def apply_local_basis(s: SparseState, reg: str, unitary) -> SparseState:
    """Apply ``unitary`` (acting as U|v> = column v) to one register."""
    u = np.asarray(unitary, dtype=np.complex128)
    pos = s.layout.position(reg)
    dim = s.layout.dims[pos]
    if u.shape != (dim, dim):
        raise NonUnitaryError(f"matrix shape {u.shape} does not match register dimension {dim}")
    check_unitary(u)
    if s.nnz == 0:
        return s
    stride = int(s.layout.strides()[pos])
    digit = (s.keys // stride) % dim
    base = s.keys - digit * stride
    # Each stored entry spreads over the nonzero rows of its column.
    rows, cols = np.nonzero(np.abs(u) > PRUNE_TOL)
    by_col = [rows[cols == c] for c in range(dim)]
    new_keys, new_vals = [], []
    for c in range(dim):
        sel = digit == c
        if not np.any(sel) or by_col[c].size == 0:
            continue
        r = by_col[c]
        new_keys.append((base[sel][:, None] + r[None, :] * stride).ravel())
        new_vals.append((s.values[sel][:, None] * u[r, c][None, :]).ravel())
    return SparseState.from_arrays(s.layout, np.concatenate(new_keys), np.concatenate(new_vals))


def measurement_distribution(s: SparseState, bases: Mapping[str, np.ndarray]) -> dict[tuple, float]:
    """Outcome probabilities when each named register is measured in the given basis.

    Column ``v`` of ``bases[reg]`` is the basis vector for outcome ``v``;
    registers not named are measured in the computational basis.
    """
    t = s
    for reg, u in bases.items():
        t = apply_local_basis(t, reg, np.asarray(u).conj().T)
    total = t.norm_sq()
    if total == 0:
        return {}
    probs = np.abs(t.values) ** 2 / total
    idx = t.digits()
    return {tuple(int(v) for v in row): float(p) for row, p in zip(idx, probs) if p > PRUNE_TOL}
