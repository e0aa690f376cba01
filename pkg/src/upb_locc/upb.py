"""Layered strongly nonlocal UPB in d x d x d and its structural checks."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .tensor import (
    ORTH_TOL,
    Layout,
    Register,
    SparseState,
    ket,
    max_normalized_overlap,
    root_of_unity,
    tensor_product,
)

SCHEMA_VERSION = 1

FAMILIES = ("A", "B", "Amiddle", "Stopper")


def ceil_half(d: int) -> int:
    return -(-d // 2)


def num_layers(d: int) -> int:
    """Number of shells k = 0 .. ceil(d/2) - 2."""
    return ceil_half(d) - 1


@dataclass(frozen=True, order=True)
class SubsetLabel:
    family: str
    position: int | None = None
    layer: int | None = None
    params: tuple[int, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family in ("A", "B"):
            if self.position not in (1, 2, 3) or self.layer is None or self.layer < 0:
                raise ValueError(f"bad A/B label {self}")
        if self.params and all(p == 0 for p in self.params):
            raise ValueError("the all-zero parameter tuple is excluded")

    @property
    def subset(self) -> "SubsetLabel":
        """The label with per-state parameters dropped."""
        return SubsetLabel(self.family, self.position, self.layer)

    @property
    def is_stopper(self) -> bool:
        return self.family == "Stopper"

    def __str__(self):
        if self.family == "Stopper":
            return "S"
        if self.family == "Amiddle":
            base = "A0"
        else:
            base = f"{self.family}{self.position}[k={self.layer}]"
        if self.params:
            base += "(" + ",".join(map(str, self.params)) + ")"
        return base

    @classmethod
    def parse(cls, text: str) -> "SubsetLabel":
        params: tuple[int, ...] = ()
        if text.endswith(")"):
            text, _, p = text[:-1].partition("(")
            params = tuple(int(v) for v in p.split(","))
        if text == "S":
            return cls("Stopper")
        if text == "A0":
            return cls("Amiddle", params=params)
        fam, pos = text[0], int(text[1])
        layer = int(text[text.index("k=") + 2 : text.index("]")])
        return cls(fam, pos, layer, params)


@dataclass(frozen=True)
class LabeledState:
    label: SubsetLabel
    state: SparseState


@dataclass(frozen=True)
class UPBSet:
    d: int
    states: tuple[LabeledState, ...]

    def __len__(self):
        return len(self.states)

    def __iter__(self) -> Iterator[LabeledState]:
        return iter(self.states)

    def subsets(self) -> list[SubsetLabel]:
        seen: dict[SubsetLabel, None] = {}
        for s in self.states:
            seen.setdefault(s.label.subset)
        return list(seen)

    def dense(self) -> np.ndarray:
        """Rows are the (unnormalized) states as dense d^3 vectors."""
        out = np.zeros((len(self.states), self.d**3), dtype=np.complex128)
        for r, s in enumerate(self.states):
            out[r, s.state.keys] = s.state.values
        return out


def _check_layer(d: int, k: int):
    if d < 3:
        raise ValueError("d must be >= 3")
    if not 0 <= k <= ceil_half(d) - 2:
        raise ValueError(f"layer k={k} out of range for d={d}")


def eta_window(d: int, k: int) -> range:
    return range(k, d - 1 - k)


def xi_window(d: int, k: int) -> range:
    return range(k + 1, d - k)


def _fourier_ket(d: int, k: int, i: int, shift: int, name: str, owner: str) -> SparseState:
    _check_layer(d, k)
    n = d - 1 - 2 * k
    if not 0 <= i < n:
        raise ValueError(f"index {i} out of range Z_{n}")
    amps = {t + shift: root_of_unity(n, i * (t - k)) for t in range(k, d - 1 - k)}
    return ket(name, d, owner, amps)


def eta(d: int, k: int, i: int, name: str = "A", owner: str = "Alice") -> SparseState:
    """sum_{t=k}^{d-2-k} w^{i(t-k)} |t>, w = exp(2 pi i / (d-1-2k))."""
    return _fourier_ket(d, k, i, 0, name, owner)


def xi(d: int, k: int, j: int, name: str = "A", owner: str = "Alice") -> SparseState:
    """Same window shifted up by one: support [k+1, d-1-k]."""
    return _fourier_ket(d, k, j, 1, name, owner)


def phi(d: int, r: int, name: str = "A", owner: str = "Alice") -> SparseState:
    if d % 2:
        raise ValueError("phi is defined only for even d")
    return ket(name, d, owner, {(d - 2) // 2: 1.0, d // 2: (-1.0) ** r})


def cardinality(d: int) -> int:
    if d < 3:
        raise ValueError("d must be >= 3")
    return d**3 - 8 * ceil_half(d - 2)


PARTIES = (("A", "Alice"), ("B", "Bob"), ("C", "Charlie"))


def upb_layout(d: int) -> Layout:
    return Layout(tuple(Register(n, d, o) for n, o in PARTIES))


def _layer_states(d: int, k: int) -> list[LabeledState]:
    n = d - 1 - 2 * k
    lo, hi = k, d - 1 - k

    def comp(v):
        return lambda name, owner: ket(name, d, owner, {v: 1.0})

    def et(i):
        return lambda name, owner: eta(d, k, i, name, owner)

    def x(j):
        return lambda name, owner: xi(d, k, j, name, owner)

    # (family, position) -> factor builders for (A, B, C), given (i, j)
    table = {
        ("A", 1): lambda i, j: (x(j), comp(lo), et(i)),
        ("A", 2): lambda i, j: (x(j), et(i), comp(hi)),
        ("A", 3): lambda i, j: (comp(hi), x(j), et(i)),
        ("B", 1): lambda i, j: (et(i), comp(hi), x(j)),
        ("B", 2): lambda i, j: (et(i), x(j), comp(lo)),
        ("B", 3): lambda i, j: (comp(lo), et(i), x(j)),
    }
    out = []
    for (fam, pos), build in table.items():
        for i in range(n):
            for j in range(n):
                if i == 0 and j == 0:
                    continue
                factors = [f(name, owner) for f, (name, owner) in zip(build(i, j), PARTIES)]
                out.append(LabeledState(SubsetLabel(fam, pos, k, (i, j)), tensor_product(factors)))
    return out


def stopper(d: int) -> SparseState:
    gamma = {v: 1.0 for v in range(d)}
    return tensor_product([ket(name, d, owner, gamma) for name, owner in PARTIES])


def build_upb(d: int) -> UPBSet:
    if d < 3:
        raise ValueError("d must be >= 3")
    states: list[LabeledState] = []
    for k in range(num_layers(d)):
        states.extend(_layer_states(d, k))
    if d % 2 == 0:
        for r in range(2):
            for s in range(2):
                for t in range(2):
                    if r == s == t == 0:
                        continue
                    factors = [phi(d, v, name, owner) for v, (name, owner) in zip((r, s, t), PARTIES)]
                    states.append(
                        LabeledState(SubsetLabel("Amiddle", params=(r, s, t)), tensor_product(factors))
                    )
    states.append(LabeledState(SubsetLabel("Stopper"), stopper(d)))
    return UPBSet(d, tuple(states))


@dataclass(frozen=True)
class OrthogonalityReport:
    max_overlap: float
    pair: tuple[str, str] | None

    @property
    def passed(self) -> bool:
        return self.max_overlap < ORTH_TOL


def verify_orthogonality(upb: UPBSet) -> OrthogonalityReport:
    ov, pair = max_normalized_overlap([s.state for s in upb.states])
    labels = None
    if pair is not None and ov >= ORTH_TOL:
        labels = (str(upb.states[pair[0]].label), str(upb.states[pair[1]].label))
    return OrthogonalityReport(ov, labels)


def gram_schmidt_rank(vectors: np.ndarray, tol: float = ORTH_TOL) -> tuple[int, np.ndarray]:
    """Rank and orthonormal basis by Gram-Schmidt, projecting out the basis twice per vector.

    A vector counts as independent when its residual norm exceeds ``tol``
    times its original norm.
    """
    rows = np.asarray(vectors, dtype=np.complex128)
    q = np.zeros((min(rows.shape), rows.shape[1]), dtype=np.complex128)
    rank = 0
    for v in rows:
        norm0 = np.linalg.norm(v)
        if norm0 == 0:
            continue
        w = v / norm0
        for _ in range(2):
            w = w - (q[:rank].conj() @ w) @ q[:rank]
        nw = np.linalg.norm(w)
        if nw > tol:
            q[rank] = w / nw
            rank += 1
            if rank == q.shape[0]:
                break
    return rank, q[:rank].copy()


def span_rank(upb: UPBSet) -> int:
    return gram_schmidt_rank(upb.dense())[0]


def complement_dimension(upb: UPBSet) -> int:
    return upb.d**3 - span_rank(upb)


def complement_basis(vectors: np.ndarray, tol: float = ORTH_TOL) -> np.ndarray:
    """Orthonormal basis (rows) of the orthogonal complement of the rows' span."""
    vectors = np.asarray(vectors, dtype=np.complex128)
    dim = vectors.shape[1]
    rank, q = gram_schmidt_rank(vectors, tol)
    if rank == dim:
        return np.zeros((0, dim), dtype=np.complex128)
    # Continue Gram-Schmidt through the computational basis.
    _, full = gram_schmidt_rank(np.vstack([q, np.eye(dim, dtype=np.complex128)]), tol)
    return full[rank:]


# -- serialization ---------------------------------------------------------


def _state_records(s: SparseState) -> list:
    return [[list(idx), float(a.real), float(a.imag)] for idx, a in s.amplitudes.items()]


def upb_to_text(upb: UPBSet) -> str:
    doc = {
        "schema": SCHEMA_VERSION,
        "kind": "upb",
        "d": upb.d,
        "count": len(upb),
        "states": [{"label": str(s.label), "amplitudes": _state_records(s.state)} for s in upb.states],
    }
    return json.dumps(doc, indent=1) + "\n"


def upb_from_text(text: str) -> UPBSet:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA_VERSION or doc.get("kind") != "upb":
        raise ValueError("unsupported state-set file")
    d = int(doc["d"])
    layout = upb_layout(d)
    states = []
    for rec in doc["states"]:
        amps = {tuple(idx): complex(re, im) for idx, re, im in rec["amplitudes"]}
        states.append(LabeledState(SubsetLabel.parse(rec["label"]), SparseState.from_dict(layout, amps)))
    if len(states) != int(doc["count"]):
        raise ValueError("record count does not match header")
    return UPBSet(d, tuple(states))


def subset_counts(upb: UPBSet) -> dict[SubsetLabel, int]:
    out: dict[SubsetLabel, int] = {}
    for s in upb.states:
        out[s.label.subset] = out.get(s.label.subset, 0) + 1
    return out


def layer_population(d: int, m: int) -> int:
    """Elements that live in layers >= m, counting A^(d,0) and the stopper."""
    total = sum(6 * ((d - 1 - 2 * k) ** 2 - 1) for k in range(m, num_layers(d)))
    return total + (7 if d % 2 == 0 else 0) + 1


def describe(states: Sequence[LabeledState]) -> str:
    return ", ".join(str(s.label) for s in states)

