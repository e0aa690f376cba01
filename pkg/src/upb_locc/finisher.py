"""Exact-state identification inside a leaf.

The search works in two phases.

1. Ancilla release. A shared resource whose registers all carry the same
   value ``v = f(R)`` on every survivor, where ``R`` is a data register held
   by one of the resource's labs, is removed: the holder of ``R`` uncomputes
   its own copy, the other holders measure theirs in the Fourier basis and
   broadcast the outcome, and the holder of ``R`` undoes the phase
   ``w * f(R)``. The survivors' data amplitudes are unchanged.
2. Basis search over a fixed catalog (computational, windowed DFTs, full
   DFT on leftover ancillas), with at most two adaptive rounds per lab. A
   strategy is accepted when no two non-stopper survivors can produce the
   same outcome record.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .engine import Candidate, Leaf
from .tensor import ORTH_TOL, PRUNE_TOL, Layout, dft_matrix, max_normalized_overlap, windowed_dft
from .upb import num_layers

DATA = ("A", "B", "C")
MAX_ROUNDS = 2


@dataclass(frozen=True)
class Step:
    """One lab measures some registers; ``then`` maps outcome records to the follow-up."""

    lab: str
    bases: tuple[tuple[str, str], ...]
    then: tuple[tuple[tuple[int, ...], "Step | None"], ...] = ()

    def describe(self, indent: int = 0) -> list[str]:
        pad = "  " * indent
        what = ", ".join(f"{r} in {b}" for r, b in self.bases)
        lines = [f"{pad}{self.lab}: {what}"]
        for rec, nxt in self.then:
            if nxt is not None:
                lines.append(f"{pad}  on {rec}:")
                lines.extend(nxt.describe(indent + 2))
        return lines


@dataclass
class FinisherResult:
    resolved: bool
    released: list[str] = field(default_factory=list)
    strategy: Step | None = None
    stopper_collisions: list[str] = field(default_factory=list)
    diagnostics: str = ""

    @property
    def status(self) -> str:
        return "resolved" if self.resolved else "Unresolved"

    def describe(self) -> str:
        parts = [self.status]
        if self.released:
            parts.append("release " + "; ".join(self.released))
        if self.strategy is not None:
            parts.append(" / ".join(s.strip() for s in self.strategy.describe()))
        elif self.resolved:
            parts.append("empty strategy")
        if self.stopper_collisions:
            parts.append("stopper shares records with " + ", ".join(self.stopper_collisions))
        if self.diagnostics:
            parts.append(self.diagnostics)
        return "; ".join(parts)


# -- catalog -------------------------------------------------------------------


def basis_catalog(dim: int, data: bool) -> dict[str, np.ndarray]:
    """Named bases (columns are basis vectors) for one register."""
    out = {"comp": np.eye(dim, dtype=np.complex128)}
    if data and dim >= 3:
        for k in range(num_layers(dim)):
            out[f"eta[{k}]"] = windowed_dft(dim, range(k, dim - 1 - k))
            out[f"xi[{k}]"] = windowed_dft(dim, range(k + 1, dim - k))
        if dim % 2 == 0:
            out["mid"] = windowed_dft(dim, range(dim // 2 - 1, dim // 2 + 1))
    elif not data:
        out["dft"] = dft_matrix(dim)
    return out


# -- release -------------------------------------------------------------------


def _entries(cands: Sequence[Candidate]):
    """Nonzero amplitudes of all survivors as (row, digits, value) arrays."""
    rows = np.concatenate([np.full(c.state.nnz, i, dtype=np.int64) for i, c in enumerate(cands)])
    dig = np.concatenate([c.state.digits() for c in cands])
    vals = np.concatenate([c.state.values for c in cands])
    return rows, dig, vals


def _dense(rows, dig, vals, n: int, dims: Sequence[int]) -> np.ndarray:
    out = np.zeros((n,) + tuple(dims), dtype=np.complex128)
    out[(rows,) + tuple(dig.T)] = vals
    return out


def _try_release(dig: np.ndarray, names: list[str], owners: list[str], group: Sequence[str]):
    """If every group register equals f(R) for one data register R, drop the group's columns."""
    gpos = [names.index(g) for g in group]
    glabs = {owners[p] for p in gpos}
    vals = dig[:, gpos]
    if not np.all(vals == vals[:, :1]):
        return None
    v = vals[:, 0]
    for reg in DATA:
        if reg not in names or owners[names.index(reg)] not in glabs:
            continue
        pairs = np.unique(np.stack([dig[:, names.index(reg)], v], axis=1), axis=0)
        if len(np.unique(pairs[:, 0])) != len(pairs):
            continue
        keep = [i for i in range(len(names)) if i not in gpos]
        holder = owners[names.index(reg)]
        others = sorted(glabs - {holder})
        desc = f"{'/'.join(group)} via {reg} ({holder} uncomputes, {', '.join(others) or 'nobody'} Fourier-measures)"
        return dig[:, keep], [names[i] for i in keep], [owners[i] for i in keep], desc
    return None


def _resource_groups(names, owners, dims, dig) -> list[tuple[str, ...]]:
    """Ancillas split into resources: consecutive registers on distinct labs carrying equal values."""
    groups: list[list[str]] = []
    for i, name in enumerate(names):
        if name in DATA:
            continue
        if groups:
            g = groups[-1]
            j = names.index(g[0])
            if (
                dims[j] == dims[i]
                and owners[i] not in {owners[names.index(x)] for x in g}
                and np.array_equal(dig[:, j], dig[:, i])
            ):
                g.append(name)
                continue
        groups.append([name])
    return [tuple(g) for g in groups]


# -- search --------------------------------------------------------------------


def _outcome_split(t: np.ndarray, axes: Sequence[int], bases: Sequence[np.ndarray]):
    """Rotate the given axes into the measured bases; returns tensor with outcome axes in place."""
    out = t
    for ax, u in zip(axes, bases):
        out = np.moveaxis(np.tensordot(out, u.conj(), axes=([ax], [0])), -1, ax)
    return out


def _records(t: np.ndarray, axes: Sequence[int]) -> list[set[tuple[int, ...]]]:
    """Per survivor: set of outcome tuples on ``axes`` with nonzero probability."""
    other = tuple(a for a in range(1, t.ndim) if a not in axes)
    p = (np.abs(t) ** 2).sum(axis=other) if other else np.abs(t) ** 2
    # what remains are the measured axes in increasing order; restore the requested order
    ranked = sorted(axes)
    p = np.transpose(p, [0] + [1 + ranked.index(ax) for ax in axes])
    total = p.reshape(len(p), -1).sum(1)
    out = []
    for i in range(len(p)):
        if total[i] <= 0:
            out.append(set())
        else:
            out.append({tuple(int(x) for x in idx) for idx in np.argwhere(p[i] / total[i] > PRUNE_TOL)})
    return out


def _orthogonal(t: np.ndarray) -> bool:
    if len(t) < 2:
        return True
    flat = t.reshape(len(t), -1)
    norms = np.linalg.norm(flat, axis=1)
    live = norms > 1e-12
    flat = flat[live] / norms[live, None]
    g = np.abs(flat.conj() @ flat.T)
    np.fill_diagonal(g, 0)
    return bool(g.max(initial=0.0) < ORTH_TOL)


class _Search:
    def __init__(self, names, owners, is_stopper, dims):
        self.names = names
        self.owners = owners
        self.is_stopper = np.asarray(is_stopper, dtype=bool)
        self.catalogs = {n: basis_catalog(d, n in DATA) for n, d in zip(names, dims)}

    def labs(self):
        return sorted(set(self.owners), key=lambda x: ("Alice", "Bob", "Charlie").index(x) if x in ("Alice", "Bob", "Charlie") else 9)

    def solve(self, t: np.ndarray, live: np.ndarray, todo: frozenset[str], rounds: Mapping[str, int]):
        subject = live & ~self.is_stopper
        if subject.sum() <= 1:
            return True, None
        if not todo:
            return False, None
        for lab in self.labs():
            if rounds.get(lab, 0) >= MAX_ROUNDS:
                continue
            regs = [n for n in self.names if n in todo and self.owners[self.names.index(n)] == lab]
            ranked = {r: self._ranked(t, live, r) for r in regs}
            for size in range(len(regs), 0, -1):
                for chosen in itertools.combinations(regs, size):
                    for combo in itertools.product(*(ranked[r] for r in chosen)):
                        res = self._attempt(t, live, todo, rounds, lab, chosen, combo)
                        if res is not None:
                            return True, res
        return False, None

    def _ranked(self, t, live, reg):
        """Catalog entries for ``reg``, most survivors with a sure outcome first."""
        ax = self.names.index(reg) + 1
        subject = np.flatnonzero(live & ~self.is_stopper)
        scored = []
        for pos, (name, u) in enumerate(self.catalogs[reg].items()):
            recs = _records(_outcome_split(t[subject], [ax], [u]), [ax])
            sure = sum(len(r) == 1 for r in recs)
            scored.append((-sure, pos, name, u))
        scored.sort(key=lambda x: x[:2])
        return [(name, u) for _, _, name, u in scored]

    def _attempt(self, t, live, todo, rounds, lab, chosen, combo):
        axes = [self.names.index(r) + 1 for r in chosen]
        rot = _outcome_split(t, axes, [u for _, u in combo])
        recs = _records(rot, axes)
        subject = np.flatnonzero(live & ~self.is_stopper)
        outcomes = sorted(set().union(*(recs[i] for i in subject)))
        # must split the candidates somewhere
        if all(all(o in recs[i] for i in subject) for o in outcomes):
            return None
        rest = todo - set(chosen)
        new_rounds = dict(rounds)
        new_rounds[lab] = new_rounds.get(lab, 0) + 1
        then = []
        for o in outcomes:
            sel = [slice(None)] * rot.ndim
            mask = np.zeros_like(rot, dtype=bool)
            for ax, v in zip(axes, o):
                sel[ax] = v
            mask[tuple(sel)] = True
            sub = np.where(mask, rot, 0)
            alive = live & np.array([o in r for r in recs])
            if not _orthogonal(sub[alive & ~self.is_stopper]):
                return None
            ok, nxt = self.solve(sub, alive, rest, new_rounds)
            if not ok:
                return None
            then.append((o, nxt))
        return Step(lab, tuple((r, name) for r, (name, _) in zip(chosen, combo)), tuple(then))


def _stopper_collisions(t, names, is_stopper, labels, step: Step | None) -> list[str]:
    """Labels of non-stopper survivors whose full outcome records can coincide with the stopper's."""
    if not any(is_stopper):
        return []
    if step is None:
        return [lbl for lbl, s in zip(labels, is_stopper) if not s]
    hits: set[str] = set()

    def walk(t, live, step):
        if step is None:
            si = [i for i in np.flatnonzero(live) if is_stopper[i]]
            if si:
                hits.update(labels[i] for i in np.flatnonzero(live) if not is_stopper[i])
            return
        axes = [names.index(r) + 1 for r, _ in step.bases]
        cat = {r: basis_catalog(t.shape[names.index(r) + 1], r in DATA) for r, _ in step.bases}
        rot = _outcome_split(t, axes, [cat[r][b] for r, b in step.bases])
        recs = _records(rot, axes)
        for o, nxt in step.then:
            sel = [slice(None)] * rot.ndim
            for ax, v in zip(axes, o):
                sel[ax] = v
            mask = np.zeros_like(rot, dtype=bool)
            mask[tuple(sel)] = True
            walk(np.where(mask, rot, 0), live & np.array([o in r for r in recs]), nxt)

    walk(t, np.array([bool(np.any(np.abs(x) > PRUNE_TOL)) for x in t]), step)
    return sorted(hits)


def leaf_finisher(survivors: Sequence[Candidate], layout: Layout, leaf: Leaf | None = None) -> FinisherResult:
    """Search for local measurements giving every survivor a distinct outcome record."""
    subject = [c for c in survivors if not c.label.is_stopper]
    if len(subject) <= 1:
        coll = [str(c.label) for c in subject] if len(subject) == 1 and len(survivors) > 1 else []
        return FinisherResult(True, stopper_collisions=coll)
    is_stopper = [c.label.is_stopper for c in survivors]
    labels = [str(c.label) for c in survivors]
    ov, _ = max_normalized_overlap([c.state for c in subject])
    if ov >= ORTH_TOL:
        return FinisherResult(False, diagnostics="survivors are not pairwise orthogonal")
    names = list(layout.names)
    owners = [layout.owner(n) for n in names]
    dims = list(layout.dims)
    rows, dig, vals = _entries(survivors)
    stop = np.asarray(is_stopper)
    sub = ~stop[rows]
    track_stopper = bool(stop.any())
    released, notes = [], []
    for group in _resource_groups(names, owners, dims, dig[sub]):
        got = _try_release(dig[sub], names, owners, group)
        if got is None:
            continue
        if track_stopper:
            full = _try_release(dig, names, owners, group)
            if full is None or full[3] != got[3]:
                # the release is exact for the subset states only
                track_stopper = False
                notes.append("stopper residual not tracked after release")
        if not track_stopper:
            rows, vals, dig = rows[sub], vals[sub], dig[sub]
            sub = np.ones(len(rows), dtype=bool)
        keep = [i for i, n in enumerate(names) if n not in group]
        dig, names, owners, dims = dig[:, keep], got[1], got[2], [dims[i] for i in keep]
        released.append(got[3])
    if not track_stopper and stop.any():
        old = np.flatnonzero(~stop)
        remap = {int(o): i for i, o in enumerate(old)}
        rows = np.array([remap[int(r)] for r in rows], dtype=np.int64)
        is_stopper = [False] * len(old)
        labels = [labels[int(o)] for o in old]
    t = _dense(rows, dig, vals, len(is_stopper), dims)
    search = _Search(names, owners, is_stopper, list(t.shape[1:]))
    ok, step = search.solve(t, np.ones(len(t), dtype=bool), frozenset(names), {})
    if not ok:
        left = [n for n in names if n not in DATA]
        why = "no catalog strategy within two rounds per lab"
        if left:
            why += f"; ancillas still entangled: {', '.join(left)}"
        return FinisherResult(False, released, diagnostics="; ".join([why] + notes))
    coll = _stopper_collisions(t, names, is_stopper, labels, step)
    return FinisherResult(True, released, step, coll, "; ".join(notes))
