"""Branching simulation of LOCC protocols built from diagonal projective stages.

A protocol is a finite tree of nodes:

* :class:`Attach` appends a shared maximally entangled resource,
* :class:`Teleport` hands a register to another lab (ownership change plus
  a ledger debit; no Bell measurement is simulated),
* :class:`Measure` applies a local :class:`POVMStage` and routes each outcome,
* :class:`Leaf` names the subsets a branch may end in.

All candidate states are propagated together so every child can be checked
for orthogonality preservation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .tensor import (
    ORTH_TOL,
    PRUNE_TOL,
    DiagonalProjector,
    Layout,
    LayoutError,
    Register,
    SparseState,
    max_normalized_overlap,
    tensor_product,
)
from .upb import LabeledState, SubsetLabel, UPBSet

PROB_TOL = 1e-9


class ProtocolError(ValueError):
    """Malformed protocol tree or illegal resource use."""


# -- resources ---------------------------------------------------------------


@dataclass(frozen=True)
class ResourceSpec:
    kind: str  # "bipartite" or "tripartite"
    dim: int
    parties: tuple[str, ...]
    registers: tuple[str, ...]
    count: float = 1.0

    def __post_init__(self):
        expected = {"bipartite": 2, "tripartite": 3}.get(self.kind)
        if expected is None:
            raise ProtocolError(f"unknown resource kind {self.kind!r}")
        if len(self.parties) != expected or len(self.registers) != expected:
            raise ProtocolError(f"{self.kind} resource needs {expected} parties and registers")
        if self.dim < 1:
            raise ProtocolError("resource dimension must be >= 1")

    @classmethod
    def epr(cls, dim: int, regs: tuple[str, str], labs: tuple[str, str]) -> "ResourceSpec":
        return cls("bipartite", dim, labs, regs)

    @property
    def ebits(self) -> float | None:
        """log2(dim) per copy for bipartite states; tripartite states carry no ebit figure."""
        if self.kind == "tripartite":
            return None
        return self.count * math.log2(self.dim)

    def layout(self) -> Layout:
        return Layout(tuple(Register(r, self.dim, p) for r, p in zip(self.registers, self.parties)))

    def ket(self) -> SparseState | None:
        """sum_r |r...r> (unnormalized); None for the trivial dimension-1 resource."""
        if self.dim == 1:
            return None
        layout = self.layout()
        amps = {(r,) * len(self.registers): 1.0 for r in range(self.dim)}
        return SparseState.from_dict(layout, amps)

    def describe(self) -> str:
        regs = "".join(self.registers)
        return f"phi+({self.dim})_{regs} [{'-'.join(p[0] for p in self.parties)}]"


@dataclass(frozen=True)
class LedgerEntry:
    kind: str  # "resource" or "teleport"
    description: str
    ebits: float | None
    epr_pairs: int = 0
    wasteful: bool = False


# -- stages ------------------------------------------------------------------


@dataclass(frozen=True)
class POVMStage:
    lab: str
    outcomes: tuple[tuple[str, DiagonalProjector], ...]
    name: str = ""
    step: str = ""

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.outcomes)

    @property
    def registers(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for _, p in self.outcomes:
            out |= p.registers
        return out

    def relabel(self, register: str, perm: Mapping[int, int]) -> "POVMStage":
        return POVMStage(
            self.lab,
            tuple((lbl, p.relabel(register, perm)) for lbl, p in self.outcomes),
            self.name,
            self.step,
        )


def complement(projectors: Iterable[DiagonalProjector], dims: Mapping[str, int]) -> DiagonalProjector:
    """I minus the given projectors, over the registers they reference.

    Returned as a union of single-tuple patterns; ``dims`` gives register
    dimensions.
    """
    projectors = list(projectors)
    regs = sorted(frozenset().union(*(p.registers for p in projectors))) if projectors else []
    if not regs:
        return DiagonalProjector(())
    covered = _coverage(projectors, regs, dims)
    patterns = []
    for tup, hits in covered.items():
        if hits == 0:
            patterns.append({r: frozenset([v]) for r, v in zip(regs, tup)})
    return DiagonalProjector(tuple(patterns))


def _coverage(projectors, regs, dims) -> dict[tuple[int, ...], int]:
    out = {}
    for tup in itertools.product(*(range(dims[r]) for r in regs)):
        point = dict(zip(regs, tup))
        hits = 0
        for p in projectors:
            for pat in p.patterns:
                if all(point[r] in allowed for r, allowed in pat.items()):
                    hits += 1
        out[tup] = hits
    return out


@dataclass(frozen=True)
class StageCheck:
    stage: str
    lab: str
    complete: bool
    local: bool
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.complete and self.local


def check_stage(stage: POVMStage, layout: Layout) -> StageCheck:
    """Completeness (patterns tile the local basis exactly once) and locality."""
    label = stage.name or "stage"
    for reg in sorted(stage.registers):
        if reg not in layout:
            return StageCheck(label, stage.lab, False, False, f"register {reg} absent from layout")
        owner = layout.owner(reg)
        if owner != stage.lab:
            return StageCheck(
                label, stage.lab, True, False, f"register {reg} is owned by {owner}, not {stage.lab}"
            )
    regs = sorted(stage.registers)
    if not regs:
        # Only a single identity outcome is complete without registers.
        ok = sum(len(p.patterns) for _, p in stage.outcomes) == 1 and all(
            pat == {} for _, p in stage.outcomes for pat in p.patterns
        )
        return StageCheck(label, stage.lab, ok, True, "" if ok else "trivial stage is not the identity")
    dims = {r: layout.register(r).dim for r in regs}
    cover = _coverage([p for _, p in stage.outcomes], regs, dims)
    for tup, hits in cover.items():
        if hits != 1:
            where = ", ".join(f"{r}={v}" for r, v in zip(regs, tup))
            what = "uncovered" if hits == 0 else f"covered {hits} times"
            return StageCheck(label, stage.lab, False, True, f"basis index ({where}) {what}")
    return StageCheck(label, stage.lab, True, True)


# -- protocol tree -----------------------------------------------------------


class Node:
    step: str = ""


@dataclass(eq=False)
class Leaf(Node):
    expected: frozenset[SubsetLabel]
    name: str = ""
    step: str = ""


@dataclass(eq=False)
class Attach(Node):
    resource: ResourceSpec
    child: Node
    step: str = ""


@dataclass(eq=False)
class Teleport(Node):
    register: str
    to_lab: str
    dim: int
    child: Node
    step: str = ""


@dataclass(eq=False)
class Measure(Node):
    stage: POVMStage
    children: tuple[tuple[str, Node], ...]
    step: str = ""

    def __post_init__(self):
        if tuple(lbl for lbl, _ in self.children) != self.stage.labels:
            raise ProtocolError(f"{self.stage.name}: children do not match outcomes {self.stage.labels}")


def relabel_tree(node: Node, register: str, perm: Mapping[int, int], memo: dict | None = None) -> Node:
    """Copy of a subtree with every pattern on ``register`` mapped through ``perm``."""
    memo = {} if memo is None else memo
    if id(node) in memo:
        return memo[id(node)]
    if isinstance(node, Leaf):
        out: Node = node
    elif isinstance(node, Attach):
        out = Attach(node.resource, relabel_tree(node.child, register, perm, memo), node.step)
    elif isinstance(node, Teleport):
        out = Teleport(node.register, node.to_lab, node.dim, relabel_tree(node.child, register, perm, memo), node.step)
    elif isinstance(node, Measure):
        out = Measure(
            node.stage.relabel(register, perm),
            tuple((lbl, relabel_tree(c, register, perm, memo)) for lbl, c in node.children),
            node.step,
        )
    else:
        raise ProtocolError(f"unknown node {node!r}")
    memo[id(node)] = out
    return out


def iter_nodes(root: Node) -> Iterable[Node]:
    seen = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        if isinstance(node, (Attach, Teleport)):
            stack.append(node.child)
        elif isinstance(node, Measure):
            stack.extend(c for _, c in reversed(node.children))


# -- candidate sets ----------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    """A surviving hypothesis: which input, its current (unnormalized) state and branch probability."""

    index: int
    label: SubsetLabel
    state: SparseState
    prob: float


def attach_resource(candidates: Sequence[Candidate], spec: ResourceSpec, layout: Layout):
    """Tensor every candidate with the resource ket; returns (candidates, layout, ledger entry)."""
    entry = LedgerEntry(
        "resource", spec.describe(), spec.ebits, epr_pairs=1 if (spec.kind == "bipartite" and spec.dim == 2) else 0
    )
    res = spec.ket()
    if res is None:
        return list(candidates), layout, entry
    clash = set(res.layout.names) & set(layout.names)
    if clash:
        raise LayoutError(f"resource registers {sorted(clash)} already in use")
    new_layout = layout.concat(res.layout)
    out = [Candidate(c.index, c.label, tensor_product([c.state, res]), c.prob) for c in candidates]
    return out, new_layout, entry


def teleport(candidates: Sequence[Candidate], layout: Layout, register: str, to_lab: str, dim: int):
    """Relocate ``register`` to ``to_lab``; the caller's ledger is debited log2(dim) ebits."""
    reg = layout.register(register)
    if dim < reg.dim:
        raise ProtocolError(f"teleporting {register} (dim {reg.dim}) needs a resource of dim >= {reg.dim}")
    wasteful = reg.owner == to_lab
    new_layout = layout.with_owner(register, to_lab)
    out = [Candidate(c.index, c.label, c.state.relayout(new_layout), c.prob) for c in candidates]
    entry = LedgerEntry(
        "teleport", f"teleport {register}: {reg.owner}->{to_lab} via phi+({dim})", math.log2(dim), wasteful=wasteful
    )
    return out, new_layout, entry


def measure(candidates: Sequence[Candidate], stage: POVMStage) -> dict[str, list[tuple[Candidate, float]]]:
    """Split candidates by outcome. Each child lists (filtered candidate, weight within parent)."""
    if not candidates:
        return {lbl: [] for lbl in stage.labels}
    layout = candidates[0].state.layout
    ptr = np.zeros(len(candidates) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([c.state.nnz for c in candidates])
    keys = np.concatenate([c.state.keys for c in candidates])
    vals = np.concatenate([c.state.values for c in candidates])
    power = np.abs(vals) ** 2
    totals = np.array([power[ptr[i] : ptr[i + 1]].sum() for i in range(len(candidates))])
    out: dict[str, list[tuple[Candidate, float]]] = {}
    for label, proj in stage.outcomes:
        mask = proj.mask(layout, keys)
        kept = []
        for i, c in enumerate(candidates):
            lo, hi = ptr[i], ptr[i + 1]
            m = mask[lo:hi]
            w = float(power[lo:hi][m].sum() / totals[i]) if totals[i] > 0 else 0.0
            if w > PRUNE_TOL:
                s = SparseState(layout, c.state.keys[m], c.state.values[m])
                kept.append((Candidate(c.index, c.label, s, c.prob * w), w))
        out[label] = kept
    return out


@dataclass(frozen=True)
class OrthogonalityCheck:
    path: tuple[str, ...]
    max_overlap: float
    pair: tuple[str, str] | None

    @property
    def passed(self) -> bool:
        return self.max_overlap < ORTH_TOL


def check_orthogonality_preserving(
    children: Mapping[str, Sequence[Candidate]], path: tuple[str, ...] = ()
) -> list[OrthogonalityCheck]:
    """One check per outcome: surviving candidates must stay pairwise orthogonal."""
    out = []
    for label, cands in children.items():
        cands = [c[0] if isinstance(c, tuple) else c for c in cands]
        ov, pair = max_normalized_overlap([c.state for c in cands])
        names = None
        if pair is not None and ov >= ORTH_TOL:
            names = (str(cands[pair[0]].label), str(cands[pair[1]].label))
        out.append(OrthogonalityCheck(path + (label,), ov, names))
    return out


# -- running -----------------------------------------------------------------


@dataclass(frozen=True)
class BranchRecord:
    input: str
    path: tuple[str, ...]
    probability: float
    leaf: str
    correct: bool
    resources: tuple[str, ...]
    ebits: float
    epr_pairs: int


@dataclass
class LeafRecord:
    path: tuple[str, ...]
    name: str
    expected: tuple[str, ...]
    survivors: list[str]
    pure: bool
    finisher: object | None = None
    layout: Layout | None = field(default=None, repr=False)
    states: list[Candidate] = field(default_factory=list, repr=False)


@dataclass
class ProtocolReport:
    protocol: str
    d: int
    inputs: list[str]
    branches: list[BranchRecord] = field(default_factory=list)
    stage_checks: list[tuple[tuple[str, ...], StageCheck]] = field(default_factory=list)
    orthogonality: list[OrthogonalityCheck] = field(default_factory=list)
    leaves: list[LeafRecord] = field(default_factory=list)
    ledger: dict[tuple[str, ...], list[LedgerEntry]] = field(default_factory=dict)
    empty_branches: list[tuple[str, ...]] = field(default_factory=list)
    dropped_stopper: list[tuple[str, ...]] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    # aggregate checks
    def probability_sums(self) -> dict[str, float]:
        out = {name: 0.0 for name in self.inputs}
        for b in self.branches:
            out[b.input] += b.probability
        return out

    @property
    def stages_ok(self) -> bool:
        return all(c.passed for _, c in self.stage_checks)

    @property
    def orthogonality_ok(self) -> bool:
        return all(c.passed for c in self.orthogonality)

    @property
    def labels_ok(self) -> bool:
        return all(b.correct for b in self.branches)

    @property
    def probabilities_ok(self) -> bool:
        return all(abs(v - 1.0) < PROB_TOL for v in self.probability_sums().values())

    @property
    def leaves_pure(self) -> bool:
        return all(leaf.pure for leaf in self.leaves)

    @property
    def passed(self) -> bool:
        return self.stages_ok and self.orthogonality_ok and self.labels_ok and self.probabilities_ok and self.leaves_pure

    def failures(self) -> list[str]:
        out = []
        for path, c in self.stage_checks:
            if not c.passed:
                out.append(f"stage {c.stage} at {'/'.join(path) or 'root'}: {c.detail}")
        for c in self.orthogonality:
            if not c.passed:
                out.append(f"orthogonality broken at {'/'.join(c.path)}: {c.pair} overlap {c.max_overlap:.3g}")
        for b in self.branches:
            if not b.correct:
                out.append(f"input {b.input} reached leaf {b.leaf} via {'/'.join(b.path)}")
        for name, v in self.probability_sums().items():
            if abs(v - 1.0) >= PROB_TOL:
                out.append(f"input {name}: branch probabilities sum to {v!r}")
        for leaf in self.leaves:
            if not leaf.pure:
                out.append(f"leaf {leaf.name} at {'/'.join(leaf.path)} mixes subsets {leaf.survivors}")
        return out

    def expected_ebits(self, stopper: str = "full") -> float:
        return _expectation(self, lambda b: b.ebits, stopper)

    def expected_epr(self, stopper: str = "full") -> float:
        return _expectation(self, lambda b: b.epr_pairs, stopper)

    def distinct_epr_registers(self) -> int:
        regs = set()
        for entries in self.ledger.values():
            for e in entries:
                if e.epr_pairs:
                    regs.add(e.description)
        return len(regs)


def _expectation(report: ProtocolReport, value: Callable[[BranchRecord], float], stopper: str) -> float:
    """Average over the uniform prior on inputs of the branch-weighted ``value``.

    ``stopper="full"`` charges the stopper the largest value seen on any
    branch of the run (it is the one input never tied to a subset);
    ``stopper="simulated"`` weights it by its own branch probabilities.
    """
    if stopper not in ("full", "simulated"):
        raise ValueError("stopper must be 'full' or 'simulated'")
    per_input = {name: 0.0 for name in report.inputs}
    peak = max((value(b) for b in report.branches), default=0.0)
    for b in report.branches:
        per_input[b.input] += b.probability * value(b)
    if stopper == "full" and "S" in per_input:
        per_input["S"] = peak
    return sum(per_input.values()) / len(per_input)


LeafHook = Callable[[Sequence[Candidate], Layout, Leaf], object]


def run_protocol(
    protocol: Node,
    upb: UPBSet,
    *,
    name: str = "",
    finisher: LeafHook | None = None,
    trace: bool = False,
    keep_states: bool = False,
    inputs: Sequence[LabeledState] | None = None,
) -> ProtocolReport:
    """Propagate every UPB element through the tree and collect all checks."""
    from .upb import upb_layout

    inputs = list(upb.states if inputs is None else inputs)
    labels = [str(s.label) for s in inputs]
    if len(set(labels)) != len(labels):
        raise ProtocolError("input labels must be unique")
    report = ProtocolReport(name, upb.d, labels)
    layout = upb_layout(upb.d)
    root = [Candidate(i, s.label, s.state, 1.0) for i, s in enumerate(inputs)]

    # Iterative DFS with explicit stack; children pushed in reverse for a fixed order.
    stack: list[tuple[Node, Layout, list[Candidate], tuple[str, ...], tuple[LedgerEntry, ...]]] = [
        (protocol, layout, root, (), ())
    ]
    while stack:
        node, layout, cands, path, spent = stack.pop()
        if isinstance(node, Attach):
            cands, layout, entry = attach_resource(cands, node.resource, layout)
            if trace:
                report.trace.append(f"{_p(path)} {node.step}: attach {entry.description}")
            stack.append((node.child, layout, cands, path, spent + (entry,)))
        elif isinstance(node, Teleport):
            cands, layout, entry = teleport(cands, layout, node.register, node.to_lab, node.dim)
            if trace:
                report.trace.append(f"{_p(path)} {node.step}: {entry.description}")
            stack.append((node.child, layout, cands, path, spent + (entry,)))
        elif isinstance(node, Measure):
            stage = node.stage
            report.stage_checks.append((path, check_stage(stage, layout)))
            children = measure(cands, stage)
            report.orthogonality.extend(check_orthogonality_preserving(children, path))
            if trace:
                report.trace.append(f"{_p(path)} {node.step or stage.step}: {stage.lab} measures {stage.name}")
            for label, child_node in reversed(node.children):
                kept = [c for c, _ in children[label]]
                cpath = path + (label,)
                if any(c.label.is_stopper for c in cands) and not any(c.label.is_stopper for c in kept):
                    report.dropped_stopper.append(cpath)
                if not kept:
                    report.empty_branches.append(cpath)
                    if trace:
                        report.trace.append(f"{_p(cpath)} empty")
                    continue
                if trace:
                    report.trace.append(f"{_p(cpath)} -> {_summarize(kept)}")
                stack.append((child_node, layout, kept, cpath, spent))
        elif isinstance(node, Leaf):
            _close_leaf(report, node, layout, cands, path, spent, finisher, keep_states)
            if trace:
                report.trace.append(f"{_p(path)} leaf {node.name}: {_summarize(cands)}")
        else:
            raise ProtocolError(f"unknown node type {type(node).__name__}")
    report.empty_branches.reverse()
    report.ledger = dict(sorted(report.ledger.items()))
    return report


def _p(path):
    return "/".join(path) or "root"


def _summarize(cands: Sequence[Candidate]) -> str:
    subsets: dict[str, int] = {}
    for c in cands:
        key = str(c.label.subset)
        subsets[key] = subsets.get(key, 0) + 1
    return ", ".join(f"{k} x{v}" if v > 1 else k for k, v in subsets.items())


def _close_leaf(report, node: Leaf, layout, cands, path, spent, finisher, keep_states):
    expected = node.expected
    ebits = sum(e.ebits for e in spent if e.ebits is not None)
    epr = sum(e.epr_pairs for e in spent)
    res = tuple(e.description for e in spent)
    report.ledger[path] = list(spent)
    for c in cands:
        ok = c.label.is_stopper or c.label.subset in expected
        report.branches.append(
            BranchRecord(report.inputs[c.index], path, c.prob, node.name, ok, res, ebits, epr)
        )
    subsets = sorted({str(c.label.subset) for c in cands if not c.label.is_stopper})
    record = LeafRecord(
        path,
        node.name,
        tuple(sorted(str(e) for e in expected)),
        subsets + (["S"] if any(c.label.is_stopper for c in cands) else []),
        pure=len(subsets) <= 1,
        layout=layout if keep_states else None,
        states=list(cands) if keep_states else [],
    )
    if finisher is not None:
        record.finisher = finisher(cands, layout, node)
    report.leaves.append(record)
