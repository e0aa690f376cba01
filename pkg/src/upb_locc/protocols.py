"""The six discrimination protocols as measurement trees.

T1-T3 act on the 3x3x3 set only; T4-T6 take any d >= 3. Branches the
derivation only treats "by symmetry" are produced with
:func:`~upb_locc.engine.relabel_tree` from the analysed branch, never written
out by hand, and every generated branch is simulated like any other.
"""

from __future__ import annotations

import json
from importlib import resources
from typing import Callable, Mapping, Sequence

from .engine import (
    Attach,
    Leaf,
    Measure,
    Node,
    POVMStage,
    ProtocolError,
    ResourceSpec,
    Teleport,
    complement,
    relabel_tree,
)
from .tensor import DiagonalProjector
from .upb import SubsetLabel, ceil_half, num_layers

THEOREMS = ("T1", "T2", "T3", "T4", "T5", "T6")


def P(**allowed) -> dict[str, frozenset[int]]:
    """One pattern: ``P(A=[0, 1], a=[0])``; ints are accepted for singletons."""
    return {k: frozenset([v]) if isinstance(v, int) else frozenset(v) for k, v in allowed.items()}


def proj(*patterns) -> DiagonalProjector:
    return DiagonalProjector(tuple(dict(sorted(p.items())) for p in patterns))


def span(lo: int, hi: int) -> range:
    """Closed integer interval [lo, hi]."""
    return range(lo, hi + 1)


def stage(lab, name, step, outcomes, dims, rest=None) -> POVMStage:
    """Stage from (label, projector) pairs, optionally closed with ``rest := I - sum``."""
    outcomes = list(outcomes)
    if rest is not None:
        outcomes.append((rest, complement([p for _, p in outcomes], dims)))
    return POVMStage(lab, tuple(outcomes), name, step)


def subset(family: str, position: int | None = None, layer: int | None = None) -> SubsetLabel:
    return SubsetLabel(family, position, layer)


def leaf(*labels: SubsetLabel, name: str = "") -> Leaf:
    return Leaf(frozenset(labels), name or ("|".join(str(x) for x in labels) or "empty"))


def shift_perm(n: int, s: int) -> dict[int, int]:
    return {v: (v + s) % n for v in range(n)}


def relabel_many(node: Node, perms: Mapping[str, Mapping[int, int]]) -> Node:
    for reg, perm in perms.items():
        node = relabel_tree(node, reg, perm)
    return node


def branch(stage_: POVMStage, children: Sequence[Node], step: str = "") -> Measure:
    return Measure(stage_, tuple(zip(stage_.labels, children)), step or stage_.step)


# -- 3 x 3 x 3 ---------------------------------------------------------------

A1, A2, A3 = (subset("A", i, 0) for i in (1, 2, 3))
B1, B2, B3 = (subset("B", i, 0) for i in (1, 2, 3))


def protocol_t1() -> Node:
    """Teleport C to Bob, one EPR pair between Alice and Bob, four local stages."""
    dims = {"A": 3, "B": 3, "C": 3, "a": 2, "b": 2}
    m4 = stage("Bob", "M_4", "Step 4", [("M_41", proj(P(B=0, C=[0, 1], b=[0, 1])))], dims, rest="M_42")
    m3 = stage("Alice", "M_3", "Step 3", [("M_31", proj(P(A=0, a=0)))], dims, rest="M_32")
    m2 = stage(
        "Bob",
        "M_2",
        "Step 2",
        [
            ("M_21", proj(P(B=[1, 2], C=[0, 1], b=1))),
            ("M_22", proj(P(B=2, C=[1, 2], b=0))),
            ("M_23", proj(P(B=[1, 2], C=0, b=0))),
        ],
        dims,
        rest="M_24",
    )
    after_m11 = branch(
        m2,
        [
            leaf(A3),
            leaf(B1),
            leaf(B2),
            branch(m3, [leaf(B3), branch(m4, [leaf(A1), leaf(A2)])]),
        ],
    )
    m1 = stage("Alice", "M_1", "Step 1", [("M_11", proj(P(A=[0, 1], a=0), P(A=2, a=1)))], dims, rest="M_12")
    flip = shift_perm(2, 1)
    after_m12 = relabel_many(after_m11, {"a": flip, "b": flip})
    tree = branch(m1, [after_m11, after_m12])
    return Teleport("C", "Bob", 3, Attach(ResourceSpec.epr(2, ("a", "b"), ("Alice", "Bob")), tree, "setup"), "setup")


def protocol_t2() -> Node:
    """Two EPR pairs shared a1-b1 (Alice-Bob) and a2-c1 (Alice-Charlie); no teleportation."""
    dims = {"A": 3, "B": 3, "C": 3, "a1": 2, "b1": 2, "a2": 2, "c1": 2}
    m6 = stage("Alice", "M_6", "Step 5", [("M_61", proj(P(A=[1, 2], a1=[0, 1], a2=1)))], dims, rest="M_62")
    m5 = stage("Bob", "M_5", "Step 4", [("M_51", proj(P(B=2, b1=1)))], dims, rest="M_52")
    m4 = stage("Charlie", "M_4", "Step 3", [("M_41", proj(P(C=0, c1=0)))], dims, rest="M_42")
    m3 = stage(
        "Alice",
        "M_3",
        "Step 2",
        [("M_31", proj(P(A=[1, 2], a1=0, a2=0))), ("M_32", proj(P(A=2, a1=1, a2=0)))],
        dims,
        rest="M_33",
    )
    core = branch(
        m3,
        [
            leaf(A1),
            leaf(A3),
            branch(m4, [leaf(B2), branch(m5, [leaf(B1), branch(m6, [leaf(A2), leaf(B3)])])]),
        ],
    )
    m2 = stage("Charlie", "M_2", "Step 1", [("M_21", proj(P(C=[0, 1], c1=0), P(C=2, c1=1)))], dims, rest="M_22")
    m1 = stage("Bob", "M_1", "Step 1", [("M_11", proj(P(B=0, b1=0), P(B=[1, 2], b1=1)))], dims, rest="M_12")
    after_m1 = []
    for s in range(2):
        per_c = [
            relabel_many(core, {"b1": shift_perm(2, s), "a1": shift_perm(2, s), "c1": shift_perm(2, t), "a2": shift_perm(2, t)})
            for t in range(2)
        ]
        after_m1.append(branch(m2, per_c))
    tree = branch(m1, after_m1)
    return Attach(
        ResourceSpec.epr(2, ("a1", "b1"), ("Alice", "Bob")),
        Attach(ResourceSpec.epr(2, ("a2", "c1"), ("Alice", "Charlie")), tree, "setup"),
        "setup",
    )


# Register corrections applied to the printed tripartite stages:
# (stage, outcome, pattern index) -> (printed register, corrected register).
T3_CORRECTIONS = {("M_2", "M_21", 0): ("a", "c")}


def t3_transcription() -> dict:
    """Printed stages of the tripartite protocol, register symbols untouched."""
    text = resources.files("upb_locc").joinpath("fixtures/thm3_literal.json").read_text()
    return json.loads(text)


def _t3_stages(dims, literal: bool) -> dict[str, POVMStage]:
    out = {}
    for rec in t3_transcription()["stages"]:
        outcomes = []
        for label, pats in rec["outcomes"].items():
            fixed = []
            for i, pat in enumerate(pats):
                pat = dict(pat)
                fix = None if literal else T3_CORRECTIONS.get((rec["name"], label, i))
                if fix:
                    pat[fix[1]] = pat.pop(fix[0])
                fixed.append(pat)
            outcomes.append((label, DiagonalProjector.build(*fixed)))
        out[rec["name"]] = stage(rec["lab"], rec["name"], "", outcomes, dims, rest=rec["rest"])
    return out


def protocol_t3(literal: bool = False) -> Node:
    """One tripartite |phi+(3)> on ancillas a, b, c; five local stages.

    ``literal=True`` keeps the register symbols as printed (Charlie's first
    stage then constrains Alice's ancilla and fails the locality check).
    """
    dims = {"A": 3, "B": 3, "C": 3, "a": 3, "b": 3, "c": 3}
    st = _t3_stages(dims, literal)
    core = branch(
        st["M_3"],
        [
            leaf(A1),
            leaf(A2),
            branch(st["M_4"], [leaf(A3), branch(st["M_5"], [leaf(B2), branch(st["M_6"], [leaf(B3), leaf(B1)])])]),
        ],
    )
    swap12 = {0: 0, 1: 2, 2: 1}
    after_m11 = branch(st["M_2"], [core, relabel_many(core, {"a": swap12, "b": swap12, "c": swap12})])
    # No operators are given after M_12 and it is not a relabelling of M_11
    # (ancilla sectors of size 1 and 2 swap roles); the M_11 continuation is
    # reused as is and the simulation reports what happens.
    tree = branch(st["M_1"], [after_m11, after_m11])
    res = ResourceSpec("tripartite", 3, ("Alice", "Bob", "Charlie"), ("a", "b", "c"))
    return Attach(res, tree, "setup")


# -- d x d x d ---------------------------------------------------------------


def _check_d(d: int):
    if d < 3:
        raise ProtocolError("d must be >= 3")


def _alice_blocks(d: int) -> list[list[int]]:
    """{0..floor(d/2)} then the singletons floor(d/2)+1 .. d-1 (ceil(d/2) blocks)."""
    half = d // 2
    return [list(span(0, half))] + [[v] for v in range(half + 1, d)]


def _bob_blocks(d: int) -> list[list[int]]:
    """Singletons 0 .. ceil(d/2)-2, then {ceil(d/2)-1 .. d-1}."""
    n = ceil_half(d)
    return [[v] for v in range(n - 1)] + [list(span(n - 1, d - 1))]


def _block_stage(lab, name, step, data_reg, anc_reg, blocks, dims) -> POVMStage:
    """Outcome s pairs block g with ancilla value (g + s) mod n."""
    n = len(blocks)
    outs = []
    for s in range(n):
        pats = [P(**{data_reg: blk, anc_reg: (g + s) % n}) for g, blk in enumerate(blocks)]
        outs.append((f"{name}{s + 1}", proj(*pats)))
    return stage(lab, name, step, outs, dims)


def _layer_groups(d: int, schedule: str) -> list[list[int]]:
    """``printed``: every layer inside one stage; ``layered``: one layer per stage chain."""
    ks = list(range(num_layers(d)))
    if schedule == "printed":
        return [ks]
    if schedule == "layered":
        return [[k] for k in ks]
    raise ProtocolError(f"unknown schedule {schedule!r}")


def _tail_leaf(d: int) -> Leaf:
    return leaf(subset("Amiddle")) if d % 2 == 0 else leaf(name="empty (odd d)")


def _tag(group: Sequence[int], schedule: str) -> str:
    return "" if schedule == "printed" else f"^{group[0]}"


def protocol_t4(d: int, schedule: str = "layered") -> Node:
    _check_d(d)
    n = ceil_half(d)
    dims = {"A": d, "B": d, "C": d, "a": n, "b": n}
    groups = _layer_groups(d, schedule)

    def low(k):
        return span(0, n - 2 - k)

    def block(g: int) -> Node:
        if g == len(groups):
            return _tail_leaf(d)
        ks, t = groups[g], _tag(groups[g], schedule)
        m2_out, leaves2 = [], []
        for k in ks:
            m2_out.append((f"M^{k}_21", proj(P(B=span(k + 1, d - 1 - k), C=span(k, d - 2 - k), b=n - 1 - k))))
            leaves2.append(leaf(subset("A", 3, k)))
        for k in ks:
            m2_out.append((f"M^{k}_22", proj(P(B=d - 1 - k, C=span(k + 1, d - 1 - k), b=low(k)))))
            leaves2.append(leaf(subset("B", 1, k)))
        for k in ks:
            m2_out.append((f"M^{k}_23", proj(P(B=span(k + 1, d - 1 - k), C=k, b=low(k)))))
            leaves2.append(leaf(subset("B", 2, k)))
        m2 = stage("Bob", f"M{t}_2", "Step 2", m2_out, dims, rest=f"M{t}_24")

        m3 = stage("Alice", f"M{t}_3", "Step 3", [(f"M^{k}_31", proj(P(A=k, a=0))) for k in ks], dims, rest=f"M{t}_32")
        leaves3 = [leaf(subset("B", 3, k)) for k in ks]

        m4_out, leaves4 = [], []
        for k in ks:
            m4_out.append((f"M^{k}_41", proj(P(B=k, C=span(k, d - k - 2), b=span(0, n - 1 - k)))))
            leaves4.append(leaf(subset("A", 1, k)))
        for k in ks:
            m4_out.append((f"M^{k}_42", proj(P(B=span(k, d - k - 2), C=d - 1 - k, b=span(0, n - 1 - k)))))
            leaves4.append(leaf(subset("A", 2, k)))
        m4 = stage("Bob", f"M{t}_4", "Step 4", m4_out, dims, rest=f"M{t}_43")
        return branch(m2, leaves2 + [branch(m3, leaves3 + [branch(m4, leaves4 + [block(g + 1)])])])

    core = block(0)
    m1 = _block_stage("Alice", "M_1", "Step 1", "A", "a", _alice_blocks(d), dims)
    children = [relabel_many(core, {"a": shift_perm(n, s), "b": shift_perm(n, s)}) if s else core for s in range(n)]
    tree = branch(m1, children)
    epr = ResourceSpec.epr(n, ("a", "b"), ("Alice", "Bob"))
    return Teleport("C", "Bob", d, Attach(epr, tree, "setup"), "setup")


def protocol_t5(d: int) -> Node:
    _check_d(d)
    rounds = num_layers(d)
    return Teleport("C", "Bob", d, _t5_round(d, 0, rounds), "setup")


def _t5_round(d: int, m: int, rounds: int) -> Node:
    a, b = f"a{m}", f"b{m}"
    dims = {"A": d, "B": d, "C": d, a: 2, b: 2}
    final = m == rounds - 1
    tag = f"round {m}"
    lo, hi = m, d - 1 - m

    m2 = stage(
        "Bob",
        f"M^{m}_2",
        f"Step 3({m})",
        [
            (f"M^{m}_21", proj(P(B=span(lo + 1, hi), C=span(lo, hi - 1), **{b: 1}))),
            (f"M^{m}_22", proj(P(B=hi, C=span(lo + 1, hi), **{b: 0}))),
            (f"M^{m}_23", proj(P(B=span(lo + 1, hi), C=lo, **{b: 0}))),
        ],
        dims,
        rest=f"M^{m}_24",
    )
    m3 = stage("Alice", f"M^{m}_3", f"Step 4({m})", [(f"M^{m}_31", proj(P(A=lo, **{a: 0})))], dims, rest=f"M^{m}_32")
    if not final:
        m4 = stage(
            "Bob",
            f"M^{m}_4",
            f"Step 5({m})",
            [
                (f"M^{m}_41", proj(P(B=lo, C=span(lo, hi - 1)))),
                (f"M^{m}_42", proj(P(B=span(lo, hi - 1), C=hi))),
            ],
            dims,
            rest=f"M^{m}_43",
        )
        tail = branch(m4, [leaf(subset("A", 1, m)), leaf(subset("A", 2, m)), _t5_round(d, m + 1, rounds)])
    elif d % 2:
        m4 = stage("Bob", f"M^{m}_4", f"Step 5({m})", [(f"M^{m}_41", proj(P(B=lo, C=span(lo, lo + 1))))], dims, rest=f"M^{m}_42")
        tail = branch(m4, [leaf(subset("A", 1, m)), leaf(subset("A", 2, m))])
    else:
        fin = stage(
            "Bob",
            f"M^{m}_fin",
            "Final step",
            [
                (f"M^{m}_fin,1", proj(P(B=lo, C=span(lo, lo + 2)))),
                (f"M^{m}_fin,2", proj(P(B=span(lo, lo + 2), C=lo + 3))),
            ],
            dims,
            rest=f"M^{m}_fin,3",
        )
        tail = branch(fin, [leaf(subset("A", 1, m)), leaf(subset("A", 2, m)), leaf(subset("Amiddle"))])

    core = branch(
        m2,
        [
            leaf(subset("A", 3, m)),
            leaf(subset("B", 1, m)),
            leaf(subset("B", 2, m)),
            branch(m3, [leaf(subset("B", 3, m)), tail]),
        ],
    )
    m1 = stage(
        "Alice",
        f"M^{m}_1",
        f"Step 2({m})",
        [(f"M^{m}_11", proj(P(A=span(lo, hi - 1), **{a: 0}), P(A=hi, **{a: 1})))],
        dims,
        rest=f"M^{m}_12",
    )
    flip = shift_perm(2, 1)
    # Deeper rounds use fresh pairs, so only this round's ancillas are touched.
    flipped = relabel_many(core, {a: flip, b: flip})
    epr = ResourceSpec.epr(2, (a, b), ("Alice", "Bob"))
    return Attach(epr, branch(m1, [core, flipped]), f"Step 1({m}) [{tag}]")


def protocol_t6(d: int, schedule: str = "layered") -> Node:
    _check_d(d)
    n = ceil_half(d)
    dims = {"A": d, "B": d, "C": d, "a1": n, "b1": n, "a2": n, "c1": n}
    groups = _layer_groups(d, schedule)

    def block(g: int) -> Node:
        if g == len(groups):
            return _tail_leaf(d)
        ks, t = groups[g], _tag(groups[g], schedule)
        m3_out, leaves3 = [], []
        for k in ks:
            m3_out.append((f"M^{k}_31", proj(P(A=span(k + 1, d - 1 - k), a1=k, a2=span(0, n - 2 - k)))))
            leaves3.append(leaf(subset("A", 1, k)))
        for k in ks:
            m3_out.append((f"M^{k}_32", proj(P(A=d - 1 - k, a1=span(k + 1, n - 1), a2=span(0, n - 2 - k)))))
            leaves3.append(leaf(subset("A", 3, k)))
        m3 = stage("Alice", f"M{t}_3", "Step 2", m3_out, dims, rest=f"M{t}_33")

        m4 = stage("Charlie", f"M{t}_4", "Step 3", [(f"M^{k}_41", proj(P(C=k, c1=0))) for k in ks], dims, rest=f"M{t}_42")
        leaves4 = [leaf(subset("B", 2, k)) for k in ks]

        m5 = stage(
            "Bob", f"M{t}_5", "Step 4", [(f"M^{k}_51", proj(P(B=d - 1 - k, b1=n - 1))) for k in ks], dims, rest=f"M{t}_52"
        )
        leaves5 = [leaf(subset("B", 1, k)) for k in ks]

        m6_out, leaves6 = [], []
        for k in ks:
            m6_out.append((f"M^{k}_61", proj(P(A=span(k + 1, d - 1 - k), a1=span(k, n - 1), a2=n - 1 - k))))
            leaves6.append(leaf(subset("A", 2, k)))
        for k in ks:
            m6_out.append((f"M^{k}_62", proj(P(A=k, a1=span(k, n - 1), a2=span(0, n - 1 - k)))))
            leaves6.append(leaf(subset("B", 3, k)))
        m6 = stage("Alice", f"M{t}_6", "Step 5", m6_out, dims, rest=f"M{t}_63")
        return branch(
            m3,
            leaves3 + [branch(m4, leaves4 + [branch(m5, leaves5 + [branch(m6, leaves6 + [block(g + 1)])])])],
        )

    core = block(0)
    m1 = _block_stage("Bob", "M_1", "Step 1", "B", "b1", _bob_blocks(d), dims)
    m2 = _block_stage("Charlie", "M_2", "Step 1", "C", "c1", _alice_blocks(d), dims)
    after_m1 = []
    for s in range(n):
        per_c = [
            relabel_many(
                core,
                {"b1": shift_perm(n, s), "a1": shift_perm(n, s), "c1": shift_perm(n, t), "a2": shift_perm(n, t)},
            )
            for t in range(n)
        ]
        after_m1.append(branch(m2, per_c))
    tree = branch(m1, after_m1)
    return Attach(
        ResourceSpec.epr(n, ("a1", "b1"), ("Alice", "Bob")),
        Attach(ResourceSpec.epr(n, ("a2", "c1"), ("Alice", "Charlie")), tree, "setup"),
        "setup",
    )


BUILDERS: dict[str, Callable[..., Node]] = {
    "T1": lambda d=3: protocol_t1(),
    "T2": lambda d=3: protocol_t2(),
    "T3": lambda d=3: protocol_t3(),
    "T4": protocol_t4,
    "T5": protocol_t5,
    "T6": protocol_t6,
}


def build_protocol(theorem: str, d: int, **options) -> Node:
    """``options`` go to the builder: ``schedule`` for T4/T6, ``literal`` for T3."""
    if theorem not in BUILDERS:
        raise ProtocolError(f"unknown theorem {theorem!r}")
    if theorem in ("T1", "T2", "T3") and d != 3:
        raise ProtocolError(f"{theorem} applies to d = 3 only")
    if theorem == "T3":
        return protocol_t3(**options)
    if theorem in ("T1", "T2"):
        if options:
            raise ProtocolError(f"{theorem} takes no options")
        return BUILDERS[theorem]()
    if options and theorem == "T5":
        raise ProtocolError("T5 takes no options")
    return BUILDERS[theorem](d, **options)
