import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from upb_locc.engine import (
    Attach,
    Candidate,
    Leaf,
    Measure,
    POVMStage,
    ProtocolError,
    ResourceSpec,
    Teleport,
    attach_resource,
    check_stage,
    complement,
    iter_nodes,
    measure,
    relabel_tree,
    run_protocol,
    teleport,
)
from upb_locc.tensor import DiagonalProjector as DP
from upb_locc.tensor import LayoutError
from upb_locc.upb import SubsetLabel, upb_layout
from conftest import upb

DIMS = {"A": 3, "B": 3, "C": 3, "a": 2, "b": 2}
A3 = SubsetLabel("A", 3, 0)
B3 = SubsetLabel("B", 3, 0)


def _stage(lab, name, outs, rest=None):
    outs = list(outs)
    if rest:
        outs.append((rest, complement([p for _, p in outs], DIMS)))
    return POVMStage(lab, tuple(outs), name, "Step 1")


def _inputs(*subsets):
    return [s for s in upb(3).states if s.label.subset in subsets]


def _toy(leaf_for_zero=B3):
    st_ = _stage("Alice", "M", [("M_1", DP.build({"A": [0]}))], rest="M_2")
    return Measure(st_, (("M_1", Leaf(frozenset([leaf_for_zero]), "zero")), ("M_2", Leaf(frozenset([A3]), "two"))))


def test_toy_protocol_passes():
    rep = run_protocol(_toy(), upb(3), inputs=_inputs(A3, B3))
    assert rep.passed, rep.failures()
    assert len(rep.leaves) == 2 and all(leaf.pure for leaf in rep.leaves)
    assert rep.expected_ebits() == 0.0


def test_wrong_leaf_is_reported_not_raised():
    rep = run_protocol(_toy(leaf_for_zero=A3), upb(3), inputs=_inputs(A3, B3))
    assert not rep.labels_ok
    assert any("reached leaf zero" in f for f in rep.failures())


def test_nonlocal_stage_flagged():
    st_ = POVMStage("Bob", (("x", DP.build({"A": [0]})), ("y", DP.build({"A": [1, 2]}))), "M")
    chk = check_stage(st_, upb_layout(3))
    assert chk.complete and not chk.local
    assert "owned by Alice" in chk.detail


def test_incomplete_and_overlapping_stages_flagged():
    lay = upb_layout(3)
    gap = POVMStage("Alice", (("x", DP.build({"A": [0]})), ("y", DP.build({"A": [1]}))), "M")
    assert "uncovered" in check_stage(gap, lay).detail
    dup = POVMStage("Alice", (("x", DP.build({"A": [0, 1]})), ("y", DP.build({"A": [1, 2]}))), "M")
    assert "covered 2 times" in check_stage(dup, lay).detail
    missing = POVMStage("Alice", (("x", DP.build({"z": [0]})),), "M")
    assert not check_stage(missing, lay).passed


def test_complement_tiles():
    p = DP.build({"A": [0], "a": [0]}, {"A": [1, 2], "a": [1]})
    rest = complement([p], DIMS)
    st_ = POVMStage("Alice", (("x", p), ("y", rest)), "M")
    lay = upb_layout(3).concat(ResourceSpec.epr(2, ("a", "b"), ("Alice", "Bob")).layout())
    assert check_stage(st_, lay).passed
    assert len(rest.patterns) == 3


def test_measure_children_must_match_stage():
    st_ = _stage("Alice", "M", [("M_1", DP.build({"A": [0]}))], rest="M_2")
    with pytest.raises(ProtocolError):
        Measure(st_, (("M_2", Leaf(frozenset())), ("M_1", Leaf(frozenset()))))


def test_attach_and_teleport_ledger():
    lay = upb_layout(3)
    cands = [Candidate(0, s.label, s.state, 1.0) for s in upb(3).states[:2]]
    cands, lay2, entry = attach_resource(cands, ResourceSpec.epr(2, ("a", "b"), ("Alice", "Bob")), lay)
    assert entry.ebits == 1.0 and entry.epr_pairs == 1
    assert lay2.names == ("A", "B", "C", "a", "b")
    assert cands[0].state.norm_sq() == pytest.approx(2 * upb(3).states[0].state.norm_sq())
    with pytest.raises(LayoutError):
        attach_resource(cands, ResourceSpec.epr(2, ("a", "c"), ("Alice", "Charlie")), lay2)
    cands, lay3, entry = teleport(cands, lay2, "C", "Bob", 3)
    assert lay3.owner("C") == "Bob"
    assert entry.ebits == pytest.approx(math.log2(3)) and not entry.wasteful
    with pytest.raises(ProtocolError):
        teleport(cands, lay3, "A", "Bob", 2)


def test_tripartite_resource_has_no_ebit_figure():
    spec = ResourceSpec("tripartite", 3, ("Alice", "Bob", "Charlie"), ("a", "b", "c"))
    assert spec.ebits is None
    assert spec.ket().nnz == 3
    with pytest.raises(ProtocolError):
        ResourceSpec("bipartite", 2, ("Alice",), ("a",))
    with pytest.raises(ProtocolError):
        ResourceSpec("quad", 2, ("Alice", "Bob"), ("a", "b"))


def test_relabel_tree_shares_subtrees():
    shared = Leaf(frozenset([A3]))
    st_ = _stage("Alice", "M", [("M_1", DP.build({"A": [0]}))], rest="M_2")
    tree = Measure(st_, (("M_1", shared), ("M_2", shared)))
    out = relabel_tree(tree, "A", {0: 2, 2: 0})
    assert out.stage.outcomes[0][1].patterns[0]["A"] == frozenset([2])
    assert out.children[0][1] is out.children[1][1]
    assert len(list(iter_nodes(out))) == 2


def test_trace_lists_steps():
    tree = Teleport("C", "Bob", 3, _toy(), "setup")
    rep = run_protocol(tree, upb(3), inputs=_inputs(A3, B3), trace=True)
    assert rep.trace[0].startswith("root setup: teleport C")
    assert any("Step 1: Alice measures M" in line for line in rep.trace)
    assert rep.expected_ebits() == pytest.approx(math.log2(3))


def test_duplicate_input_labels_rejected():
    s = upb(3).states[0]
    with pytest.raises(ProtocolError):
        run_protocol(_toy(), upb(3), inputs=[s, s])


def test_stopper_conventions():
    # the stopper reaches both leaves; "full" charges it the peak branch cost
    st_ = _stage("Alice", "M", [("M_1", DP.build({"A": [0]}))], rest="M_2")
    spec = ResourceSpec.epr(2, ("a", "b"), ("Alice", "Bob"))
    tree = Measure(st_, (("M_1", Leaf(frozenset([B3]))), ("M_2", Attach(spec, Leaf(frozenset([A3])), "s"))))
    rep = run_protocol(tree, upb(3), inputs=_inputs(A3, B3, SubsetLabel("Stopper")))
    n = len(rep.inputs)
    assert rep.expected_ebits("full") == pytest.approx((3 + 1) / n)
    assert rep.expected_ebits("simulated") == pytest.approx((3 + 2 / 3) / n)
    with pytest.raises(ValueError):
        rep.expected_ebits("other")


@given(st.lists(st.integers(0, 3), min_size=3, max_size=3), st.integers(0, 2**32 - 1))
def test_random_partitions_conserve_probability(assign, seed):
    """A complete diagonal stage conserves each input's probability."""
    groups = {}
    for v, g in enumerate(assign):
        groups.setdefault(g, []).append(v)
    outs = tuple((f"o{g}", DP.build({"B": vs})) for g, vs in sorted(groups.items()))
    st_ = POVMStage("Bob", outs, "M")
    assert check_stage(st_, upb_layout(3)).passed
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(upb(3)), size=5, replace=False)
    cands = [Candidate(int(i), upb(3).states[i].label, upb(3).states[i].state, 1.0) for i in picks]
    children = measure(cands, st_)
    total = {c.index: 0.0 for c in cands}
    for kept in children.values():
        for c, w in kept:
            total[c.index] += w
    assert all(abs(v - 1) < 1e-12 for v in total.values())
