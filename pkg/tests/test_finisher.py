import json
from importlib import resources

import numpy as np
import pytest

from upb_locc.engine import Candidate, run_protocol
from upb_locc.finisher import DATA, MAX_ROUNDS, basis_catalog, leaf_finisher
from upb_locc.protocols import build_protocol
from upb_locc.tensor import Layout, SparseState, apply_local_basis, check_unitary, inner_product
from upb_locc.upb import SubsetLabel
from conftest import report, upb

EXPECTED = json.loads((resources.files("upb_locc") / "fixtures" / "finisher_expectations.json").read_text())


# -- independent replay of a finisher strategy --------------------------------


def _release(states, layout, groups):
    """Drop released ancilla groups after checking each is a copy of a function of one data register."""
    names = list(layout.names)
    for group in groups:
        pos = [names.index(g) for g in group]
        digs = [s.digits() for s in states]
        allv = np.concatenate([d[:, pos] for d in digs])
        assert np.all(allv == allv[:, :1]), group
        keep = [i for i in range(len(names)) if i not in pos]
        new_layout = Layout(tuple(layout.registers[i] for i in keep))
        out = []
        for s, d in zip(states, digs):
            amps = {}
            for row, v in zip(d[:, keep], s.values):
                key = tuple(int(x) for x in row)
                assert key not in amps  # the group value is fixed by the remaining digits
                amps[key] = v
            out.append(SparseState.from_dict(new_layout, amps))
        states, layout, names = out, new_layout, list(new_layout.names)
    return states, layout


def _replay(state, layout, step, prefix=()):
    """Set of complete outcome records the state can produce under ``step``."""
    if step is None or state.nnz == 0:
        return {prefix} if state.nnz else set()
    t = state
    for reg, basis in step.bases:
        dim = layout.register(reg).dim
        t = apply_local_basis(t, reg, basis_catalog(dim, reg in DATA)[basis].conj().T)
    cols = [layout.position(reg) for reg, _ in step.bases]
    dig = t.digits()[:, cols]
    follow = dict(step.then)
    out = set()
    for o in {tuple(int(x) for x in row) for row, v in zip(dig, t.values) if abs(v) > 1e-9}:
        keep = np.all(dig == np.array(o), axis=1)
        sub = SparseState(t.layout, t.keys[keep], t.values[keep])
        if sub.norm_sq() / t.norm_sq() < 1e-12:
            continue
        out |= _replay(sub, layout, follow.get(o), prefix + ((step.lab, o),))
    return out


def _check_leaf(leaf):
    res = leaf.finisher
    subject = [c for c in leaf.states if not c.label.is_stopper]
    if len(subject) <= 1:
        return
    groups = [tuple(r.split(" via ")[0].split("/")) for r in res.released]
    tracked = [c for c in leaf.states if not c.label.is_stopper or "not tracked" not in res.diagnostics]
    before = [c.state for c in tracked]
    states, layout = _release(before, leaf.layout, groups)
    # release keeps every inner product
    g0 = np.array([[inner_product(x, y) for y in before] for x in before])
    g1 = np.array([[inner_product(x, y) for y in states] for x in states])
    np.testing.assert_allclose(g1, g0, atol=1e-9)
    records = {str(c.label): _replay(s, layout, res.strategy) for c, s in zip(tracked, states)}
    subj = [str(c.label) for c in subject]
    for i, a in enumerate(subj):
        assert records[a]
        for b in subj[i + 1 :]:
            assert not records[a] & records[b], (leaf.path, a, b)
    if any(c.label.is_stopper for c in tracked):
        hit = sorted(a for a in subj if records[a] & records["S"])
        assert hit == sorted(res.stopper_collisions)


def _run(theorem, d):
    return run_protocol(build_protocol(theorem, d), upb(d), name=theorem, finisher=leaf_finisher, keep_states=True)


@pytest.mark.parametrize("theorem,d", [("T1", 3), ("T2", 3), ("T4", 4), ("T5", 5), ("T6", 4), ("T6", 5)])
def test_strategies_replay_independently(theorem, d):
    rep = _run(theorem, d)
    assert all(leaf.finisher.resolved for leaf in rep.leaves)
    for leaf in rep.leaves:
        _check_leaf(leaf)


def test_t1_b3_leaf_strategy():
    rep = report("T1", 3, True)
    (leaf,) = [x for x in rep.leaves if x.path == ("M_11", "M_24", "M_31")]
    step = leaf.finisher.strategy
    assert step.lab == "Bob"
    assert dict(step.bases) == {"B": "eta[0]", "C": "xi[0]"}
    assert leaf.finisher.stopper_collisions == []


def test_single_survivor_is_trivially_resolved():
    s = upb(3).states[0]
    res = leaf_finisher([Candidate(0, s.label, s.state, 1.0)], s.state.layout)
    assert res.resolved and res.strategy is None
    assert "empty strategy" in res.describe()


def test_phase_copies_are_unresolved():
    s = upb(3).states[0]
    a = Candidate(0, SubsetLabel("A", 1, 0, (0, 1)), s.state, 1.0)
    b = Candidate(1, SubsetLabel("A", 1, 0, (0, 1)), s.state.scaled(1j), 1.0)
    res = leaf_finisher([a, b], s.state.layout)
    assert not res.resolved
    assert res.status == "Unresolved"
    assert "not pairwise orthogonal" in res.diagnostics


def test_whole_d3_set_needs_more_than_the_budget():
    # the full set is locally irreducible, so no catalog measurement can start
    cands = [Candidate(i, s.label, s.state, 1.0) for i, s in enumerate(upb(3).states)]
    res = leaf_finisher(cands, upb(3).states[0].state.layout)
    assert not res.resolved


def test_catalog_entries_are_unitary():
    for dim in range(2, 9):
        for u in basis_catalog(dim, True).values():
            check_unitary(u)
        assert set(basis_catalog(dim, False)) == {"comp", "dft"}
    assert "mid" in basis_catalog(6, True) and "mid" not in basis_catalog(5, True)
    assert MAX_ROUNDS == 2


def test_expectation_file_shape():
    counts = EXPECTED["counts"]
    for th in ("T4", "T5", "T6"):
        assert sorted(counts[th], key=int) == [str(d) for d in range(3, 9)]
    nonzero = [f"{th}/{d}" for th, per in counts.items() for d, n in per.items() if n]
    assert sorted(nonzero) == sorted(EXPECTED["justification"])


CASES = [(th, int(d)) for th, per in sorted(EXPECTED["counts"].items()) for d in sorted(per, key=int)]


@pytest.mark.slow
@pytest.mark.parametrize("theorem,d", CASES)
def test_unresolved_counts_match_committed(theorem, d):
    rep = report(theorem, d, True)
    unresolved = [leaf for leaf in rep.leaves if not leaf.finisher.resolved]
    assert len(unresolved) == EXPECTED["counts"][theorem][str(d)]
