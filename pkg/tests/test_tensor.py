import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from upb_locc.tensor import (
    DiagonalProjector,
    Layout,
    LayoutError,
    NonUnitaryError,
    Register,
    SparseState,
    apply_local_basis,
    apply_projector,
    basis_ket,
    check_unitary,
    dft_matrix,
    gram_matrix,
    inner_product,
    ket,
    max_normalized_overlap,
    measurement_distribution,
    tensor_product,
    windowed_dft,
)


def dense(s):
    out = np.zeros(s.layout.size, dtype=complex)
    out[s.keys] = s.values
    return out


def random_state(rng, layout, density=0.5):
    v = rng.standard_normal(layout.size) + 1j * rng.standard_normal(layout.size)
    v[rng.random(layout.size) > density] = 0
    keys = np.nonzero(v)[0]
    return SparseState.from_arrays(layout, keys, v[keys])


LAYOUT = Layout((Register("A", 3, "Alice"), Register("B", 2, "Bob"), Register("C", 4, "Charlie")))


def test_encode_decode_roundtrip():
    keys = np.arange(LAYOUT.size)
    digits = LAYOUT.decode(keys)
    assert [LAYOUT.encode(row) for row in digits] == list(keys)
    assert LAYOUT.encode((2, 1, 3)) == 2 * 8 + 1 * 4 + 3


def test_encode_rejects_out_of_range():
    with pytest.raises(LayoutError):
        LAYOUT.encode((3, 0, 0))
    with pytest.raises(LayoutError):
        LAYOUT.encode((0, 0))


def test_duplicate_register_names_rejected():
    with pytest.raises(LayoutError):
        Layout((Register("A", 2, "Alice"), Register("A", 3, "Bob")))


def test_tensor_product_matches_kron():
    x = ket("A", 3, "Alice", {0: 1, 2: -1j})
    y = ket("B", 2, "Bob", {1: 2})
    z = ket("C", 4, "Charlie", {0: 1, 1: 1, 3: 0.5})
    t = tensor_product([x, y, z])
    assert t.layout.names == ("A", "B", "C")
    np.testing.assert_allclose(dense(t), np.kron(np.kron(dense(x), dense(y)), dense(z)))


def test_tensor_product_rejects_shared_register():
    x = basis_ket("A", 2, "Alice", 0)
    with pytest.raises(LayoutError):
        tensor_product([x, x])


def test_zero_amplitudes_are_pruned():
    s = SparseState.from_arrays(LAYOUT, [0, 1, 2], [1.0, 1e-15, 0.0])
    assert s.nnz == 1


@given(st.integers(0, 2**32 - 1))
def test_inner_product_matches_vdot(seed):
    rng = np.random.default_rng(seed)
    x, y = random_state(rng, LAYOUT), random_state(rng, LAYOUT)
    assert inner_product(x, y) == pytest.approx(np.vdot(dense(x), dense(y)), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_gram_matrix_matches_dense(seed):
    rng = np.random.default_rng(seed)
    states = [random_state(rng, LAYOUT, 0.3) for _ in range(5)]
    m = np.array([dense(s) for s in states])
    np.testing.assert_allclose(gram_matrix(states), m.conj() @ m.T, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_tensor_norm_is_multiplicative(seed):
    rng = np.random.default_rng(seed)
    x = random_state(rng, Layout((Register("A", 3, "Alice"),)), 0.9)
    y = random_state(rng, Layout((Register("B", 4, "Bob"),)), 0.9)
    assert tensor_product([x, y]).norm_sq() == pytest.approx(x.norm_sq() * y.norm_sq())


def test_max_normalized_overlap_reports_pair():
    a = ket("A", 3, "Alice", {0: 1})
    b = ket("A", 3, "Alice", {1: 1})
    c = ket("A", 3, "Alice", {0: 1, 1: 1})
    ov, pair = max_normalized_overlap([a, b, c])
    assert ov == pytest.approx(1 / np.sqrt(2))
    assert pair in ((0, 2), (1, 2))
    assert max_normalized_overlap([a, b])[0] == 0.0


def test_projector_mask_matches_explicit_patterns():
    p = DiagonalProjector.build({"A": [0, 1], "B": [0]}, {"A": [2], "C": [3]})
    digits = LAYOUT.decode(np.arange(LAYOUT.size))
    expect = ((digits[:, 0] <= 1) & (digits[:, 1] == 0)) | ((digits[:, 0] == 2) & (digits[:, 2] == 3))
    np.testing.assert_array_equal(p.mask(LAYOUT, np.arange(LAYOUT.size)), expect)


def test_projector_on_missing_register_raises():
    with pytest.raises(LayoutError):
        DiagonalProjector.build({"z": [0]}).mask(LAYOUT, np.arange(3))


def test_apply_projector_weight():
    s = tensor_product([ket("A", 3, "Alice", {0: 1, 1: 1, 2: 1}), basis_ket("B", 2, "Bob", 0)])
    out, w = apply_projector(s, DiagonalProjector.build({"A": [2]}))
    assert w == pytest.approx(1 / 3)
    assert out.nnz == 1
    empty, w0 = apply_projector(s, DiagonalProjector.build({"B": [1]}))
    assert w0 == 0.0 and empty.nnz == 0


def test_relabel_projector():
    p = DiagonalProjector.build({"a": [0], "A": [1, 2]}).relabel("a", {0: 1, 1: 0})
    assert p.patterns[0]["a"] == frozenset([1])
    assert p.patterns[0]["A"] == frozenset([1, 2])


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_dft_is_unitary(n):
    check_unitary(dft_matrix(n))


def test_windowed_dft_acts_only_on_window():
    u = windowed_dft(5, [1, 2, 3])
    check_unitary(u)
    assert u[0, 0] == 1 and u[4, 4] == 1
    np.testing.assert_allclose(u[1:4, 1:4], dft_matrix(3))


def test_check_unitary_rejects():
    with pytest.raises(NonUnitaryError):
        check_unitary(np.array([[1, 1], [0, 1]]))
    with pytest.raises(NonUnitaryError):
        check_unitary(np.ones((2, 3)))


@given(st.integers(0, 2**32 - 1), st.sampled_from(["A", "B", "C"]))
def test_apply_local_basis_matches_dense(seed, reg):
    rng = np.random.default_rng(seed)
    s = random_state(rng, LAYOUT)
    dim = LAYOUT.dims[LAYOUT.position(reg)]
    u = dft_matrix(dim)
    t = apply_local_basis(s, reg, u)
    ops = [np.eye(n) for n in LAYOUT.dims]
    ops[LAYOUT.position(reg)] = u
    full = np.kron(np.kron(ops[0], ops[1]), ops[2])
    np.testing.assert_allclose(dense(t), full @ dense(s), atol=1e-12)


def test_measurement_distribution_fourier_outcome_is_sharp():
    # |0> + |1> + |2> is the zeroth Fourier vector, so a DFT measurement is deterministic
    s = ket("A", 3, "Alice", {0: 1, 1: 1, 2: 1})
    dist = measurement_distribution(s, {"A": dft_matrix(3)})
    assert list(dist) == [(0,)]
    assert dist[(0,)] == pytest.approx(1.0)


def test_relayout_changes_only_owner():
    s = basis_ket("A", 3, "Alice", 1)
    t = s.relayout(s.layout.with_owner("A", "Bob"))
    assert t.layout.owner("A") == "Bob"
    with pytest.raises(LayoutError):
        s.relayout(Layout((Register("B", 3, "Bob"),)))
