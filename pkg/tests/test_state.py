import numpy as np
import pytest

from dott.decomp import decompose
from dott.grids import fourier_grid, gauss_legendre_grid
from dott.state import DoTtState, assemble_gram, load_state, save_state
from dott.trees import tt_tree


def _forced_state():
    g = gauss_legendre_grid(50, -1.0, 1.0)
    y = g.nodes
    U = (
        y[None, :, None] * y[None, None, :]
        - 10.0 * y[:, None, None] * y[None, None, :]
        - 3.0 * y[:, None, None] * y[None, :, None] * y[None, None, :]
    )
    return DoTtState.from_decomposition(decompose(U, tt_tree(3), (g,) * 3, 1e-5)), g


class TestAssembleGram:
    def test_rank_one(self):
        g = fourier_grid(32, 2 * np.pi)
        f1 = np.sin(g.nodes) + 2.0
        f2 = np.cos(g.nodes) + 1.5
        st = DoTtState.from_rank_one((g, g), [f1, f2])
        C = assemble_gram(st, 1, 0)
        assert C.shape == (1, 1)
        norm2 = np.dot(g.weights, f1 * f1) * np.dot(g.weights, f2 * f2)
        assert C[0, 0] == pytest.approx(norm2, rel=1e-12)

    def test_fresh_decomposition_diagonal(self):
        # exactly-representable rank-2 function: the level-1 composite Gram
        # is diagonal with the squared eigenvalue products
        st, g = _forced_state()
        C = assemble_gram(st, 1, 0)
        svs = st.level1_singular_values()
        assert C.shape == (2, 2)
        assert abs(C[0, 1]) < 1e-9
        assert np.diag(C) == pytest.approx(np.sort(svs**2)[::-1], rel=1e-9)

    def test_matches_dense_composites(self):
        st, g = _forced_state()
        # materialize the level-1 composites densely and compare
        comp = []
        for k in range(st.counts[0][0]):
            acc = np.zeros((g.n, g.n))
            off = st.offsets(1)
            for q in range(off[k], off[k + 1]):
                acc += np.outer(st.leaf[1][:, q], st.final[:, q])
            comp.append(acc)
        w2 = np.outer(g.weights, g.weights)
        C_ref = np.array([[np.sum(w2 * a * b) for b in comp] for a in comp])
        C = assemble_gram(st, 1, 0)
        assert C == pytest.approx(C_ref, abs=1e-10 * np.abs(C_ref).max())

    def test_level_bounds(self):
        st, _ = _forced_state()
        with pytest.raises(ValueError):
            assemble_gram(st, 0, 0)
        with pytest.raises(ValueError):
            assemble_gram(st, 3, 0)


class TestStateBasics:
    def test_rank_one_reconstruction(self):
        g = fourier_grid(16, 2 * np.pi)
        f = [np.sin(g.nodes) + 2, np.cos(g.nodes), np.exp(np.sin(g.nodes))]
        st = DoTtState.from_rank_one((g,) * 3, f)
        ref = np.einsum("i,j,k->ijk", *f)
        assert st.reconstruct() == pytest.approx(ref, abs=1e-12 * np.abs(ref).max())
        assert st.orthonormality_drift() < 1e-14

    def test_norm_matches_dense(self):
        st, g = _forced_state()
        U = st.reconstruct()
        w3 = np.einsum("i,j,k->ijk", g.weights, g.weights, g.weights)
        assert st.norm() == pytest.approx(np.sqrt(np.sum(w3 * U * U)), rel=1e-12)

    def test_pack_unpack_roundtrip(self):
        st, _ = _forced_state()
        vec = st.pack()
        st2 = st.unpack_like(vec)
        assert st2.rank_profile() == st.rank_profile()
        assert np.array_equal(st2.pack(), vec)

    def test_multi_indices(self):
        st, _ = _forced_state()
        assert st.multi_indices(0) == [(1,), (2,)]
        assert st.multi_indices(1) == [(1, 1), (2, 1)]

    def test_checkpoint_roundtrip(self, tmp_path):
        st, _ = _forced_state()
        st.time = 1.25
        path = str(tmp_path / "state.npz")
        save_state(st, path)
        st2 = load_state(path)
        assert isinstance(st2, DoTtState)
        assert st2.time == 1.25
        assert np.array_equal(st2.final, st.final)
        for a, b in zip(st2.leaf, st.leaf):
            assert np.array_equal(a, b)
