import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbsim import clifford, ptm
from rbsim.leakage import off_block_mass

from conftest import haar_unitary

G = clifford.build_group()
Q = clifford.build_extended_qutrit_group()


def random_qubit_channel(rng, n=3):
    u = haar_unitary(2 * n, rng)[:, :2]
    return ptm.ptm_from_kraus([u[2 * i: 2 * i + 2] for i in range(n)])


class TestTable:
    def test_identity_element(self):
        assert G.elements[0].phs == ("I", "I", "I")
        assert np.array_equal(G.integer_ptms[0], np.eye(4))

    def test_ihs_is_x_minus_half_pi(self):
        el = next(e for e in G.elements if e.phs == ("I", "H", "S"))
        assert el.generators == ("Xm90",)

    def test_generator_count(self):
        total = sum(len(e.generators) for e in G.elements)
        assert total == 45
        assert total / 24 == 1.875

    def test_phs_equals_generators_exactly(self):
        gp = clifford.generator_ptms()
        for e in G.elements:
            prod = np.eye(4)
            for g in e.generators:
                prod = gp[g] @ prod
            assert np.array_equal(np.rint(prod).astype(int), clifford.phs_ptm(*e.phs))
            assert np.allclose(prod, np.rint(prod), atol=1e-14)

    def test_distinct_signed_permutations(self):
        keys = {m.tobytes() for m in G.integer_ptms}
        assert len(keys) == 24
        for m in G.integer_ptms:
            assert np.array_equal(np.abs(m).sum(axis=0), np.ones(4))
            assert np.array_equal(m @ m.T, np.eye(4, dtype=int))

    def test_closure_and_inverse_exhaustive(self):
        for a in range(24):
            for b in range(24):
                assert np.array_equal(G.integer_ptms[a] @ G.integer_ptms[b],
                                      G.integer_ptms[G.product[a, b]])
            assert G.product[G.inverse[a], a] == 0 and G.product[a, G.inverse[a]] == 0

    def test_ps_subgroup(self):
        sub = G.ps_subgroup
        assert len(sub) == 12
        assert all(G.product[a, b] in sub for a in sub for b in sub)

    def test_unitary_lift_matches_ptm(self):
        for e in G.elements:
            assert ptm.ptm_from_unitary(e.unitary()).allclose(G.integer_ptms[e.index], atol=1e-14)

    def test_json_export(self):
        obj = json.loads(G.to_json())
        assert len(obj["elements"]) == 24 and len(obj["product"]) == 24
        assert obj["inverse"] == G.inverse.tolist()


class TestInversion:
    def test_identity(self):
        assert clifford.invert_sequence([0]) == 0

    def test_single_elements(self):
        for g in range(24):
            inv = clifford.invert_sequence([g])
            assert np.array_equal(G.integer_ptms[inv] @ G.integer_ptms[g], np.eye(4, dtype=int))

    def test_long_sequence_table_vs_ptm(self, rng):
        seq = rng.integers(0, 24, size=100)
        prod = np.eye(4)
        for g in seq:
            prod = G.ptms[g] @ prod
        inv_ptm = prod.T
        assert np.allclose(G.ptms[clifford.invert_sequence(seq)], inv_ptm, atol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4096))
    def test_sequence_plus_inverse_is_identity(self, seed, m):
        seq = np.random.default_rng(seed).integers(0, 24, size=m)
        prod = np.eye(4)
        for g in list(seq) + [clifford.invert_sequence(seq)]:
            prod = G.ptms[g] @ prod
        assert np.allclose(prod, np.eye(4), atol=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            clifford.invert_sequence([])
        with pytest.raises(IndexError):
            clifford.invert_sequence([24])


class TestTwirl:
    @given(st.integers(0, 2**32 - 1))
    def test_full_twirl_is_depolarizing(self, seed):
        e = random_qubit_channel(np.random.default_rng(seed))
        t = clifford.twirl(e, G.ptms).entries
        a = (np.trace(e.entries) - 1) / 3
        assert np.allclose(t, np.diag([1, a, a, a]), atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_subgroup_twirl_matches_full(self, seed):
        e = random_qubit_channel(np.random.default_rng(seed))
        full = clifford.twirl(e, G.ptms)
        sub = clifford.twirl(e, G.ptms[list(G.ps_subgroup)])
        assert full.allclose(sub, atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_idempotent(self, seed):
        e = random_qubit_channel(np.random.default_rng(seed))
        t = clifford.twirl(e, G.ptms)
        assert clifford.twirl(t, G.ptms).allclose(t, atol=1e-12)

    def test_identity(self):
        assert clifford.twirl(ptm.identity(2), G.ptms).allclose(np.eye(4))

    def test_empty_group(self):
        with pytest.raises(ValueError):
            clifford.twirl(ptm.identity(2), [])


class TestExtendedQutrit:
    def test_size_and_projection(self):
        assert len(Q) == 48
        counts = {}
        for u in Q.unitaries:
            b = ptm.ptm_from_unitary(u[:2, :2]).entries
            idx = next(i for i in range(24) if np.allclose(b, G.ptms[i], atol=1e-12))
            counts[idx] = counts.get(idx, 0) + 1
        assert len(counts) == 24 and set(counts.values()) == {2}

    def test_closure(self):
        for x in range(48):
            for y in range(48):
                assert np.allclose(Q.ptms[x] @ Q.ptms[y], Q.ptms[Q.product[x, y]], atol=1e-12)
            assert Q.product[Q.inverse[x], x] == 0

    def test_identity_twirl(self):
        from rbsim.leakage import twirl48
        assert np.allclose(twirl48(np.eye(9)), np.eye(9), atol=1e-14)

    def test_twirl_block_diagonal_for_random_unitary(self, rng):
        from rbsim.leakage import twirl48
        t = twirl48(ptm.ptm_from_unitary(haar_unitary(3, rng)))
        assert off_block_mass(t) < 1e-10
        # qubit block: identity row/column plus a uniform depolarizing diagonal
        assert np.allclose(t[1:4, 1:4], np.eye(3) * t[1, 1], atol=1e-12)
        assert abs(t[4, 0]) < 1e-10  # unital map: no feed term

    def test_embedding_alone_leaves_offblock_terms(self, rng):
        u = ptm.ptm_from_unitary(haar_unitary(3, rng)).entries
        g = clifford.embedded_qutrit_cliffords()
        t = np.einsum("gji,jk,gkl->il", g, u, g) / 24
        assert np.abs(t[:5, 5:]).max() > 1e-3
