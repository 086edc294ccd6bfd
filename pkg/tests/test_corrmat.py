import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crmcopula import corrmat as cm
from crmcopula.corrmat import CorrStructure, Structure
from crmcopula.errors import DomainError, NotPositiveDefinite, SingularMatrix

from conftest import GRID, dense_ext, dense_sev, valid_pairs


def rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


class TestStructure:
    def test_parse(self):
        assert Structure.parse("Equi") is Structure.EQUI
        assert Structure.parse("AR") is Structure.AR
        assert Structure.parse(2) is Structure.AR
        with pytest.raises(DomainError):
            Structure.parse("toeplitz")

    def test_equi_constraint(self):
        CorrStructure("equi", 0.3, 0.1)
        with pytest.raises(DomainError):
            CorrStructure("equi", 0.3, 0.09)
        with pytest.raises(DomainError):
            CorrStructure("ar", 1.0, 0.0)
        # AR carries no joint constraint at construction
        CorrStructure("ar", 0.9, -0.9)


class TestDeterminants:
    def test_examples(self):
        assert cm.det_sev(CorrStructure("equi", 0.0, 0.7), 1) == 1.0
        assert abs(cm.det_sev(CorrStructure("equi", 0.0, 0.5), 2) - 0.75) < 1e-15
        assert abs(cm.det_sev(CorrStructure("ar", 0.0, 0.5), 3) - 0.5625) < 1e-15
        assert cm.det_ext(CorrStructure("equi", 0.3, 0.5), 0) == 1.0
        assert abs(cm.det_ext(CorrStructure("equi", 0.3, 0.5), 2) - 0.66) < 1e-14
        ar = cm.det_ext(CorrStructure("ar", 0.3, 0.5), 2)
        assert abs(ar - np.linalg.det(dense_ext("ar", 0.3, 0.5, 2))) < 1e-14

    def test_ar_severity_exponent(self):
        # order-k AR(1) block has determinant (1 - rho^2)^(k-1), not ^k
        for k in range(1, 8):
            s = CorrStructure("ar", 0.0, 0.6)
            assert rel(cm.det_sev(s, k), (1 - 0.36) ** (k - 1)) < 1e-14
            assert rel(cm.det_sev(s, k), np.linalg.det(dense_sev("ar", 0.6, k))) < 1e-12

    @pytest.mark.parametrize("kind", ["equi", "ar"])
    def test_against_lu(self, kind):
        for r1, r2 in valid_pairs(kind):
            s = CorrStructure(kind, r1, r2)
            for k in range(1, 13):
                assert rel(cm.det_sev(s, k), np.linalg.det(dense_sev(kind, r2, k))) < 1e-10
                assert rel(cm.det_ext(s, k), np.linalg.det(dense_ext(kind, r1, r2, k))) < 1e-10


class TestInverse:
    def test_examples(self):
        inv = cm.inv_sev(CorrStructure("equi", 0.0, 0.5), 2).to_dense()
        assert np.allclose(inv, [[4 / 3, -2 / 3], [-2 / 3, 4 / 3]], atol=1e-14)
        inv0 = cm.inv_sev(CorrStructure("equi", 0.0, 1e-300), 5)
        assert inv0.a == pytest.approx(1.0) and abs(inv0.b) < 1e-299
        ar = cm.inv_sev(CorrStructure("ar", 0.0, 0.4), 3).to_dense()
        assert np.max(np.abs(ar - np.linalg.inv(dense_sev("ar", 0.4, 3)))) < 1e-12

    def test_ar_bands(self):
        inv = cm.inv_sev(CorrStructure("ar", 0.0, 0.4), 5)
        c = 1 / (1 - 0.16)
        assert inv.d_edge == pytest.approx(c)
        assert inv.d_inner == pytest.approx(1.16 * c)
        assert inv.off == pytest.approx(-0.4 * c)

    @pytest.mark.parametrize("kind", ["equi", "ar"])
    def test_against_dense(self, kind):
        for r1, r2 in valid_pairs(kind):
            s = CorrStructure(kind, r1, r2)
            for k in range(1, 13):
                S = dense_sev(kind, r2, k)
                inv = cm.inv_sev(s, k).to_dense()
                assert np.max(np.abs(S @ inv - np.eye(k))) < 1e-10
                ref = np.linalg.inv(S)
                assert np.max(np.abs(inv - ref)) / max(1, np.max(np.abs(ref))) < 1e-10

    def test_singular(self):
        # rho2 -> -1/(k-1) makes the equicorrelation block singular; build it bypassing validation
        s = CorrStructure.__new__(CorrStructure)
        object.__setattr__(s, "kind", Structure.EQUI)
        object.__setattr__(s, "rho1", 0.0)
        object.__setattr__(s, "rho2", -0.5)
        with pytest.raises(SingularMatrix):
            cm.inv_sev(s, 3)

    def test_matvec(self, rng):
        for kind in ("equi", "ar"):
            s = CorrStructure(kind, 0.1, 0.35)
            inv = cm.inv_sev(s, 6)
            q = rng.standard_normal((4, 6))
            assert np.allclose(inv.matvec(q), q @ inv.to_dense().T, atol=1e-13)


class TestQuadForms:
    def test_identity_case(self, rng):
        q = rng.standard_normal(5)
        a, b, c = cm.quad_forms(CorrStructure("ar", 0.0, 0.0), 5, q)
        assert a == pytest.approx(q.sum()) and b == 5 and c == pytest.approx(q @ q)

    def test_example(self):
        _, b, _ = cm.quad_forms(CorrStructure("equi", 0.0, 0.5), 2, np.ones(2))
        assert b == pytest.approx(4 / 3, abs=1e-14)

    @pytest.mark.parametrize("kind", ["equi", "ar"])
    def test_against_dense(self, kind, rng):
        for r1, r2 in valid_pairs(kind):
            s = CorrStructure(kind, r1, r2)
            for k in range(1, 13):
                Si = np.linalg.inv(dense_sev(kind, r2, k))
                q = rng.standard_normal((3, k))
                one = np.ones(k)
                a, b, c = cm.quad_forms(s, k, q)
                ra, rb, rc = q @ Si @ one, one @ Si @ one, np.einsum("ij,jk,ik->i", q, Si, q)
                scale = max(1.0, np.max(np.abs(Si)))
                assert np.max(np.abs(a - ra)) / scale < 1e-10 * max(1, np.max(np.abs(ra)))
                assert abs(b - rb) / scale < 1e-10 * max(1, abs(rb))
                assert np.max(np.abs(c - rc)) / scale < 1e-10 * max(1, np.max(np.abs(rc)))

    def test_length_check(self):
        with pytest.raises(DomainError):
            cm.quad_forms(CorrStructure("ar", 0.0, 0.2), 3, np.ones(4))


def min_eig_positive(m):
    return np.linalg.eigvalsh(m).min() > 1e-12


class TestPositiveDefiniteness:
    def test_examples(self):
        assert cm.is_pd_ext("equi", 0.6, 0.5, 3)
        assert not cm.is_pd_ext("equi", 0.8, 0.1, 3)
        assert cm.is_pd_ext("ar", 0.5, 0.3, 0)

    def test_ar_counterexample(self):
        # the extended AR matrix is not PD for every (rho1, rho2): eigenvalue oracle
        for k in (2, 10):
            m = dense_ext("ar", 0.9, -0.9, k)
            assert np.linalg.eigvalsh(m).min() < 0
            assert not cm.is_pd_ext("ar", 0.9, -0.9, k)

    @pytest.mark.parametrize("kind", ["equi", "ar"])
    def test_matches_eigenvalues(self, kind):
        for r1 in GRID:
            for r2 in GRID:
                for k in range(0, 13):
                    m = dense_ext(kind, r1, r2, k)
                    assert cm.is_pd_ext(kind, r1, r2, k) == min_eig_positive(m), (kind, r1, r2, k)

    def test_pd_bound(self):
        assert cm.pd_bound(0.4, 1) == -1.0
        assert cm.pd_bound(0.5, 5) == pytest.approx(0.0625)
        assert abs(cm.pd_bound(0.5, 10**6) - 0.25) < 1e-5

    def test_pd_bound_monotone(self):
        for r1 in GRID:
            vals = [cm.pd_bound(r1, k) for k in range(1, 52)]
            assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_pd_bound_is_the_equi_boundary(self):
        for r1 in (0.3, 0.5, 0.7):
            for k in (2, 4, 7):
                b = cm.pd_bound(r1, k)
                if b > -1:
                    assert min_eig_positive(dense_ext("equi", r1, min(b + 1e-6, 0.999), k))
                if b - 1e-6 > -1:
                    assert not min_eig_positive(dense_ext("equi", r1, b - 1e-6, k))

    def test_max_pd_order_ar(self):
        assert cm.max_pd_order_ar(0.0, 0.3) == np.inf
        for r1, r2 in [(0.3, 0.5), (0.5, -0.2), (0.9, 0.0), (0.2, 0.9)]:
            k = cm.max_pd_order_ar(r1, r2)
            assert cm.is_pd_ext("ar", r1, r2, k)
            assert not cm.is_pd_ext("ar", r1, r2, k + 1)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-0.95, 0.95), st.floats(-0.95, 0.95), st.integers(1, 15))
    def test_matches_eigenvalues_property(self, r1, r2, k):
        for kind in ("equi", "ar"):
            eig = np.linalg.eigvalsh(dense_ext(kind, r1, r2, k)).min()
            if abs(eig) > 1e-9:  # away from the singular boundary
                assert cm.is_pd_ext(kind, r1, r2, k) == (eig > 0)

    def test_boundary_is_not_pd(self):
        # k rho1^2 - 1 == (k-1) rho2 exactly: singular
        assert not cm.is_pd_ext("equi", -0.6, 0.2, 5)


class TestConditionalCholesky:
    def test_independent_frequency(self):
        for kind in ("equi", "ar"):
            s = CorrStructure(kind, 0.0, 0.4)
            L = cm.conditional_chol(s, 4)
            assert np.allclose(L, np.linalg.cholesky(dense_sev(kind, 0.4, 4)), atol=1e-14)

    def test_reconstruction(self):
        s = CorrStructure("equi", 0.2, 0.3)
        L = cm.conditional_chol(s, 3)
        target = dense_sev("equi", 0.3, 3) - 0.04
        assert np.max(np.abs(L @ L.T - target)) < 1e-12
        assert np.allclose(L, np.linalg.cholesky(target), atol=1e-12)

    def test_scalar_case(self):
        L = cm.conditional_chol(CorrStructure("equi", 0.3, 0.5), 1)
        assert L.shape == (1, 1) and L[0, 0] == pytest.approx(np.sqrt(1 - 0.09))

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            cm.conditional_chol(CorrStructure("ar", 0.9, -0.9), 10)

    def test_read_only(self):
        L = cm.conditional_chol(CorrStructure("ar", 0.2, 0.5), 3)
        with pytest.raises(ValueError):
            L[0, 0] = 1.0

    @pytest.mark.parametrize("kind", ["equi", "ar"])
    def test_grid(self, kind):
        for r1, r2 in valid_pairs(kind):
            for k in range(1, 9):
                if not cm.is_pd_ext(kind, r1, r2, k):
                    continue
                target = dense_sev(kind, r2, k) - r1 * r1
                if np.linalg.eigvalsh(target).min() <= 1e-10:
                    continue
                L = cm.conditional_chol(CorrStructure(kind, r1, r2), k)
                assert np.max(np.abs(L @ L.T - target)) < 1e-10
