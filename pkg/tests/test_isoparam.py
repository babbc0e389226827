"""Isometric parametrization, arrow patterns, dimensions, checkpoints."""

import numpy as np
import pytest
import scipy.linalg as sla

from igftns import gaussian as G
from igftns import isoparam as iso
from igftns.linalg import symplectic_form


def _inout_blocks(params, site):
    """(A, B) blocks of the site covariance in the (in, out) grouping."""
    loc = iso.local_covariances(params)[site]
    incoming, outgoing = iso._inout_labels(params.pattern, params.n_v, site)
    gamma = G.reorder_legs(loc.matrix, G.mode_labels(params.n_v),
                           incoming + outgoing)
    n_in = len(incoming)
    return gamma[:n_in, :n_in], gamma[:n_in, n_in:], gamma[n_in:, n_in:]


class TestPatterns:
    def test_uniform_counts(self):
        pat = iso.uniform_pattern()
        assert pat.n_in(1, 0) == 4 and pat.n_out(1, 0) == 2
        assert pat.n_in(4, 0) == 10 and pat.n_out(4, 0) == 8

    def test_alternating_arrows(self):
        pat = iso.alternating_pattern((2, 1))
        assert pat.outgoing[0] == frozenset("ru")
        assert pat.outgoing[1] == frozenset("rd")
        pat22 = iso.alternating_pattern((2, 2))
        assert pat22.outgoing[:2] == (frozenset("ru"),) * 2
        assert pat22.outgoing[2:] == (frozenset("rd"),) * 2

    def test_alternating_needs_two_columns(self):
        with pytest.raises(ValueError):
            iso.alternating_pattern((1, 1))

    def test_custom_validation(self):
        # with n_p = 2 the difference n_in - n_out is always even, so only
        # nonnegativity can bind; three outgoing legs are valid up to the
        # n_in = n_out boundary (n_v = 1) and invalid beyond it
        pat = iso.custom_pattern((1, 1), [("r", "u", "d")])
        pat.validate(1)
        assert pat.n_in(1, 0) == pat.n_out(1, 0) == 3
        with pytest.raises(ValueError, match=">= 0"):
            pat.validate(2)
        with pytest.raises(ValueError, match=">= 0"):
            iso.custom_pattern((1, 1), [("r", "u", "d", "l")]).validate(4)

    def test_fully_outgoing_boundary_case(self):
        # n_in = n_out: Q is entirely the B block and A is empty of rank
        rng = np.random.default_rng(8)
        from igftns.linalg import random_special_orthogonal
        pat = iso.custom_pattern((1, 1), [("r", "u", "d")])
        q = random_special_orthogonal(3, rng)
        params = iso.IsoParams(qs=(q,), pattern=pat, n_v=1)
        loc = iso.build_local_covariance(params, 0)
        assert loc.purity_error() < 1e-12

    def test_unknown_leg_rejected(self):
        with pytest.raises(ValueError):
            iso.custom_pattern((1, 1), [("x",)])


class TestBuildLocalCovariance:
    def test_purity_conditions_hold(self):
        rng = np.random.default_rng(2)
        for name, cell in [("uniform", (1, 1)), ("alternating", (2, 1)),
                           ("alternating", (2, 2))]:
            for n_v in (1, 2, 3):
                params = iso.random_init(name, n_v, rng.integers(2 ** 32), cell=cell)
                for s in range(len(params.qs)):
                    a, b, d = _inout_blocks(params, s)
                    n_out = params.pattern.n_out(n_v, s)
                    assert np.abs(b.T @ b - np.eye(n_out)).max() < 1e-12
                    assert np.abs(a.T @ a - (np.eye(a.shape[0]) - b @ b.T)).max() < 1e-12
                    assert np.abs(a @ b).max() < 1e-12
                    assert np.abs(d).max() == 0.0
                    loc = iso.local_covariances(params)[s]
                    assert loc.purity_error() < 1e-12

    def test_identity_q_example(self):
        # Q = I with n_in = 4, n_out = 2: B is the first two identity
        # columns, A = R J2 R^T on the remaining ones
        pat = iso.uniform_pattern()
        params = iso.IsoParams(qs=(np.eye(4),), pattern=pat, n_v=1)
        a, b, d = _inout_blocks(params, 0)
        assert np.array_equal(b, np.eye(4)[:, :2])
        expected_a = np.zeros((4, 4))
        expected_a[2, 3], expected_a[3, 2] = 1.0, -1.0
        assert np.array_equal(a, expected_a)
        assert np.abs(d).max() == 0.0

    def test_outgoing_block_exactly_zero(self):
        params = iso.random_init("uniform", 3, 9)
        loc = iso.build_local_covariance(params, 0)
        labels = G.mode_labels(3)
        out_idx = [i for i, (leg, _) in enumerate(labels) if leg in ("r", "u")]
        assert np.abs(loc.matrix[np.ix_(out_idx, out_idx)]).max() == 0.0

    def test_gauge_invariance_of_r_block(self):
        # right-multiplying R by rotations inside each J block leaves the
        # covariance unchanged
        rng = np.random.default_rng(7)
        params = iso.random_init("uniform", 2, 13)
        q = params.qs[0]
        n_out = params.pattern.n_out(2, 0)
        loc0 = iso.build_local_covariance(params, 0).matrix
        n_r = q.shape[0] - n_out
        blocks = []
        for _ in range(n_r // 2):
            th = rng.uniform(0, 2 * np.pi)
            blocks.append(np.array([[np.cos(th), -np.sin(th)],
                                    [np.sin(th), np.cos(th)]]))
        s = sla.block_diag(*blocks)
        q2 = np.hstack([q[:, :n_out], q[:, n_out:] @ s])
        params2 = params.replace_qs([q2])
        loc2 = iso.build_local_covariance(params2, 0).matrix
        assert np.abs(loc0 - loc2).max() < 1e-13

    def test_unconstrained_examples(self):
        # O = I at n_v = 0 gives the bare symplectic form
        p = iso.UnconstrainedParams(os_=(np.eye(2),), n_v=0)
        loc = iso.build_local_covariance_unconstrained(p, 0)
        assert np.array_equal(loc.matrix, np.array([[0.0, 1.0], [-1.0, 0.0]]))
        # random O stays pure; n_v = 2 gives a 10x10 covariance
        p = iso.random_init("unconstrained", 2, 3)
        loc = iso.build_local_covariance_unconstrained(p, 0)
        assert loc.matrix.shape == (10, 10)
        assert loc.purity_error() < 1e-12

    def test_unconstrained_contains_isometric_even_nv(self):
        # round-trip: factor an isometric covariance as O J O^T with O in
        # SO(n).  For even n_v the orientation (Pfaffian) matches; for odd
        # n_v the single-tensor orientation is -1 and only a paired bond
        # gauge flip restores it, so the round-trip test uses even n_v.
        rng = np.random.default_rng(4)
        for name, cell, n_v in [("uniform", (1, 1), 2), ("alternating", (2, 1), 2)]:
            params = iso.random_init(name, n_v, rng.integers(2 ** 32), cell=cell)
            for s in range(len(params.qs)):
                gamma = iso.local_covariances(params)[s].matrix
                t, z = sla.schur(gamma)
                n = gamma.shape[0]
                for i in range(0, n, 2):
                    if t[i, i + 1] < 0:
                        z[:, [i, i + 1]] = z[:, [i + 1, i]]
                assert np.linalg.det(z) > 0
                j = symplectic_form(n)
                assert np.abs(z @ j @ z.T - gamma).max() < 1e-10

    def test_odd_nv_orientation_fixed_by_bond_flip(self):
        # flipping one shared virtual mode on both ends of a bond leaves
        # the physical state invariant and flips both tensor orientations
        from igftns import models as M
        from igftns import optimize as opt
        grid = M.build_grid(4, 4, cell=(2, 1))
        params = iso.random_init("alternating", 1, 21, cell=(2, 1))
        gammas, _ = opt.covariance_field(params, grid)
        locs = iso.local_covariances(params)
        labels = G.mode_labels(1)
        f = np.eye(6)
        # site 0 r-mode pairs with site 1 l-mode on the intra-cell bond
        f0, f1 = f.copy(), f.copy()
        f0[labels.index(("r", 0)), labels.index(("r", 0))] = -1.0
        f1[labels.index(("l", 0)), labels.index(("l", 0))] = -1.0
        flipped = [G.LocalTensorCovariance.from_matrix(f0 @ locs[0].matrix @ f0.T, 1),
                   G.LocalTensorCovariance.from_matrix(f1 @ locs[1].matrix @ f1.T, 1)]
        gammas2, _ = G.contract_all(flipped, grid)
        assert np.abs(gammas - gammas2).max() < 1e-12


class TestRandomInit:
    def test_deterministic_in_seed(self):
        a = iso.random_init("uniform", 2, 123)
        b = iso.random_init("uniform", 2, 123)
        assert all(np.array_equal(x, y) for x, y in zip(a.qs, b.qs))

    def test_distinct_seeds_differ(self):
        a = iso.random_init("uniform", 2, 1)
        b = iso.random_init("uniform", 2, 2)
        assert not np.allclose(a.qs[0], b.qs[0])

    def test_invariants_hold(self):
        for seed in range(5):
            p = iso.random_init("alternating", 3, seed)
            for q in p.qs:
                assert np.abs(q.T @ q - np.eye(q.shape[0])).max() < 1e-12
                assert np.linalg.det(q) > 0


class TestManifoldDimensions:
    def test_tns_examples(self):
        assert iso.manifold_dimensions("TNS", d=2, chi=2) == 24
        assert iso.manifold_dimensions("isoTNS", d=2, chi=2) == 20
        assert iso.manifold_dimensions("MPS", d=2, chi=3) == 9
        assert iso.manifold_dimensions("isoMPS", d=2, chi=3) == 9

    def test_gaussian_examples(self):
        assert iso.manifold_dimensions("GaussianTNS", n=2) == 45
        assert iso.manifold_dimensions("GaussianIsoTNS", n=2) == 15

    def test_ratio(self):
        assert abs(iso.bond_dimension_ratio(2) - 1.07) < 5e-3


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        for name, cell, n_v in [("uniform", (1, 1), 2), ("alternating", (2, 1), 3),
                                ("unconstrained", (1, 1), 1)]:
            p = iso.random_init(name, n_v, 5, cell=cell)
            path = tmp_path / f"{name}.ckpt"
            iso.save_checkpoint(path, p)
            q = iso.load_checkpoint(path)
            assert q.pattern.name == name and q.n_v == n_v
            assert all(np.array_equal(a, b) for a, b in zip(p.qs, q.qs))

    def test_header_layout(self, tmp_path):
        p = iso.random_init("uniform", 1, 0)
        path = tmp_path / "h.ckpt"
        iso.save_checkpoint(path, p)
        blob = path.read_bytes()
        assert blob[:4] == b"IGFT"
        import struct
        version, n_v, pid, n_sub, n_in = struct.unpack_from("<IIIII", blob, 4)
        assert (version, n_v, pid, n_sub, n_in) == (1, 1, 1, 1, 4)
        assert len(blob) == 24 + 8 * 16

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"XXXX" + b"\0" * 32)
        with pytest.raises(ValueError, match="magic"):
            iso.load_checkpoint(path)

    def test_custom_needs_pattern(self, tmp_path):
        from igftns.linalg import random_special_orthogonal
        pat = iso.custom_pattern((1, 1), [("r",)])
        rng = np.random.default_rng(0)
        q = random_special_orthogonal(pat.n_in(2, 0), rng)
        p = iso.IsoParams(qs=(q,), pattern=pat, n_v=2)
        path = tmp_path / "c.ckpt"
        iso.save_checkpoint(path, p)
        with pytest.raises(ValueError, match="custom"):
            iso.load_checkpoint(path)
        q = iso.load_checkpoint(path, pat)
        assert q.pattern.name == "custom"
