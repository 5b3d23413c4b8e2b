import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vdpsync import lattice
from vdpsync.lattice import (CouplingMatrix, DisorderSpec, LatticeError,
                             LatticeSpec, apply_disorder, build_custom,
                             build_kagome, build_ssh, count_zero_modes,
                             eigendecompose)

L0 = 0.25


class TestSSH:
    def test_dimer_eigenvalues(self):
        m = build_ssh(2, 0.25, 0.0)
        assert m.entries[0, 1] == 0.25
        dec = eigendecompose(m)
        assert np.allclose(dec.eigenvalues, [-0.25, 0.25])
        # eigenvectors (1, -/+1)/sqrt(2) up to sign convention
        assert np.allclose(np.abs(dec.eigenvectors), 1 / np.sqrt(2))

    def test_bond_pattern(self):
        m = build_ssh(6, L0, 0.1)
        bonds = dict(((j, jp), s) for j, jp, s in m.bonds())
        assert bonds[(1, 2)] == pytest.approx(L0 - 0.1)
        assert bonds[(2, 3)] == pytest.approx(L0 + 0.1)
        assert bonds[(3, 4)] == pytest.approx(L0 - 0.1)
        assert (1, 3) not in bonds

    def test_topological_gap_modes(self):
        dec = eigendecompose(build_ssh(20, L0, 0.8 * L0))
        assert count_zero_modes(dec, 1e-3 * L0) == 2

    def test_trivial_phase_no_gap_modes(self):
        dec = eigendecompose(build_ssh(20, L0, -0.8 * L0))
        assert count_zero_modes(dec, 0.1 * L0) == 0

    # finite-size splitting: 2 mid-gap modes hold at 1e-3*lambda0 only from
    # dimerization 0.4 on; at +0.2 the edge modes sit at 1.16e-2*lambda0
    @pytest.mark.parametrize("dl_frac,expected", [
        (0.4, 2), (0.6, 2), (0.8, 2), (-0.2, 0), (-0.4, 0), (-0.6, 0), (-0.8, 0)])
    def test_zero_mode_count_at_spec_tolerance(self, dl_frac, expected):
        dec = eigendecompose(build_ssh(20, L0, dl_frac * L0))
        assert count_zero_modes(dec, 1e-3 * L0) == expected

    def test_small_dimerization_edge_modes_are_midgap(self):
        dec = eigendecompose(build_ssh(20, L0, 0.2 * L0))
        split = np.min(np.abs(dec.eigenvalues))
        assert 1e-3 * L0 < split < 0.05 * L0  # in the gap, above the strict tol
        assert count_zero_modes(dec, 0.05 * L0) == 2

    def test_chiral_symmetry_of_spectrum(self):
        for dl in (-0.6, 0.0, 0.3, 0.8):
            ev = eigendecompose(build_ssh(20, L0, dl * L0)).eigenvalues
            assert np.max(np.abs(np.sort(ev) + np.sort(-ev)[::-1])) < 1e-10

    def test_edge_eigenvector_localization(self):
        dec = eigendecompose(build_ssh(20, L0, 0.6 * L0))
        boundary = [0, 1, 2, 17, 18, 19]
        for idx in dec.zero_mode_indices:
            v = dec.eigenvectors[:, idx]
            assert np.sum(v[boundary] ** 2) > 0.9

    def test_rejects_odd_or_tiny(self):
        with pytest.raises(LatticeError):
            build_ssh(7, L0, 0.0)
        with pytest.raises(LatticeError):
            build_ssh(0, L0, 0.0)


class TestKagome:
    def test_site_count(self):
        assert build_kagome(5, -0.025, 0.25).n == 45
        assert build_kagome(2, -0.025, 0.25).n == 9

    def test_corner_sites_have_degree_two(self):
        m = build_kagome(5, -1.0, 2.0)
        deg = np.count_nonzero(m.entries, axis=1)
        assert list(deg[:3]) == [2, 2, 2]
        # corners touch only up-triangle (lambda1) bonds
        for j in range(3):
            vals = m.entries[j][m.entries[j] != 0]
            assert np.allclose(vals, -1.0)

    def test_boundary_ordering_blocks(self):
        m = build_kagome(5, -0.025, 0.25)
        labels = m.site_labels
        assert labels[0] == "A(0,0)"        # top corner
        assert labels[1] == "B(4,0)"        # left corner
        assert labels[2] == "C(4,4)"        # right corner
        assert len(labels) == 45

    def test_three_corner_modes_in_topological_phase(self):
        # strict near-zero at weak breathing; exponentially split at -0.1
        dec = eigendecompose(build_kagome(5, -0.05 * 0.25, 0.25))
        assert count_zero_modes(dec, 1e-6 * 0.25) == 3
        dec2 = eigendecompose(build_kagome(5, -0.1 * 0.25, 0.25))
        assert count_zero_modes(dec2, lattice.kagome_default_zero_tol(0.25)) == 3

    def test_trivial_phase_no_corner_modes(self):
        dec = eigendecompose(build_kagome(5, -1.3 * 0.25, 0.25))
        gap_tol = 0.5 * np.sort(np.abs(dec.eigenvalues))[3]
        assert count_zero_modes(dec, max(gap_tol, 1e-4 * 0.25)) == 0

    def test_corner_mode_localization(self):
        m = build_kagome(5, -0.05 * 0.25, 0.25)
        dec = eigendecompose(m, zero_tol=1e-6 * 0.25)
        assert len(dec.zero_mode_indices) == 3
        adj = m.entries != 0
        two_hop = adj @ adj
        for idx in dec.zero_mode_indices:
            v = dec.eigenvectors[:, idx] ** 2
            # weight within two bonds of one corner
            best = 0.0
            for corner in range(3):
                near = adj[corner] | two_hop[corner] > 0
                near[corner] = True
                best = max(best, v[near].sum())
            assert best > 0.95

    def test_rejects_bad_signs(self):
        with pytest.raises(LatticeError):
            build_kagome(5, 0.1, 0.25)
        with pytest.raises(LatticeError):
            build_kagome(5, -0.1, -0.25)
        with pytest.raises(LatticeError):
            build_kagome(1, -0.1, 0.25)


class TestCustomAndTypes:
    def test_custom_bonds(self):
        m = build_custom(3, [(1, 2, 0.1), (2, 3, -0.2)])
        assert m.entries[0, 1] == 0.1
        assert m.entries[2, 1] == -0.2

    def test_rejects_self_and_duplicate(self):
        with pytest.raises(LatticeError):
            build_custom(3, [(1, 1, 0.1)])
        with pytest.raises(LatticeError):
            build_custom(3, [(1, 2, 0.1), (2, 1, 0.2)])

    def test_coupling_matrix_validation(self):
        with pytest.raises(LatticeError):
            CouplingMatrix(np.array([[0.0, 1.0], [0.9, 0.0]]))
        with pytest.raises(LatticeError):
            CouplingMatrix(np.array([[0.5, 1.0], [1.0, 0.0]]))

    def test_csv_roundtrip(self):
        m = build_ssh(4, 0.25, 0.05)
        m2 = CouplingMatrix.from_csv(m.to_csv())
        assert np.array_equal(m.entries, m2.entries)
        assert m.site_labels == m2.site_labels

    def test_spec_roundtrip(self):
        spec = LatticeSpec(kind="ssh", n_sites=8, lambda0=0.25, delta_lambda=0.1)
        spec2 = LatticeSpec.from_dict(spec.to_dict())
        assert np.array_equal(spec.build().entries, spec2.build().entries)

    @given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_custom_always_symmetric_zero_diag(self, n, seed):
        rng = np.random.default_rng(seed)
        pairs = {(int(a) + 1, int(b) + 1) for a, b in
                 rng.integers(0, n, size=(6, 2)) if a < b}
        bonds = [(a, b, float(rng.normal())) for a, b in pairs]
        m = build_custom(n, bonds)
        assert np.max(np.abs(m.entries - m.entries.T)) == 0.0
        assert np.all(np.diag(m.entries) == 0.0)


class TestDisorder:
    def test_zero_strength_is_identity(self, ssh20_topo):
        out = apply_disorder(ssh20_topo, DisorderSpec(0.0, 7))
        assert np.array_equal(out.entries, ssh20_topo.entries)

    def test_bounds_symmetry_connectivity(self, ssh20_topo):
        r = 0.5 * L0
        out = apply_disorder(ssh20_topo, DisorderSpec(r, 123))
        assert np.max(np.abs(out.entries - out.entries.T)) == 0.0
        assert np.all(np.diag(out.entries) == 0.0)
        base = ssh20_topo.entries
        mask = base != 0
        assert np.all(out.entries[~mask] == 0.0)          # connectivity kept
        assert np.max(np.abs(out.entries[mask] - base[mask])) <= r

    @given(st.integers(0, 2 ** 63 - 1))
    @settings(max_examples=20, deadline=None)
    def test_seed_reproducibility(self, seed):
        base = build_ssh(10, L0, 0.1)
        a = apply_disorder(base, DisorderSpec(0.3, seed))
        b = apply_disorder(base, DisorderSpec(0.3, seed))
        assert np.array_equal(a.entries, b.entries)

    def test_midgap_mode_survives_strong_disorder(self):
        # conservative desk-scale robustness check at r = 1.0 lambda0
        base = build_ssh(20, L0, 0.8 * L0)
        hits = 0
        for seed in range(10):
            dis = apply_disorder(base, DisorderSpec(1.0 * L0, seed))
            ev = eigendecompose(dis).eigenvalues
            if np.min(np.abs(ev)) < 0.05 * L0:
                hits += 1
        assert hits >= 9

    def test_rejects_negative_strength(self):
        with pytest.raises(LatticeError):
            DisorderSpec(-0.1, 0)


class TestEigendecompose:
    def test_orthonormal_and_residual(self, ssh20_topo):
        dec = eigendecompose(ssh20_topo)
        v = dec.eigenvectors
        assert np.max(np.abs(v.T @ v - np.eye(20))) < 1e-10
        resid = ssh20_topo.entries @ v - v * dec.eigenvalues
        # localized near-degenerate pairs carry a residual of the order of
        # their splitting; everything else is at eigensolver precision
        ev = dec.eigenvalues
        span = np.max(np.abs(ev))
        for k in range(20):
            gap = np.min(np.abs(np.delete(ev, k) - ev[k]))
            floor = 1e-10 * span * 20
            assert np.max(np.abs(resid[:, k])) < max(floor, 1.5 * gap)

    def test_residual_tight_for_nondegenerate_spectrum(self):
        dec = eigendecompose(build_ssh(8, L0, 0.03))
        m = build_ssh(8, L0, 0.03).entries
        resid = m @ dec.eigenvectors - dec.eigenvectors * dec.eigenvalues
        assert np.max(np.abs(resid)) < 1e-12

    def test_deterministic_degenerate_ordering(self):
        m = build_kagome(4, -0.02, 0.25)
        d1 = eigendecompose(m)
        d2 = eigendecompose(m)
        assert np.array_equal(d1.eigenvectors, d2.eigenvectors)

    def test_asymmetry_rejected(self):
        bad = np.array([[0.0, 1.0], [1.0 + 1e-6, 0.0]])
        with pytest.raises(LatticeError):
            eigendecompose(bad)

    def test_count_zero_modes_requires_positive_tol(self, ssh20_topo):
        with pytest.raises(ValueError):
            count_zero_modes(eigendecompose(ssh20_topo), 0.0)
