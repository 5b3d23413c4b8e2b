import numpy as np
import pytest

from vdpsync import lattice, meanfield
from vdpsync._rk import SolverOptions
from vdpsync.fluctuations import (CovarianceMatrix, FluctuationParams,
                                  build_diffusion, build_drift,
                                  evolve_covariance, gaussian_wigner,
                                  min_symplectic_eigenvalues,
                                  symplectic_eigenvalues, vacuum_covariance)
from vdpsync.meanfield import MeanFieldParams, Trajectory

P = FluctuationParams(omega0=1.0, kappa1=5e-3, kappa2=1e-2)
ABAR = 0.5  # saturation radius for these rates


def drift_oracle(alpha, p, m, sign_w0=+1.0):
    """Independent entry-by-entry build of the published block formula."""
    n = len(alpha)
    k1t = p.kappa1 - p.gamma_loss
    b = np.zeros((2 * n, 2 * n))
    for j, a in enumerate(alpha):
        sq = (np.conj(a) ** 2 + a ** 2)          # 2 Re a^2
        asym = -1j * p.kappa2 * (np.conj(a) ** 2 - a ** 2)  # real
        b[2 * j, 2 * j] = 0.5 * (k1t - 4 * p.kappa2 * abs(a) ** 2 - p.kappa2 * sq).real
        b[2 * j + 1, 2 * j + 1] = 0.5 * (k1t - 4 * p.kappa2 * abs(a) ** 2 + p.kappa2 * sq).real
        b[2 * j, 2 * j + 1] = 0.5 * (-2 * sign_w0 * p.omega0 + asym).real
        b[2 * j + 1, 2 * j] = 0.5 * (2 * sign_w0 * p.omega0 + asym).real
    for j in range(n):
        for k in range(n):
            if j != k and m.entries[j, k] != 0:
                b[2 * j, 2 * k + 1] = m.entries[j, k]
                b[2 * j + 1, 2 * k] = -m.entries[j, k]
    return b


def flat_trajectory(alpha_vec, coupling, t_end=100.0, dt=0.5,
                    params=MeanFieldParams(1.0, 5e-3, 1e-2)):
    """Constant-in-time mean-field drive (not a solution; a test input)."""
    times = np.arange(0.0, t_end + 1e-9, dt)
    alpha = np.broadcast_to(alpha_vec, (times.size, len(alpha_vec))).copy()
    tr = Trajectory(times, alpha, params, coupling)
    tr._deriv = np.zeros_like(alpha)  # hold the drive exactly constant
    return tr


class TestBuilders:
    def test_drift_vacuum_block(self, dimer):
        b = build_drift(np.zeros(2, complex), P, dimer)
        block = b[:2, :2]
        assert np.allclose(block, [[P.kappa1 / 2, -1.0], [1.0, P.kappa1 / 2]])
        # coupling block lambda [[0,1],[-1,0]]
        assert np.allclose(b[:2, 2:], [[0, 0.25], [-0.25, 0]])
        assert np.allclose(b[2:, :2], [[0, 0.25], [-0.25, 0]])

    def test_drift_matches_independent_oracle(self, ssh20_topo):
        rng = np.random.default_rng(8)
        alpha = rng.normal(size=20) + 1j * rng.normal(size=20)
        got = build_drift(alpha, P, ssh20_topo)
        want = drift_oracle(alpha, P, ssh20_topo)
        assert np.max(np.abs(got - want)) < 1e-14

    def test_drift_derived_convention_swaps_rotation(self, dimer):
        rng = np.random.default_rng(9)
        alpha = rng.normal(size=2) + 1j * rng.normal(size=2)
        got = build_drift(alpha, P, dimer, convention="derived")
        want = drift_oracle(alpha, P, dimer, sign_w0=-1.0)
        assert np.max(np.abs(got - want)) < 1e-14

    def test_drift_on_saturated_real_amplitude(self, single_site):
        # diagonal (k1 - 4 k2 A^2 -/+ 2 k2 A^2)/2, off-diagonal -/+ w0
        a = np.array([ABAR + 0j])
        b = build_drift(a, P, single_site)
        k2a2 = P.kappa2 * ABAR ** 2
        assert b[0, 0] == pytest.approx(0.5 * (P.kappa1 - 4 * k2a2 - 2 * k2a2))
        assert b[1, 1] == pytest.approx(0.5 * (P.kappa1 - 4 * k2a2 + 2 * k2a2))
        assert b[0, 1] == pytest.approx(-P.omega0)
        assert b[1, 0] == pytest.approx(P.omega0)

    def test_linear_loss_shifts_drift_diagonal(self, single_site):
        import warnings
        a = np.array([0.3 + 0.1j])
        g = 0.1 * P.kappa1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pg = FluctuationParams(P.omega0, P.kappa1, P.kappa2, g)
        db = build_drift(a, pg, single_site) - build_drift(a, P, single_site)
        assert np.allclose(db, -0.5 * g * np.eye(2))

    def test_diffusion_values(self):
        assert np.allclose(build_diffusion(np.zeros(2, complex), P),
                           0.5 * P.kappa1 * np.eye(4))
        d = build_diffusion(np.array([0.5 + 0j]), P)
        # 0.5 (k1 + 4 k2 |a|^2) = 0.5 (k1 + 2 k1) = 1.5 k1
        assert np.allclose(d, 1.5 * P.kappa1 * np.eye(2))

    def test_diffusion_with_linear_loss(self):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pg = FluctuationParams(P.omega0, P.kappa1, P.kappa2, 0.1 * P.kappa1)
        d = build_diffusion(np.zeros(1, complex), pg)
        assert np.allclose(d, 0.55 * P.kappa1 * np.eye(2))

    def test_dimension_mismatch(self, dimer):
        with pytest.raises(ValueError):
            build_drift(np.zeros(3, complex), P, dimer)


class TestEvolution:
    def test_zero_span_returns_initial(self, single_site):
        tr = flat_trajectory(np.zeros(1, complex), single_site)
        series = evolve_covariance(vacuum_covariance(1), tr, P, single_site,
                                   (0.0, 0.0))
        assert len(series) == 1
        assert np.allclose(series.C[0], 0.5 * np.eye(2))

    def test_vacuum_gain_growth_closed_form(self, single_site):
        # alpha = 0: each variance obeys c' = k1 c + k1/2
        tr = flat_trajectory(np.zeros(1, complex), single_site, t_end=400.0)
        series = evolve_covariance(vacuum_covariance(1), tr, P, single_site,
                                   (0.0, 400.0))
        t = series.sample_times
        expect = (0.5 + 0.5) * np.exp(P.kappa1 * t) - 0.5
        got = series.C[:, 0, 0]
        assert np.max(np.abs(got - expect)) < 1e-6

    def test_constant_coefficient_lyapunov_closed_form(self, single_site):
        # anisotropic start, alpha = 0: C(t) = e^(k1 t) R C0 R^T + (e^(k1 t)-1)/2 I
        c0 = np.array([[0.9, 0.2], [0.2, 0.6]])
        tr = flat_trajectory(np.zeros(1, complex), single_site, t_end=300.0)
        series = evolve_covariance(c0, tr, P, single_site, (0.0, 300.0))
        w0 = P.omega0
        for i in (0, len(series) // 2, len(series) - 1):
            t = series.sample_times[i]
            # paper convention rotates counterclockwise
            c, s = np.cos(w0 * t), np.sin(w0 * t)
            r = np.array([[c, -s], [s, c]])
            expect = np.exp(P.kappa1 * t) * (r @ c0 @ r.T) \
                + 0.5 * (np.exp(P.kappa1 * t) - 1.0) * np.eye(2)
            assert np.max(np.abs(series.C[i] - expect)) < 1e-6

    def test_limit_cycle_periodic_and_isotropic_average(self, single_site):
        # saturated orbit drive: C becomes 2 pi / w0 periodic after transient
        times = np.arange(0.0, 3000.0 + 1e-9, 0.1)
        alpha = ABAR * np.exp(-1j * times)[:, None]
        tr = Trajectory(times, alpha, MeanFieldParams(1.0, 5e-3, 1e-2), single_site)
        series = evolve_covariance(vacuum_covariance(1), tr, P, single_site,
                                   (0.0, 3000.0),
                                   solver_opts=SolverOptions(rtol=1e-9, atol=1e-12))
        t = series.sample_times
        period = 2 * np.pi / P.omega0
        stride = int(round(period / 0.1))  # ~63 samples per period
        late = t > 2500.0
        idx = np.nonzero(late)[0]
        a, b = series.C[idx[0]], series.C[idx[0] + stride]
        # one full period; grid does not land exactly on the period, so
        # compare via interpolation tolerance at nearby samples
        diffs = [np.max(np.abs(series.C[i] - series.C[i + stride]))
                 for i in idx[:60]]
        assert min(diffs) < 5e-4
        avg = np.mean(series.C[late], axis=0)
        assert abs(avg[0, 0] - avg[1, 1]) < 2e-2 * avg[0, 0]
        assert abs(avg[0, 1]) < 2e-2 * avg[0, 0]

    def test_uncoupled_blocks_stay_uncorrelated(self, ssh_params):
        m = lattice.CouplingMatrix(np.zeros((2, 2)))
        tr = flat_trajectory(np.array([0.2 + 0.1j, -0.3j]), m, t_end=200.0)
        series = evolve_covariance(vacuum_covariance(2), tr, P, m, (0.0, 200.0))
        off = series.C[:, :2, 2:]
        assert np.max(np.abs(off)) < 1e-10

    def test_symmetry_and_physicality_along_the_way(self, dimer):
        tr = flat_trajectory(np.array([0.4 + 0j, 0.3j]), dimer, t_end=300.0)
        series = evolve_covariance(vacuum_covariance(2), tr, P, dimer,
                                   (0.0, 300.0))
        asym = np.max(np.abs(series.C - np.swapaxes(series.C, -1, -2)))
        assert asym < 1e-8
        nus = min_symplectic_eigenvalues(series.C)
        assert np.min(nus) >= 0.5 - 1e-6
        assert not series.physicality_violations

    def test_streaming_matches_stored(self, dimer):
        tr = flat_trajectory(np.array([0.1 + 0j, 0.0j]), dimer, t_end=50.0)
        collected = {}
        evolve_covariance(vacuum_covariance(2), tr, P, dimer, (0.0, 50.0),
                          on_sample=lambda i, t, c: collected.update({i: c[0].copy()}))
        stored = evolve_covariance(vacuum_covariance(2), tr, P, dimer, (0.0, 50.0))
        for i in range(len(stored)):
            assert np.allclose(collected[i], stored.C[i], atol=1e-12)

    def test_trajectory_must_cover_span(self, single_site):
        tr = flat_trajectory(np.zeros(1, complex), single_site, t_end=10.0)
        with pytest.raises(ValueError):
            evolve_covariance(vacuum_covariance(1), tr, P, single_site, (0.0, 20.0))

    def test_bad_c0_rejected(self, single_site):
        tr = flat_trajectory(np.zeros(1, complex), single_site)
        with pytest.raises(ValueError):
            evolve_covariance(np.eye(3), tr, P, single_site, (0.0, 1.0))
        with pytest.raises(ValueError):
            evolve_covariance(np.array([[1.0, 0.5], [0.0, 1.0]]), tr, P,
                              single_site, (0.0, 1.0))


class TestTypesAndWigner:
    def test_covariance_matrix_validation(self):
        with pytest.raises(ValueError):
            CovarianceMatrix(0.0, np.array([[0.5, 0.1], [0.0, 0.5]]))
        cm = CovarianceMatrix(0.0, 0.5 * np.eye(4))
        assert cm.n_sites == 2
        assert cm.min_symplectic_eigenvalue() == pytest.approx(0.5)

    def test_symplectic_eigenvalues_vacuum_and_squeezed(self):
        assert np.allclose(symplectic_eigenvalues(0.5 * np.eye(4)), [0.5, 0.5])
        sq = np.diag([0.125, 2.0])  # squeezed vacuum: nu = 1/2
        assert np.allclose(symplectic_eigenvalues(sq), [0.5])

    def test_min_symplectic_batched_matches_single(self):
        rng = np.random.default_rng(3)
        stack = []
        for _ in range(5):
            a = rng.normal(size=(4, 4))
            stack.append(0.5 * np.eye(4) + a @ a.T * 0.1)
        stack = np.stack(stack)
        batched = min_symplectic_eigenvalues(stack)
        single = [np.min(symplectic_eigenvalues(c)) for c in stack]
        assert np.allclose(batched, single, atol=1e-10)

    def test_wigner_vacuum_peak(self):
        x = np.linspace(-3, 3, 61)
        w = gaussian_wigner(0.5 * np.eye(2), 0.0, (x, x))
        assert w[30, 30] == pytest.approx(1 / np.pi)
        dx = x[1] - x[0]
        assert np.sum(w) * dx * dx == pytest.approx(1.0, abs=1e-4)

    def test_wigner_translation(self):
        x = np.linspace(-4, 4, 81)
        w0 = gaussian_wigner(0.5 * np.eye(2), 0.0, (x, x))
        w1 = gaussian_wigner(0.5 * np.eye(2), (1.0 + 0j) / np.sqrt(2), (x, x))
        # center moves to x = sqrt(2) Re alpha = 1, ten grid steps right
        assert np.allclose(w1[10:, :], w0[:-10, :], atol=1e-12)

    def test_wigner_site_selection_and_errors(self):
        c = 0.5 * np.eye(4)
        x = np.linspace(-1, 1, 11)
        w = gaussian_wigner(c, 0.0, (x, x), site=2)
        assert w[5, 5] == pytest.approx(1 / np.pi)
        with pytest.raises(ValueError):
            gaussian_wigner(c, 0.0, (x, x))
        with pytest.raises(np.linalg.LinAlgError):
            gaussian_wigner(np.zeros((2, 2)), 0.0, (x, x))

    def test_gamma_loss_requires_nonnegative(self):
        with pytest.raises(ValueError):
            FluctuationParams(1.0, 5e-3, 1e-2, -0.1)
