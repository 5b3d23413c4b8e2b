"""Exact truncated-Fock Lindblad reference for one or two oscillators.

Full master equation with one-phonon gain kappa1, two-phonon loss kappa2
and an optional linear loss gamma_loss per mode, used to validate the
Gaussian effective model.  The dissipator convention is
D[O] rho = O rho O^dag - {O^dag O, rho}/2.

Quantities compared against the effective model (the synchronization
measure, the phase-difference distribution, radial Wigner profiles) are
invariant under the global rotation a_j -> a_j e^(-i w0 t), so callers may
pass the rotating-frame Hamiltonian (coupling only) and integrate without
resolving the fast w0 oscillation; helpers for that live here too.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from ._rk import IntegrationError, SolverOptions, integrate_adaptive
from .fluctuations import FluctuationParams
from .measures import TimeWindow

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

__all__ = [
    "FockDensityMatrix",
    "WignerField",
    "TruncationWarning",
    "destroy",
    "mode_operator",
    "coherent_state",
    "vdp_hamiltonian",
    "coupling_hamiltonian",
    "lindblad_rhs",
    "evolve_exact",
    "steady_state",
    "wigner_single",
    "phase_difference_marginal",
    "s_c_exact",
    "second_moment_sc",
]

TWO_MODE_DIM_CAP = 20


class TruncationWarning(UserWarning):
    pass


@dataclass
class FockDensityMatrix:
    """Truncated-Fock density operator for one or two modes."""

    n_modes: int
    dim: int
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.n_modes not in (1, 2):
            raise ValueError("only 1- and 2-mode states are supported")
        d = self.dim ** self.n_modes
        r = np.asarray(self.rho, dtype=complex)
        if r.shape != (d, d):
            raise ValueError(f"rho must be {d}x{d}")
        self.rho = r

    def validate(self, herm_tol=1e-10, trace_tol=1e-8, pos_tol=1e-8) -> None:
        r = self.rho
        if np.max(np.abs(r - r.conj().T)) > herm_tol:
            raise ValueError("density matrix is not Hermitian within tolerance")
        if abs(np.trace(r).real - 1.0) > trace_tol:
            raise ValueError("trace deviates from one beyond tolerance")
        if np.min(np.linalg.eigvalsh((r + r.conj().T) / 2)) < -pos_tol:
            raise ValueError("negative eigenvalue beyond tolerance")

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.rho @ op))

    def mode_populations(self, mode: int = 0) -> np.ndarray:
        """Fock populations of one mode (partial trace of the diagonal)."""
        d = self.dim
        p = np.real(np.diag(self.rho))
        if self.n_modes == 1:
            return p
        grid = p.reshape(d, d)
        return grid.sum(axis=1) if mode == 0 else grid.sum(axis=0)

    def truncation_leakage(self) -> float:
        """Largest population of the top two Fock levels over the modes."""
        leak = 0.0
        for m in range(self.n_modes):
            pops = self.mode_populations(m)
            leak = max(leak, float(pops[-2:].sum()))
        return leak

    def to_binary(self, path) -> None:
        """Opt-in raw dump (density matrices are not persisted by default).

        Layout: 16-byte header (n_modes, dim, both int64 little-endian),
        then the row-major complex128 matrix and the float64 time stamp.
        """
        with open(path, "wb") as fh:
            np.array([self.n_modes, self.dim], dtype="<i8").tofile(fh)
            self.rho.astype("<c16").tofile(fh)
            np.array([self.t], dtype="<f8").tofile(fh)

    @staticmethod
    def from_binary(path) -> "FockDensityMatrix":
        with open(path, "rb") as fh:
            n_modes, dim = (int(v) for v in np.fromfile(fh, dtype="<i8", count=2))
            d = dim ** n_modes
            rho = np.fromfile(fh, dtype="<c16", count=d * d).reshape(d, d)
            t = float(np.fromfile(fh, dtype="<f8", count=1)[0])
        return FockDensityMatrix(n_modes, dim, rho, t)


@dataclass
class WignerField:
    """Values of a quasi-probability density on a grid.

    For a single mode the grid is a pair of quadrature axes (x, p) with
    values shaped (len(x), len(p)); for the phase-difference marginal the
    grid is the bin centers on [-pi, pi).
    """

    grid: tuple
    values: np.ndarray
    normalization_deficit: float = 0.0


@lru_cache(maxsize=32)
def destroy(dim: int) -> np.ndarray:
    a = np.zeros((dim, dim), dtype=complex)
    np.fill_diagonal(a[:-1, 1:], np.sqrt(np.arange(1, dim)))
    return a


def mode_operator(op: np.ndarray, mode: int, n_modes: int) -> np.ndarray:
    """Embed a single-mode operator at position ``mode`` (kron ordering)."""
    d = op.shape[0]
    eye = np.eye(d, dtype=complex)
    mats = [op if m == mode else eye for m in range(n_modes)]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def coherent_state(dim: int, alpha: complex) -> np.ndarray:
    """Normalized coherent-state vector in the truncated basis."""
    n = np.arange(dim)
    logv = n * np.log(np.abs(alpha) + 1e-300) - 0.5 * gammaln(n + 1)
    vec = np.exp(logv - 0.5 * np.abs(alpha) ** 2) * np.exp(1j * n * np.angle(alpha))
    vec = vec.astype(complex)
    return vec / np.linalg.norm(vec)


def vdp_hamiltonian(dim: int, n_modes: int, omega0: float) -> np.ndarray:
    """Lab-frame free Hamiltonian w0 * sum_j n_j."""
    a = destroy(dim)
    h = np.zeros((dim ** n_modes,) * 2, dtype=complex)
    for m in range(n_modes):
        h += omega0 * mode_operator(a.conj().T @ a, m, n_modes)
    return h


def coupling_hamiltonian(dim: int, lam: float) -> np.ndarray:
    """Two-mode exchange coupling lam (a1^dag a2 + a2^dag a1)."""
    a = destroy(dim)
    a1 = mode_operator(a, 0, 2)
    a2 = mode_operator(a, 1, 2)
    return lam * (a1.conj().T @ a2 + a2.conj().T @ a1)


def _dissipator(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    od = op.conj().T
    odo = od @ op
    return op @ rho @ od - 0.5 * (odo @ rho + rho @ odo)


def _jump_ops(dim: int, n_modes: int, params: FluctuationParams):
    a = destroy(dim)
    ops = []
    for m in range(n_modes):
        am = mode_operator(a, m, n_modes)
        ops.append((params.kappa1, am.conj().T))
        ops.append((params.kappa2, am @ am))
        if params.gamma_loss > 0:
            ops.append((params.gamma_loss, am))
    return ops


def lindblad_rhs(state: FockDensityMatrix, H: Optional[np.ndarray],
                 params: FluctuationParams) -> np.ndarray:
    """Right-hand side of the master equation at one state (pure function)."""
    rho = state.rho
    out = np.zeros_like(rho)
    if H is not None:
        out += -1j * (H @ rho - rho @ H)
    for rate, op in _jump_ops(state.dim, state.n_modes, params):
        out += rate * _dissipator(op, rho)
    return out


def _check_two_mode_cap(n_modes: int, dim: int):
    if n_modes == 2 and dim > TWO_MODE_DIM_CAP:
        raise ValueError(
            f"two-mode exact runs are capped at dim <= {TWO_MODE_DIM_CAP} "
            f"(density matrix {dim**2}x{dim**2}); use the Gaussian "
            "fluctuation model for larger problems")


def evolve_exact(
    rho0: FockDensityMatrix,
    H: Union[np.ndarray, Callable[[float], np.ndarray], None],
    params: FluctuationParams,
    t_span: tuple[float, float],
    dt_out: float,
    solver_opts: Optional[SolverOptions] = None,
    trace_tol: float = 1e-8,
    leakage_tol: float = 1e-6,
    method: str = "auto",
) -> list[FockDensityMatrix]:
    """Integration of the master equation with snapshot output.

    ``H`` may be a constant matrix, a callable t -> matrix (the effective
    squeezing Hamiltonian is time-dependent), or None.  A constant
    generator is propagated by the sparse matrix exponential
    (``method='expm'``, exact per step up to truncation); time-dependent
    generators use the adaptive RK stepper with trace and Hermiticity
    restored by projection after every accepted step.  Truncation leakage
    is checked post hoc on the returned snapshots.
    """
    if method not in ("auto", "rk", "expm"):
        raise ValueError("method must be auto, rk or expm")
    _check_two_mode_cap(rho0.n_modes, rho0.dim)
    rho0.validate()
    t0, t1 = float(t_span[0]), float(t_span[1])
    n_out = int(round((t1 - t0) / dt_out)) + 1
    t_eval = t0 + dt_out * np.arange(n_out)
    t_eval = t_eval[t_eval <= t1 + 1e-9]

    if method == "expm" or (method == "auto" and not callable(H)):
        return _evolve_expm(rho0, H, params, t_eval, trace_tol, leakage_tol)
    h_of_t = H if callable(H) else (lambda t: H)
    jumps = _jump_ops(rho0.dim, rho0.n_modes, params)
    # fold -iH and the anticommutator halves into one left-acting matrix:
    # rhs = K rho + rho K^dag + sum rate * op rho op^dag
    dim_total = rho0.dim ** rho0.n_modes
    k_half = np.zeros((dim_total, dim_total), dtype=complex)
    for rate, op in jumps:
        k_half -= 0.5 * rate * (op.conj().T @ op)
    scaled = [(rate, op, op.conj().T) for rate, op in jumps]

    def rhs(t, rho):
        h = h_of_t(t)
        k = k_half if h is None else k_half - 1j * h
        out = k @ rho + rho @ k.conj().T
        for rate, op, od in scaled:
            out += rate * ((op @ rho) @ od)
        return out

    def project(t, rho):
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if abs(tr - 1.0) > trace_tol * 100:
            raise IntegrationError(f"trace drifted to {tr:.8f}", t)
        return rho / tr

    opts = solver_opts or SolverOptions(rtol=1e-8, atol=1e-11)
    samples = integrate_adaptive(rhs, (t0, t1), rho0.rho.astype(complex),
                                 t_eval, options=opts, on_accept=project)
    out = [FockDensityMatrix(rho0.n_modes, rho0.dim, samples[i], float(t_eval[i]))
           for i in range(t_eval.size)]
    _leakage_check(out[-1], leakage_tol)
    return out


def _leakage_check(state: FockDensityMatrix, leakage_tol: float) -> None:
    leak = state.truncation_leakage()
    if leak > leakage_tol:
        warnings.warn(
            f"truncation leakage {leak:.3e} exceeds {leakage_tol:.1e}; "
            "increase the Fock dimension", TruncationWarning, stacklevel=3)


def _evolve_expm(rho0: FockDensityMatrix, H: Optional[np.ndarray],
                 params: FluctuationParams, t_eval: np.ndarray,
                 trace_tol: float, leakage_tol: float) -> list[FockDensityMatrix]:
    """Snapshot chain v_{k+1} = expm(L dt) v_k on the vectorized state."""
    from scipy.sparse.linalg import expm_multiply
    d, n_modes = rho0.dim, rho0.n_modes
    dim_total = d ** n_modes
    lop = liouvillian_sparse(H, params, d, n_modes)
    dt = float(t_eval[1] - t_eval[0]) if t_eval.size > 1 else 0.0
    lop_dt = (lop * dt).tocsr() if dt else None
    out = []
    v = rho0.rho.reshape(-1).astype(complex)
    prev_t = t_eval[0]
    for i, t in enumerate(t_eval):
        if i > 0:
            if abs((t - prev_t) - dt) < 1e-9 * max(1.0, dt):
                v = expm_multiply(lop_dt, v)
            else:
                v = expm_multiply(lop * float(t - prev_t), v)
        rho = v.reshape(dim_total, dim_total)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if abs(tr - 1.0) > trace_tol * 100:
            raise IntegrationError(f"trace drifted to {tr:.8f}", float(prev_t))
        rho = rho / tr
        v = rho.reshape(-1)
        out.append(FockDensityMatrix(n_modes, d, rho.copy(), float(t)))
        prev_t = t
    _leakage_check(out[-1], leakage_tol)
    return out


def _liouvillian_dense(H: Optional[np.ndarray], jumps, dim_total: int) -> np.ndarray:
    """Row-major vectorization: vec(A rho B) = (A kron B^T) vec(rho)."""
    eye = np.eye(dim_total, dtype=complex)
    l = np.zeros((dim_total ** 2, dim_total ** 2), dtype=complex)
    if H is not None:
        l += -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for rate, op in jumps:
        od = op.conj().T
        odo = od @ op
        l += rate * (np.kron(op, od.T)
                     - 0.5 * np.kron(odo, eye) - 0.5 * np.kron(eye, odo.T))
    return l


def liouvillian_sparse(H: Optional[np.ndarray], params: FluctuationParams,
                       d: int, n_modes: int):
    """Sparse vectorized Lindbladian (row-major vec), for constant generators."""
    from scipy import sparse
    dim_total = d ** n_modes
    eye = sparse.identity(dim_total, dtype=complex, format="csr")
    terms = []
    if H is not None:
        hs = sparse.csr_matrix(H)
        terms.append(-1j * (sparse.kron(hs, eye) - sparse.kron(eye, hs.T)))
    for rate, op in _jump_ops(d, n_modes, params):
        ops = sparse.csr_matrix(op)
        od = sparse.csr_matrix(op.conj().T)
        odo = od @ ops
        terms.append(rate * (sparse.kron(ops, od.T)
                             - 0.5 * sparse.kron(odo, eye)
                             - 0.5 * sparse.kron(eye, odo.T)))
    return sum(terms).tocsr()


def steady_state(H: Optional[np.ndarray], params: FluctuationParams, d: int,
                 n_modes: int = 1) -> FockDensityMatrix:
    """Unique null vector of the vectorized Lindbladian, trace-normalized.

    Uniqueness is verified through the spectral gap: the second-smallest
    Liouvillian eigenvalue magnitude must stand clear of zero on the scale
    of the spectral radius; a degenerate null space is reported, not
    resolved.  For systems too large for the dense solve, use
    ``evolve_exact`` with a long horizon instead.
    """
    _check_two_mode_cap(n_modes, d)
    dim_total = d ** n_modes
    if dim_total > 64:
        raise ValueError("dense steady-state solve limited to dim_total <= 64; "
                         "use evolve_exact for larger systems")
    jumps = _jump_ops(d, n_modes, params)
    l = _liouvillian_dense(H, jumps, dim_total)
    vals, vecs = np.linalg.eig(l)
    order = np.argsort(np.abs(vals))
    v0, v1 = np.abs(vals[order[0]]), np.abs(vals[order[1]])
    scale = np.max(np.abs(vals))
    if v0 > 1e-8 * scale:
        raise RuntimeError(f"no Liouvillian null vector found (|l0|={v0:.2e})")
    if v1 < 1e-10 * scale:
        raise RuntimeError(
            f"degenerate Liouvillian null space (|l0|={v0:.2e}, |l1|={v1:.2e})")
    rho = vecs[:, order[0]].reshape(dim_total, dim_total)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    state = FockDensityMatrix(n_modes, d, rho)
    state.validate(pos_tol=1e-7)
    return state


def steady_state_two_mode(H: Optional[np.ndarray], params: FluctuationParams,
                          d: int) -> FockDensityMatrix:
    """Two-mode steady state via the number-diagonal Liouvillian block.

    Every generator term (exchange coupling, gain, two-phonon loss, linear
    loss) conserves q = (row quanta) - (column quanta) of a density-matrix
    element, so the Liouvillian is block diagonal in q and the steady state
    lives in the q = 0 block, whose size grows only like d^3 instead of
    d^4.  Both the synchronization measure and the phase-difference
    marginal of a q = 0 state are exact, since the q-changing moments
    vanish identically there.
    """
    _check_two_mode_cap(2, d)
    lop = liouvillian_sparse(H, params, d, 2)
    n1, n2, m1, m2 = np.meshgrid(*([np.arange(d)] * 4), indexing="ij")
    mask = (n1 + n2) == (m1 + m2)
    idx = np.nonzero(mask.reshape(-1))[0]
    block = lop[idx][:, idx].toarray()
    vals, vecs = np.linalg.eig(block)
    order = np.argsort(np.abs(vals))
    v0, v1 = np.abs(vals[order[0]]), np.abs(vals[order[1]])
    scale = np.max(np.abs(vals))
    if v0 > 1e-8 * scale:
        raise RuntimeError(f"no null vector in the q=0 block (|l0|={v0:.2e})")
    if v1 < 1e-10 * scale:
        raise RuntimeError(f"degenerate steady space (|l1|={v1:.2e})")
    vec = np.zeros(d ** 4, dtype=complex)
    vec[idx] = vecs[:, order[0]]
    rho = vec.reshape(d * d, d * d)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    state = FockDensityMatrix(2, d, rho)
    state.validate(pos_tol=1e-7)
    return state


def _displacement_factors(dim: int):
    """Sqrt-factorial tables for the truncated exp(b a^dag), exp(-b* a)."""
    n = np.arange(dim)
    logfact = gammaln(n + 1)
    m_idx, n_idx = np.meshgrid(n, n, indexing="ij")
    k = m_idx - n_idx
    lower = k >= 0
    # exp(b a^dag)[m, n] = b^(m-n) sqrt(m!/n!) / (m-n)!   for m >= n
    with np.errstate(invalid="ignore"):
        logc = 0.5 * (logfact[m_idx] - logfact[n_idx]) - gammaln(np.where(lower, k, 0) + 1.0)
    lower_coeff = np.where(lower, np.exp(logc), 0.0)
    return lower_coeff, k


def wigner_single(state: FockDensityMatrix, grid: tuple,
                  norm_warn: float = 0.05) -> WignerField:
    """Wigner function on a quadrature grid via the displaced-parity form.

    W(x, p) = (1/pi) Tr[rho D(2 alpha) Pi], alpha = (x + i p) / sqrt(2);
    the vacuum peaks at 1/pi.  A normalization deficit beyond
    ``norm_warn`` (grid too small or too coarse) triggers a warning.
    """
    if state.n_modes != 1:
        raise ValueError("wigner_single needs a single-mode state")
    d = state.dim
    x, p = np.asarray(grid[0], dtype=float), np.asarray(grid[1], dtype=float)
    lower_coeff, k = _displacement_factors(d)
    upper_coeff = lower_coeff.T  # for exp(-b* a): transpose structure
    parity = (-1.0) ** np.arange(d)
    rho = state.rho
    alpha = (x[:, None] + 1j * p[None, :]) / np.sqrt(2.0)
    flat_beta = (2.0 * alpha).ravel()
    k_up = np.where(k >= 0, k, 0)
    k_dn = np.where(k <= 0, -k, 0)
    out = np.empty(flat_beta.size)
    chunk = max(1, int(2e6 // (d * d)))
    for s in range(0, flat_beta.size, chunk):
        b = flat_beta[s:s + chunk]
        e_up = lower_coeff[None, :, :] * b[:, None, None] ** k_up[None, :, :]
        e_dn = upper_coeff[None, :, :] * (-b.conj())[:, None, None] ** k_dn[None, :, :]
        m = e_up @ (e_dn * parity[None, None, :])
        vals = np.einsum("nm,gmn->g", rho, m)
        out[s:s + chunk] = np.real(vals) * np.exp(-0.5 * np.abs(b) ** 2)
    w = (out / np.pi).reshape(x.size, p.size)
    deficit = abs(_trapezoid(_trapezoid(w, p, axis=1), x) - 1.0)
    if deficit > norm_warn:
        warnings.warn(f"Wigner normalization deficit {deficit:.3f}; enlarge the grid",
                      stacklevel=2)
    return WignerField((x, p), w, deficit)


def _radial_tables(dim: int, r_nodes: np.ndarray):
    """Radial parts d_mn(r) of <m|D(2 r e^{i theta})|n> (theta removed)."""
    d = dim
    table = np.zeros((d, d, r_nodes.size))
    two_r = 2.0 * r_nodes
    gauss = np.exp(-2.0 * r_nodes ** 2)
    for m in range(d):
        for n in range(d):
            if m >= n:
                kk = m - n
                c = math.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
                lag = eval_genlaguerre(n, kk, 4.0 * r_nodes ** 2)
                table[m, n] = c * two_r ** kk * gauss * lag
            else:
                kk = n - m
                c = math.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
                lag = eval_genlaguerre(m, kk, 4.0 * r_nodes ** 2)
                table[m, n] = (-1.0) ** kk * c * two_r ** kk * gauss * lag
    return table


def phase_difference_marginal(state: FockDensityMatrix, n_bins: int = 128,
                              r_max: float = 4.0, n_radial: int = 64) -> WignerField:
    """Distribution of the phase difference phi_1 - phi_2 on [-pi, pi).

    Integrates the two-mode Wigner function over both radii and the phase
    sum using the angular Fourier structure of the displacement operator;
    the radial quadrature is Gauss-Legendre truncated at ``r_max``
    displacement quanta.  Normalized to unit integral; the raw deficit is
    recorded for convergence auditing.
    """
    if state.n_modes != 2:
        raise ValueError("phase_difference_marginal needs a two-mode state")
    d = state.dim
    nodes, weights = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * r_max * (nodes + 1.0)
    wgt = 0.5 * r_max * weights
    table = _radial_tables(d, r)
    # A[m, n] = int d_mn(r) r dr ; G includes the parity (-1)^n
    a_int = table @ (wgt * r)
    parity = (-1.0) ** np.arange(d)
    g = a_int * parity[None, :]
    rho4 = state.rho.reshape(d, d, d, d)  # [n1, n2; m1, m2]

    ks = np.arange(-(d - 1), d)
    coeff = np.zeros(ks.size, dtype=complex)
    for i, kk in enumerate(ks):
        n1 = np.arange(max(0, -kk), min(d, d - kk))      # m1 = n1 + k valid
        n2 = np.arange(max(0, kk), min(d, d + kk))       # m2 = n2 - k valid
        if n1.size == 0 or n2.size == 0:
            continue
        block = rho4[np.ix_(n1, n2, n1 + kk, n2 - kk)]
        sub = np.einsum("abab->ab", block)
        coeff[i] = np.sum(sub * np.outer(g[n1 + kk, n1], g[n2 - kk, n2]))
    coeff *= 8.0 / np.pi  # 2*pi * (2/pi)^2
    centers = -np.pi + (np.arange(n_bins) + 0.5) * (2 * np.pi / n_bins)
    vals = np.real(np.exp(1j * np.outer(centers, ks)) @ coeff)
    raw_total = float(np.sum(vals) * (2 * np.pi / n_bins))
    deficit = abs(raw_total - 1.0)
    if raw_total <= 0:
        raise RuntimeError("phase marginal integrated to a non-positive value")
    return WignerField((centers,), vals / raw_total, deficit)


def second_moment_sc(state: FockDensityMatrix) -> float:
    """Instantaneous S_c of a two-mode state from full second moments.

    Means need not vanish for the exact state; the full (non-central)
    moments enter exactly as in the defining expression.
    """
    if state.n_modes != 2:
        raise ValueError("second_moment_sc needs a two-mode state")
    q = _sc_denominator_operator(state.dim)
    denom = np.real(np.trace(state.rho @ q))
    if denom <= 0:
        raise RuntimeError("non-positive quadrature-difference moment")
    return float(1.0 / denom)


@lru_cache(maxsize=8)
def _sc_denominator_operator(dim: int) -> np.ndarray:
    a = destroy(dim)
    a1 = mode_operator(a, 0, 2)
    a2 = mode_operator(a, 1, 2)
    x1 = (a1 + a1.conj().T) / np.sqrt(2.0)
    p1 = -1j * (a1 - a1.conj().T) / np.sqrt(2.0)
    x2 = (a2 + a2.conj().T) / np.sqrt(2.0)
    p2 = -1j * (a2 - a2.conj().T) / np.sqrt(2.0)
    dx = x1 - x2
    dp = p1 - p2
    return dx @ dx + dp @ dp


def s_c_exact(rho_sequence: Sequence[FockDensityMatrix],
              window: TimeWindow) -> float:
    """Trapezoidal time average of the exact synchronization measure."""
    times = np.array([s.t for s in rho_sequence])
    eps = 1e-9 * max(1.0, abs(window.t_f))
    mask = (times >= window.t_i - eps) & (times <= window.t_f + eps)
    if np.count_nonzero(mask) < 2:
        raise ValueError("window must cover at least two snapshots")
    idx = np.nonzero(mask)[0]
    vals = np.array([second_moment_sc(rho_sequence[i]) for i in idx])
    t = times[mask]
    return float(_trapezoid(vals, t) / (t[-1] - t[0]))
