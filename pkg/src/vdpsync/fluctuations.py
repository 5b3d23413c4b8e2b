"""Gaussian fluctuation dynamics in the frame displaced by the mean field.

The covariance matrix of the quadratures X_{2j-1} = (a_j + a_j^dag)/sqrt(2),
X_{2j} = -i (a_j - a_j^dag)/sqrt(2) obeys the matrix ODE

    C' = B(t) C + C B(t)^T + D(t)

whose drift and diffusion blocks are rebuilt each step from the mean-field
amplitudes.  Per site (0-based j, rows 2j and 2j+1), with a = alpha_j and
kt = kappa1 - gamma_loss:

    B_jj = 1/2 * [[kt - 4 k2 |a|^2 - 2 k2 Re(a^2),  -2 w0 - 2 k2 Im(a^2)],
                  [ 2 w0 - 2 k2 Im(a^2),            kt - 4 k2 |a|^2 + 2 k2 Re(a^2)]]
    B_jk = lambda_jk * [[0, 1], [-1, 0]]          (bonded j != k)
    D_jj = 1/2 * (kappa1 + gamma_loss + 4 k2 |a|^2) * I_2

An optional linear one-phonon loss channel gamma_loss enters B with a minus
sign and D with a plus sign.  The initial covariance of a coherent product
state is the vacuum value C = I/2.

Two sign conventions for the on-site rotation are provided.  The form
above ("paper", the default) has the on-site rotation counter-rotating
against the coupling blocks; it is what the lattice synchronization heat
maps are built from.  Deriving the drift from the displaced-frame master
equation with the stated quadrature definitions instead gives the same
matrix with the two omega0 entries swapped ("derived"); that form makes
the squeezing terms co-rotate with the mean field and is equivalent to
the quadratic effective master equation, which matters for the
two-oscillator comparison against the exact model (rising synchronization
curve, per-period squeezed Wigner snapshots).  Both stay physical; pick
per use case.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ._rk import SolverOptions, integrate_adaptive
from .lattice import CouplingMatrix
from .meanfield import MeanFieldParams, Trajectory

__all__ = [
    "FluctuationParams",
    "PhysicalityError",
    "QuadratureIndexing",
    "CovarianceMatrix",
    "CovarianceSeries",
    "build_drift",
    "build_diffusion",
    "evolve_covariance",
    "vacuum_covariance",
    "symplectic_eigenvalues",
    "min_symplectic_eigenvalues",
    "gaussian_wigner",
]


class PhysicalityError(RuntimeError):
    """Covariance lost physicality beyond tolerance."""


DRIFT_CONVENTIONS = ("paper", "derived")


def _omega_sign(convention: str) -> float:
    if convention not in DRIFT_CONVENTIONS:
        raise ValueError(f"convention must be one of {DRIFT_CONVENTIONS}")
    return -1.0 if convention == "derived" else 1.0


@dataclass(frozen=True)
class FluctuationParams:
    """Mean-field rates plus the optional linear loss channel gamma_loss."""

    omega0: float = 1.0
    kappa1: float = 5e-3
    kappa2: float = 1e-2
    gamma_loss: float = 0.0

    def __post_init__(self):
        if self.gamma_loss < 0:
            raise ValueError("gamma_loss must be >= 0")
        if self.gamma_loss >= self.kappa1:
            warnings.warn("gamma_loss >= kappa1: net linear gain is negative, "
                          "the system decays to vacuum", stacklevel=2)

    @staticmethod
    def from_meanfield(p: MeanFieldParams, gamma_loss: float = 0.0) -> "FluctuationParams":
        return FluctuationParams(p.omega0, p.kappa1, p.kappa2, gamma_loss)

    def effective_meanfield(self) -> MeanFieldParams:
        """Mean-field rates with the linear loss folded into the gain."""
        return MeanFieldParams(self.omega0, self.kappa1 - self.gamma_loss, self.kappa2)


class QuadratureIndexing:
    """Total, bijective map between 1-based sites and quadrature rows."""

    @staticmethod
    def rows(j: int) -> tuple[int, int]:
        """0-based (position, momentum) row indices of 1-based site j."""
        if j < 1:
            raise IndexError("site indices are 1-based")
        return 2 * (j - 1), 2 * (j - 1) + 1

    @staticmethod
    def site(row: int) -> int:
        """1-based site owning 0-based quadrature row."""
        if row < 0:
            raise IndexError("row must be >= 0")
        return row // 2 + 1


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric 2N x 2N quadrature covariance at time t."""

    t: float
    C: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.C, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2:
            raise ValueError("covariance must be square with even dimension")
        if np.max(np.abs(c - c.T)) > 1e-8 * max(1.0, np.max(np.abs(c))):
            raise ValueError("covariance asymmetry exceeds 1e-8")
        object.__setattr__(self, "C", c)

    @property
    def n_sites(self) -> int:
        return self.C.shape[0] // 2

    def min_symplectic_eigenvalue(self) -> float:
        return float(np.min(symplectic_eigenvalues(self.C)))

    def to_csv(self) -> str:
        """Flattened upper triangle: columns row, col, value."""
        import io as _io, csv as _csv
        buf = _io.StringIO()
        w = _csv.writer(buf)
        w.writerow(["row", "col", "value"])
        n = self.C.shape[0]
        for i in range(n):
            for j in range(i, n):
                w.writerow([i, j, repr(float(self.C[i, j]))])
        return buf.getvalue()


def vacuum_covariance(n_sites: int) -> np.ndarray:
    """Covariance of a product of coherent states (displaced vacuum)."""
    return 0.5 * np.eye(2 * n_sites)


def _omega(n: int) -> np.ndarray:
    omega = np.zeros((2 * n, 2 * n))
    j = np.arange(n)
    omega[2 * j, 2 * j + 1] = 1.0
    omega[2 * j + 1, 2 * j] = -1.0
    return omega


def symplectic_eigenvalues(c: np.ndarray) -> np.ndarray:
    """Moduli of the eigenvalues of i*Omega*C (pairs deduplicated)."""
    n = c.shape[-1] // 2
    ev = np.linalg.eigvals(1j * _omega(n) @ c)
    return np.sort(np.abs(ev))[::2]


def min_symplectic_eigenvalues(c_stack: np.ndarray) -> np.ndarray:
    """Minimum symplectic eigenvalue per matrix of a (..., 2n, 2n) stack.

    Uses the Cholesky reduction to a Hermitian problem when the matrices
    are positive definite, falling back to the direct non-symmetric
    eigenproblem otherwise.
    """
    c_stack = np.asarray(c_stack, dtype=float)
    n = c_stack.shape[-1] // 2
    omega = _omega(n)
    try:
        l = np.linalg.cholesky(c_stack)
        a = np.swapaxes(l, -1, -2) @ omega @ l
        ev = np.linalg.eigvalsh(1j * a)
        return np.min(np.abs(ev), axis=-1)
    except np.linalg.LinAlgError:
        flat = c_stack.reshape(-1, 2 * n, 2 * n)
        out = np.array([np.min(np.abs(np.linalg.eigvals(1j * omega @ m)))
                        for m in flat])
        return out.reshape(c_stack.shape[:-2])


def _site_blocks(alpha: np.ndarray, params: FluctuationParams):
    """Per-site entries of the drift diagonal blocks, batched over alpha."""
    k1t = params.kappa1 - params.gamma_loss
    k2 = params.kappa2
    a2 = alpha ** 2
    absa2 = np.abs(alpha) ** 2
    base = 0.5 * k1t - 2.0 * k2 * absa2
    bxx = base - k2 * a2.real
    bpp = base + k2 * a2.real
    off = -k2 * a2.imag
    return bxx, bpp, off


def build_drift(alpha: np.ndarray, params: FluctuationParams,
                coupling: CouplingMatrix, convention: str = "paper") -> np.ndarray:
    """Drift matrix B for amplitudes ``alpha``; batched over leading axes."""
    alpha = np.asarray(alpha, dtype=complex)
    n = coupling.n
    if alpha.shape[-1] != n:
        raise ValueError("alpha length does not match coupling size")
    batch = alpha.shape[:-1]
    b = np.zeros(batch + (2 * n, 2 * n))
    m = coupling.entries
    # coupling blocks lambda * [[0, 1], [-1, 0]]; m has zero diagonal
    b[..., 0::2, 1::2] += m
    b[..., 1::2, 0::2] -= m
    sw0 = _omega_sign(convention) * params.omega0
    bxx, bpp, off = _site_blocks(alpha, params)
    idx = np.arange(n)
    b[..., 2 * idx, 2 * idx] = bxx
    b[..., 2 * idx + 1, 2 * idx + 1] = bpp
    b[..., 2 * idx, 2 * idx + 1] += -sw0 + off
    b[..., 2 * idx + 1, 2 * idx] += sw0 + off
    return b


def build_diffusion(alpha: np.ndarray, params: FluctuationParams) -> np.ndarray:
    """Block-diagonal diffusion matrix D; batched over leading axes."""
    alpha = np.asarray(alpha, dtype=complex)
    n = alpha.shape[-1]
    d = np.zeros(alpha.shape[:-1] + (2 * n, 2 * n))
    val = 0.5 * (params.kappa1 + params.gamma_loss + 4.0 * params.kappa2 * np.abs(alpha) ** 2)
    idx = np.arange(n)
    d[..., 2 * idx, 2 * idx] = val
    d[..., 2 * idx + 1, 2 * idx + 1] = val
    return d


class _HermiteBatch:
    """Cubic-Hermite interpolation of stacked alpha(t) on a shared grid.

    Linear interpolation at the trajectory sampling rate leaves visible
    spectral artifacts in the stiff 4*k2*|alpha|^2 damping; the Hermite
    interpolant uses the exact RHS derivatives at the sample points.
    """

    def __init__(self, trajectories: Sequence[Trajectory]):
        base = trajectories[0].sample_times
        for tr in trajectories[1:]:
            if tr.sample_times.shape != base.shape or \
                    abs(tr.sample_times[0] - base[0]) > 1e-9:
                raise ValueError("trajectories must share one sample grid")
        self.t0 = float(base[0])
        self.dt = trajectories[0].dt_out
        self.y = np.stack([tr.alpha for tr in trajectories])          # (b, T, n)
        self.f = np.stack([tr.derivatives() for tr in trajectories])  # (b, T, n)
        self.n_seg = self.y.shape[1] - 1

    def __call__(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.dt
        k = int(np.clip(np.floor(s), 0, self.n_seg - 1))
        u = s - k
        y0, y1 = self.y[:, k], self.y[:, k + 1]
        f0, f1 = self.f[:, k] * self.dt, self.f[:, k + 1] * self.dt
        u2, u3 = u * u, u * u * u
        h00 = 2 * u3 - 3 * u2 + 1
        h10 = u3 - 2 * u2 + u
        h01 = -2 * u3 + 3 * u2
        h11 = u3 - u2
        return h00 * y0 + h10 * f0 + h01 * y1 + h11 * f1


class CovarianceSeries:
    """Covariance snapshots on a uniform grid plus physicality diagnostics.

    ``physicality_violations`` lists (t, min_symplectic_eigenvalue) for the
    checked snapshots that fell below 1/2 - tol; violations are reported,
    never clamped, so integrator misconfiguration stays visible.
    """

    def __init__(self, sample_times: np.ndarray, C: np.ndarray,
                 params: FluctuationParams, violations: list):
        self.sample_times = np.asarray(sample_times, dtype=float)
        self.C = C
        self.params = params
        self.physicality_violations = violations

    def __len__(self) -> int:
        return self.sample_times.size

    def matrix_at(self, index: int) -> CovarianceMatrix:
        return CovarianceMatrix(float(self.sample_times[index]), self.C[index])

    def matrices(self) -> list[CovarianceMatrix]:
        return [self.matrix_at(i) for i in range(len(self))]


def evolve_covariance(
    c0: np.ndarray,
    meanfield_trajectory: Union[Trajectory, Sequence[Trajectory]],
    params: FluctuationParams,
    coupling: Union[CouplingMatrix, Sequence[CouplingMatrix]],
    t_span: tuple[float, float],
    solver_opts: Optional[SolverOptions] = None,
    sample_stride: int = 1,
    on_sample: Optional[Callable[[int, float, np.ndarray], None]] = None,
    physicality_tol: float = 1e-6,
    physicality_stride: int = 1,
    convention: str = "paper",
    violations_sink: Optional[list] = None,
) -> Union[CovarianceSeries, list[CovarianceSeries], None]:
    """Propagate C' = B C + C B^T + D along one or more mean-field drives.

    The mean-field trajectory must cover ``t_span`` (the lattice equation is
    independent of the fluctuations, so it may be solved first and fed in as
    a time-dependent input).  Snapshots land on every ``sample_stride``-th
    point of the trajectory grid inside the span.  With ``on_sample`` given,
    snapshots are streamed as ``on_sample(index, t, stacked_C)`` and nothing
    is stored (returns None).

    The state is re-symmetrized after every accepted step.  Every
    ``physicality_stride``-th snapshot is checked for a minimum symplectic
    eigenvalue below 1/2 - physicality_tol; hits are recorded and warned
    about, not silently fixed.  In streaming mode pass ``violations_sink``
    to receive the per-member violation lists.
    """
    single = isinstance(meanfield_trajectory, Trajectory)
    trajs = [meanfield_trajectory] if single else list(meanfield_trajectory)
    coups = [coupling] * len(trajs) if isinstance(coupling, CouplingMatrix) else list(coupling)
    if len(coups) != len(trajs):
        raise ValueError("need one coupling per trajectory")
    t_i, t_f = float(t_span[0]), float(t_span[1])
    for tr in trajs:
        if t_i < tr.sample_times[0] - 1e-9 or t_f > tr.sample_times[-1] + 1e-9:
            raise ValueError("mean-field trajectory does not cover t_span")

    n = coups[0].n
    c0 = np.asarray(c0, dtype=float)
    if c0.shape != (2 * n, 2 * n):
        raise ValueError("c0 has the wrong shape")
    if np.max(np.abs(c0 - c0.T)) > 1e-8:
        raise ValueError("c0 must be symmetric")

    b = len(trajs)
    driver = _HermiteBatch(trajs)
    m_stack = np.stack([c.entries for c in coups])
    idx = np.arange(n)
    k1, k2, gl = params.kappa1, params.kappa2, params.gamma_loss
    sw0 = _omega_sign(convention) * params.omega0

    # static part: coupling blocks and the w0 rotation; the alpha-dependent
    # diagonal-block entries are rewritten in place on every RHS call
    b_buf = np.zeros((b, 2 * n, 2 * n))
    b_buf[:, 0::2, 1::2] += m_stack
    b_buf[:, 1::2, 0::2] -= m_stack
    d_const = 0.5 * (k1 + gl)

    def rhs(t, c):
        alph = driver(t)                       # (b, n) complex
        bxx, bpp, off = _site_blocks(alph, params)
        b_buf[:, 2 * idx, 2 * idx] = bxx
        b_buf[:, 2 * idx + 1, 2 * idx + 1] = bpp
        b_buf[:, 2 * idx, 2 * idx + 1] = -sw0 + off
        b_buf[:, 2 * idx + 1, 2 * idx] = sw0 + off
        bc = b_buf @ c
        out = bc + np.swapaxes(bc, -1, -2)
        dval = d_const + 2.0 * k2 * np.abs(alph) ** 2
        out[:, 2 * idx, 2 * idx] += dval
        out[:, 2 * idx + 1, 2 * idx + 1] += dval
        return out

    def resym(t, c):
        return 0.5 * (c + np.swapaxes(c, -1, -2))

    grid = trajs[0].sample_times
    sl = trajs[0].window_slice(max(t_i, grid[0]), t_f)
    t_eval = grid[sl][::sample_stride]
    if t_eval.size == 0 or t_eval[0] > t_i + 1e-9:
        t_eval = np.insert(t_eval, 0, t_i)

    y0 = np.broadcast_to(c0, (b, 2 * n, 2 * n)).copy()
    opts = solver_opts or SolverOptions()
    violations: list[list] = [[] for _ in range(b)]

    check_buf: list[tuple[int, np.ndarray]] = []

    def flush_checks():
        if not check_buf:
            return
        stack = np.stack([c for _, c in check_buf])       # (q, b, 2n, 2n)
        nu = min_symplectic_eigenvalues(stack)            # (q, b)
        for (i, _), nu_row in zip(check_buf, nu):
            for m in range(b):
                if nu_row[m] < 0.5 - physicality_tol:
                    violations[m].append((float(t_eval[i]), float(nu_row[m])))
        check_buf.clear()

    def observe(i, c_stack):
        if i % physicality_stride == 0 or i == t_eval.size - 1:
            check_buf.append((i, c_stack.copy()))
            if len(check_buf) >= 256:
                flush_checks()
        if on_sample is not None:
            on_sample(i, float(t_eval[i]), c_stack)

    if t_f <= t_i + 1e-15:
        stacked = y0[None, ...].copy()
        t_eval = np.array([t_i])
        observe(0, stacked[0])
    elif on_sample is not None:
        integrate_adaptive(rhs, (t_i, t_f), y0, t_eval, options=opts,
                           batch_ndim=1, on_accept=resym, on_sample=observe)
        stacked = None
    else:
        stacked = integrate_adaptive(rhs, (t_i, t_f), y0, t_eval, options=opts,
                                     batch_ndim=1, on_accept=resym)
        for i in range(0, t_eval.size, physicality_stride):
            check_buf.append((i, stacked[i]))
            if len(check_buf) >= 256:
                flush_checks()
    flush_checks()

    for m, v in enumerate(violations):
        if v:
            warnings.warn(
                f"covariance physicality violated for member {m} at {len(v)} "
                f"snapshot(s), first at t={v[0][0]:.6g} "
                f"(min sympl. eig {v[0][1]:.6g})", stacklevel=2)
    if violations_sink is not None:
        violations_sink.extend(violations)
    if stacked is None:
        return None
    series = [CovarianceSeries(t_eval, stacked[:, m], params, violations[m])
              for m in range(b)]
    return series[0] if single else series


def gaussian_wigner(C: np.ndarray, mean_alpha: complex, grid: tuple,
                    site: Optional[int] = None) -> np.ndarray:
    """Gaussian Wigner density on a quadrature grid.

    ``grid`` is (x_values, p_values); the density is centered at
    (sqrt(2) Re alpha, sqrt(2) Im alpha).  For a multi-site covariance,
    ``site`` (1-based) selects the 2x2 marginal block.  Normalized so the
    integral over the unbounded plane is 1 (vacuum peak value 1/pi).
    """
    C = np.asarray(C, dtype=float)
    if C.shape == (2, 2):
        block = C
    else:
        if site is None:
            raise ValueError("site index required for multi-site covariance")
        r0, r1 = QuadratureIndexing.rows(site)
        block = C[np.ix_([r0, r1], [r0, r1])]
    det = np.linalg.det(block)
    if det <= 0:
        raise np.linalg.LinAlgError("singular covariance block")
    inv = np.linalg.inv(block)
    x, p = np.asarray(grid[0]), np.asarray(grid[1])
    dx = x[:, None] - np.sqrt(2.0) * np.real(mean_alpha)
    dp = p[None, :] - np.sqrt(2.0) * np.imag(mean_alpha)
    q = inv[0, 0] * dx ** 2 + 2 * inv[0, 1] * dx * dp + inv[1, 1] * dp ** 2
    return np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(det))
