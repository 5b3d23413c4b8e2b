"""Mean-field dynamics of the van der Pol oscillator lattice.

The complex amplitudes obey

    alpha' = -i (w0 * alpha + M @ alpha) + (k1/2) alpha - k2 |alpha|^2 alpha

where M is the lattice coupling matrix.  Uncoupled sites saturate on the
limit cycle of radius sqrt(k1 / (2 k2)); the linearization around the
origin has eigenvalues -i (w0 + mu_l) + k1/2 built from the lattice
eigenvalues mu_l, so every mode is linearly unstable and the nonlinear
damping selects the saturated dynamics.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ._rk import SolverOptions, integrate_adaptive
from .lattice import CouplingMatrix, EigenDecomposition

__all__ = [
    "MeanFieldParams",
    "AmplitudeState",
    "Trajectory",
    "InitialCondition",
    "StabilityReport",
    "drift",
    "integrate",
    "integrate_ensemble",
    "jacobian_eigenvalues",
    "linear_prediction",
    "amplitude_series",
    "random_initial",
    "saturation_radius",
    "radial_closed_form",
]


@dataclass(frozen=True)
class MeanFieldParams:
    """Intrinsic frequency and gain/loss rates (k1 gain, k2 two-phonon loss)."""

    omega0: float = 1.0
    kappa1: float = 5e-3
    kappa2: float = 1e-2

    def __post_init__(self):
        if self.kappa1 <= 0 or self.kappa2 <= 0:
            raise ValueError("kappa1 and kappa2 must be positive")
        if self.kappa1 > 0.1 * self.omega0 or self.kappa2 > 0.1 * self.omega0:
            warnings.warn(
                "dissipation rates above 0.1*omega0 leave the weak-dissipation regime",
                stacklevel=2)


def saturation_radius(params: MeanFieldParams) -> float:
    """Limit-cycle amplitude of an uncoupled oscillator."""
    return float(np.sqrt(params.kappa1 / (2.0 * params.kappa2)))


@dataclass(frozen=True)
class AmplitudeState:
    """Snapshot of the complex site amplitudes at time t."""

    t: float
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=complex)
        if a.ndim != 1:
            raise ValueError("alpha must be a 1-d complex vector")
        if not np.all(np.isfinite(a.view(float))):
            raise ValueError("alpha entries must be finite")
        object.__setattr__(self, "alpha", a)

    @property
    def n(self) -> int:
        return self.alpha.size


class Trajectory:
    """Uniformly sampled mean-field trajectory.

    ``alpha`` has shape (n_samples, n_sites); ``sample_times`` is a strictly
    increasing uniform grid (spacing ``dt_out``) as required by the DFT
    module.  Derivative samples for interpolation are computed lazily.
    """

    def __init__(self, sample_times: np.ndarray, alpha: np.ndarray,
                 params: MeanFieldParams, coupling: CouplingMatrix):
        sample_times = np.asarray(sample_times, dtype=float)
        if sample_times.ndim != 1 or sample_times.size < 1:
            raise ValueError("need at least one sample time")
        d = np.diff(sample_times)
        if sample_times.size > 1:
            if np.any(d <= 0):
                raise ValueError("sample times must be strictly increasing")
            if np.max(np.abs(d - d[0])) > 1e-9 * d[0]:
                raise ValueError("sample grid must be uniform")
        self.sample_times = sample_times
        self.alpha = np.asarray(alpha, dtype=complex)
        self.params = params
        self.coupling = coupling
        self._deriv: Optional[np.ndarray] = None

    @property
    def n_sites(self) -> int:
        return self.alpha.shape[1]

    @property
    def dt_out(self) -> float:
        return float(self.sample_times[1] - self.sample_times[0])

    @property
    def states(self) -> list[AmplitudeState]:
        return [AmplitudeState(float(t), a)
                for t, a in zip(self.sample_times, self.alpha)]

    def state_at(self, index: int) -> AmplitudeState:
        return AmplitudeState(float(self.sample_times[index]), self.alpha[index])

    def derivatives(self) -> np.ndarray:
        """RHS evaluated on the sample grid (for Hermite interpolation)."""
        if self._deriv is None:
            self._deriv = drift_array(self.alpha, self.params, self.coupling.entries)
        return self._deriv

    def window_slice(self, t_i: float, t_f: float) -> slice:
        """Index slice covering [t_i, t_f] on the sample grid."""
        ts = self.sample_times
        if t_i < ts[0] - 1e-9 or t_f > ts[-1] + 1e-9:
            raise ValueError("window outside trajectory coverage")
        i0 = int(np.searchsorted(ts, t_i - 1e-9 * max(1.0, abs(t_i))))
        i1 = int(np.searchsorted(ts, t_f + 1e-9 * max(1.0, abs(t_f)), side="right"))
        return slice(i0, i1)

    def to_csv(self) -> str:
        """Columns t, Re a_1, Im a_1, ..., Re a_N, Im a_N."""
        import io as _io, csv as _csv
        buf = _io.StringIO()
        w = _csv.writer(buf)
        header = ["t"]
        for j in range(1, self.n_sites + 1):
            header += [f"re_alpha_{j}", f"im_alpha_{j}"]
        w.writerow(header)
        for t, a in zip(self.sample_times, self.alpha):
            row = [repr(float(t))]
            for v in a:
                row += [repr(float(v.real)), repr(float(v.imag))]
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class InitialCondition:
    """Eigenstate / random / explicit initial amplitude family.

    variant: "eigenstate" (mode index l, amplitude scale), "random"
    (per-site a*exp(i*phi) with a ~ U(0, 0.5), phi ~ U(0, 2*pi)), or
    "explicit" (a concrete vector).
    """

    variant: str
    mode_index: Optional[int] = None
    scale: float = 1.0
    seed: Optional[int] = None
    alpha: Optional[np.ndarray] = None

    def realize(self, n: int,
                decomposition: Optional[EigenDecomposition] = None) -> AmplitudeState:
        if self.variant == "eigenstate":
            if decomposition is None:
                raise ValueError("eigenstate initial condition needs a decomposition")
            if not (1 <= self.mode_index <= n):
                raise ValueError("mode index out of range")
            return AmplitudeState(0.0, self.scale * decomposition.mode(self.mode_index).astype(complex))
        if self.variant == "random":
            return random_initial(n, self.seed)
        if self.variant == "explicit":
            a = np.asarray(self.alpha, dtype=complex)
            if a.size != n:
                raise ValueError("explicit vector length mismatch")
            return AmplitudeState(0.0, a)
        raise ValueError(f"unknown initial condition variant {self.variant!r}")


@dataclass(frozen=True)
class StabilityReport:
    """Jacobian spectrum at the origin: nu_l = -i(w0 + mu_l) + k1/2."""

    eigenvalues: np.ndarray

    @property
    def growth_rates(self) -> np.ndarray:
        return self.eigenvalues.real

    @property
    def frequencies(self) -> np.ndarray:
        return -self.eigenvalues.imag


def drift_array(alpha: np.ndarray, params: MeanFieldParams,
                coupling_entries: np.ndarray) -> np.ndarray:
    """Vectorized RHS; alpha may carry arbitrary leading batch axes."""
    lin = -1j * (params.omega0 * alpha + alpha @ coupling_entries.T)
    return lin + 0.5 * params.kappa1 * alpha - params.kappa2 * (np.abs(alpha) ** 2) * alpha


def drift(state: AmplitudeState, params: MeanFieldParams,
          coupling: CouplingMatrix) -> np.ndarray:
    """Mean-field RHS at one state (pure function)."""
    if state.n != coupling.n:
        raise ValueError(f"state has {state.n} sites, coupling {coupling.n}")
    return drift_array(state.alpha, params, coupling.entries)


def max_output_dt(params: MeanFieldParams, coupling: CouplingMatrix) -> float:
    """Sampling limit pi / (w0 + max |mu|) resolving the fastest mode."""
    mu_max = float(np.max(np.abs(np.linalg.eigvalsh(coupling.entries)))) if coupling.n else 0.0
    return np.pi / (params.omega0 + mu_max)


def integrate(initial: AmplitudeState, params: MeanFieldParams,
              coupling: CouplingMatrix, t_end: float, dt_out: float,
              solver_opts: Optional[SolverOptions] = None,
              record_from: float = 0.0) -> Trajectory:
    """Integrate one trajectory and sample it on a uniform grid.

    Integration always starts at t=0; ``record_from`` suppresses storage of
    the (long) relaxation transient without affecting the dynamics.
    """
    trajs = integrate_ensemble(
        initial.alpha[None, :], params, coupling, t_end, dt_out,
        solver_opts=solver_opts, record_from=record_from)
    return trajs[0]


def integrate_ensemble(initials: np.ndarray, params: MeanFieldParams,
                       coupling: Union[CouplingMatrix, Sequence[CouplingMatrix]],
                       t_end: float, dt_out: float,
                       solver_opts: Optional[SolverOptions] = None,
                       record_from: float = 0.0) -> list[Trajectory]:
    """Integrate a batch of initial conditions with a shared adaptive step.

    ``coupling`` is one matrix shared by all members or a sequence with one
    matrix per member (disorder realizations).  Returns one Trajectory per
    row of ``initials``.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    initials = np.asarray(initials, dtype=complex)
    if initials.ndim != 2:
        raise ValueError("initials must be (batch, n_sites)")
    b, n = initials.shape
    if isinstance(coupling, CouplingMatrix):
        mats = [coupling] * b
        m_stack = coupling.entries[None, :, :]
    else:
        mats = list(coupling)
        if len(mats) != b:
            raise ValueError("need one coupling matrix per batch member")
        m_stack = np.stack([c.entries for c in mats])
    if mats[0].n != n:
        raise ValueError("initial vector length does not match coupling size")
    unique_mats = list({id(c): c for c in mats}.values())
    dt_limit = min(max_output_dt(params, c) for c in unique_mats)
    if dt_out > dt_limit:
        raise ValueError(
            f"dt_out={dt_out:.4g} does not resolve the fastest mode "
            f"(limit {dt_limit:.4g})")
    if not 0.0 <= record_from < t_end:
        raise ValueError("record_from must lie in [0, t_end)")

    n_samples = int(round((t_end - record_from) / dt_out)) + 1
    t_eval = record_from + dt_out * np.arange(n_samples)
    t_eval = t_eval[t_eval <= t_end + 1e-9]

    mT = np.ascontiguousarray(np.swapaxes(m_stack, -1, -2))
    w0, k1, k2 = params.omega0, params.kappa1, params.kappa2
    shared = m_stack.shape[0] == 1

    # integrate beta = alpha * exp(+i w0 t): the uniform on-site rotation
    # drops out of the RHS (it commutes with everything else), which removes
    # the fastest frequency from the stepper; samples are rotated back
    # exactly below, so the stored trajectory is the lab-frame alpha
    def rhs(t, y):
        lin = -1j * (y @ mT[0]) if shared else \
            -1j * np.einsum("bij,bj->bi", m_stack, y, optimize=True)
        return lin + 0.5 * k1 * y - k2 * (np.abs(y) ** 2) * y

    opts = solver_opts or SolverOptions()
    samples = integrate_adaptive(rhs, (0.0, float(t_end)), initials, t_eval,
                                 options=opts, batch_ndim=1)
    samples *= np.exp(-1j * w0 * t_eval)[:, None, None]
    return [Trajectory(t_eval, samples[:, i, :], params, mats[i]) for i in range(b)]


def jacobian_eigenvalues(params: MeanFieldParams,
                         decomposition: EigenDecomposition) -> StabilityReport:
    """Linear-stability spectrum of the origin from a lattice eigensystem."""
    nu = -1j * (params.omega0 + decomposition.eigenvalues) + 0.5 * params.kappa1
    return StabilityReport(nu)


def linear_prediction(coefficients: Sequence[complex],
                      decomposition: EigenDecomposition,
                      params: MeanFieldParams,
                      t: Union[float, np.ndarray]) -> np.ndarray:
    """Superposition of lattice eigenmodes rotating at w0 + mu_l.

    Returns shape (n,) for scalar t, (len(t), n) otherwise.
    """
    c = np.asarray(coefficients, dtype=complex)
    if c.size != decomposition.eigenvalues.size:
        raise ValueError("coefficient list must have length N")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    phases = np.exp(-1j * np.outer(t_arr, params.omega0 + decomposition.eigenvalues))
    out = (phases * c) @ decomposition.eigenvectors.T
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def amplitude_series(trajectory: Trajectory, j: int) -> np.ndarray:
    """Real displacement A_j(t) = Re alpha_j(t) for 1-based site j."""
    if not 1 <= j <= trajectory.n_sites:
        raise IndexError(f"site {j} out of range 1..{trajectory.n_sites}")
    return trajectory.alpha[:, j - 1].real


def random_initial(n: int, seed=None) -> AmplitudeState:
    """Random amplitudes a*exp(i*phi), a ~ U(0, 0.5), phi ~ U(0, 2*pi)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 0.5, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return AmplitudeState(0.0, a * np.exp(1j * phi))


def radial_closed_form(r0: float, t, params: MeanFieldParams) -> np.ndarray:
    """Exact |alpha|(t) of an uncoupled site: logistic growth of r^2.

    r' = (k1/2) r - k2 r^3  =>  r^2(t) = A^2 / (1 + (A^2/r0^2 - 1) e^(-k1 t))
    with A the saturation radius.  Serves as the independent oracle for
    integrator checks.
    """
    a2 = params.kappa1 / (2.0 * params.kappa2)
    t = np.asarray(t, dtype=float)
    if r0 == 0.0:
        return np.zeros_like(t)
    return np.sqrt(a2 / (1.0 + (a2 / r0 ** 2 - 1.0) * np.exp(-params.kappa1 * t)))
