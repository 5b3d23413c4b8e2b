"""Synchronization measures: quadrature-based quantum measure and the
classical phase-locking diagnostic.

The complete-synchronization measure of a site pair is the inverse of the
summed second moments of the quadrature differences,

    S_c(j, j') = < (X_{2j-1} - X_{2j'-1})^2 + (X_{2j} - X_{2j'})^2 >^{-1},

evaluated here on displaced-frame covariances (zero means, so second
moments are covariance entries).  Time averages are trapezoidal over a
post-relaxation window.  Classical phase locking of a site pair means the
unwrapped phase difference of the mean-field amplitudes has zero drift.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fluctuations import CovarianceMatrix, CovarianceSeries, PhysicalityError
from .meanfield import Trajectory

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

__all__ = [
    "TimeWindow",
    "SyncMatrix",
    "PhaseLockReport",
    "s_c_instantaneous",
    "s_c_time_average",
    "sync_matrix",
    "SyncMatrixAccumulator",
    "phase_lock_rate",
]

PHASE_LOCK_TOL = 1e-4  # default drift tolerance, units of omega0


@dataclass(frozen=True)
class TimeWindow:
    """Averaging window [t_i, t_f] in units of 1/omega0."""

    t_i: float
    t_f: float

    def __post_init__(self):
        if not self.t_f > self.t_i:
            raise ValueError("t_f must exceed t_i")

    @property
    def length(self) -> float:
        return self.t_f - self.t_i


@dataclass(frozen=True)
class PhaseLockReport:
    """Least-squares phase-difference drift of a site pair over a window."""

    pair: tuple[int, int]
    drift_rate: float
    locked: bool
    residual_offset: float
    tolerance: float


class SyncMatrix:
    """Time-averaged pairwise synchronization values.

    ``values`` is symmetric with NaN on the diagonal: the measure is
    undefined for a site against itself (the variance of a quantity minus
    itself is zero, outside the regime of the defining formula), so the
    diagonal is a sentinel excluded from statistics.
    """

    def __init__(self, values: np.ndarray, window: TimeWindow):
        v = np.asarray(values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("sync matrix must be square")
        self.values = v
        self.window = window

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def pair(self, j: int, jp: int) -> float:
        return float(self.values[j - 1, jp - 1])

    def offdiag(self) -> np.ndarray:
        mask = ~np.eye(self.n, dtype=bool)
        return self.values[mask]

    def argmax_pair(self) -> tuple[int, int]:
        v = np.array(self.values)
        np.fill_diagonal(v, -np.inf)
        i, j = np.unravel_index(np.nanargmax(v), v.shape)
        lo, hi = sorted((int(i) + 1, int(j) + 1))
        return lo, hi

    def bulk_median(self, boundary_sites: Sequence[int]) -> float:
        """Median over pairs with both sites outside ``boundary_sites``."""
        bulk = [j for j in range(1, self.n + 1) if j not in set(boundary_sites)]
        vals = [self.values[a - 1, b - 1] for i, a in enumerate(bulk)
                for b in bulk[i + 1:]]
        return float(np.median(vals))

    def to_csv(self) -> str:
        import io as _io, csv as _csv
        buf = _io.StringIO()
        w = _csv.writer(buf)
        w.writerow([f"site{j}" for j in range(1, self.n + 1)])
        for row in self.values:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def summary(self, boundary_sites: Sequence[int]) -> dict:
        """JSON-ready digest: argmax pair, bulk median, boundary/bulk ratio."""
        jm, jpm = self.argmax_pair()
        med = self.bulk_median(boundary_sites)
        bnd = sorted(set(boundary_sites))
        bvals = [self.values[a - 1, b - 1] for i, a in enumerate(bnd)
                 for b in bnd[i + 1:]]
        bval = float(np.max(bvals)) if bvals else float("nan")
        return {
            "argmax_pair": [jm, jpm],
            "argmax_value": float(self.values[jm - 1, jpm - 1]),
            "bulk_median": med,
            "boundary_pair_max": bval,
            "boundary_bulk_ratio": bval / med if med > 0 else float("inf"),
            "window": [self.window.t_i, self.window.t_f],
        }

    def to_json(self, boundary_sites: Sequence[int]) -> str:
        return json.dumps(self.summary(boundary_sites), indent=2)


def _pair_rows(j: int, jp: int, n: int):
    if j == jp:
        raise ValueError("synchronization of a site with itself is undefined")
    if not (1 <= j <= n and 1 <= jp <= n):
        raise IndexError(f"site pair ({j}, {jp}) outside 1..{n}")
    return 2 * (j - 1), 2 * (jp - 1)


def s_c_instantaneous(C, j: int, jp: int) -> float:
    """Complete-synchronization measure of pair (j, jp) from a covariance.

    Evaluated in canonical pair order, so the symmetry in (j, jp) is exact
    rather than up to floating-point addition order.
    """
    c = C.C if isinstance(C, CovarianceMatrix) else np.asarray(C, dtype=float)
    n = c.shape[0] // 2
    if j > jp:
        j, jp = jp, j
    xj, xp = _pair_rows(j, jp, n)
    denom = (c[xj, xj] + c[xp, xp] - 2 * c[xj, xp]
             + c[xj + 1, xj + 1] + c[xp + 1, xp + 1] - 2 * c[xj + 1, xp + 1])
    if denom <= 0:
        raise PhysicalityError(
            f"non-positive quadrature-difference variance {denom:.3g} for pair ({j}, {jp})")
    return float(1.0 / denom)


def _s_c_all_pairs(c: np.ndarray) -> np.ndarray:
    """Vectorized S_c over all site pairs; NaN diagonal."""
    xx = c[0::2, 0::2]
    pp = c[1::2, 1::2]
    vx = np.diag(xx)
    vp = np.diag(pp)
    denom = vx[:, None] + vx[None, :] - 2 * xx + vp[:, None] + vp[None, :] - 2 * pp
    with np.errstate(divide="ignore", invalid="ignore"):
        s = 1.0 / denom
    np.fill_diagonal(s, np.nan)
    return s


def _window_samples(times: np.ndarray, window: TimeWindow):
    eps = 1e-9 * max(1.0, abs(window.t_f))
    mask = (times >= window.t_i - eps) & (times <= window.t_f + eps)
    if np.count_nonzero(mask) < 2:
        raise ValueError("window must cover at least two covariance samples")
    if times[mask][0] > window.t_i + 1e-6 or times[mask][-1] < window.t_f - 1e-6:
        raise ValueError("window extends outside the sampled data")
    return mask


def s_c_time_average(covariance_sequence, j: int, jp: int,
                     window: TimeWindow) -> float:
    """Trapezoidal time average of S_c(j, jp) over the window."""
    seq = covariance_sequence
    if isinstance(seq, CovarianceSeries):
        times, mats = seq.sample_times, seq.C
    else:
        times = np.array([m.t for m in seq])
        mats = np.stack([m.C for m in seq])
    mask = _window_samples(times, window)
    t = times[mask]
    vals = np.array([s_c_instantaneous(mats[i], j, jp)
                     for i in np.nonzero(mask)[0]])
    return float(_trapezoid(vals, t) / (t[-1] - t[0]))


def sync_matrix(covariance_sequence, window: TimeWindow) -> SyncMatrix:
    """Time-averaged S_c for every off-diagonal pair."""
    seq = covariance_sequence
    if isinstance(seq, CovarianceSeries):
        times, mats = seq.sample_times, seq.C
    else:
        times = np.array([m.t for m in seq])
        mats = np.stack([m.C for m in seq])
    mask = _window_samples(times, window)
    t = times[mask]
    vals = np.stack([_s_c_all_pairs(mats[i]) for i in np.nonzero(mask)[0]])
    avg = _trapezoid(vals, t, axis=0) / (t[-1] - t[0])
    return SyncMatrix(avg, window)


class SyncMatrixAccumulator:
    """Streaming trapezoidal accumulator for the all-pairs time average.

    Designed as the ``on_sample`` consumer of the covariance integrator so
    long windows never require storing the covariance history.  Handles a
    stacked batch of covariance members.
    """

    def __init__(self, n_sites: int, batch: int, window: TimeWindow):
        self.window = window
        self._sum = np.zeros((batch, n_sites, n_sites))
        self._prev_vals: Optional[np.ndarray] = None
        self._prev_t: Optional[float] = None
        self._t_first: Optional[float] = None

    def __call__(self, index: int, t: float, c_stack: np.ndarray) -> None:
        eps = 1e-9 * max(1.0, abs(self.window.t_f))
        if t < self.window.t_i - eps or t > self.window.t_f + eps:
            return
        vals = np.stack([_s_c_all_pairs(c) for c in c_stack])
        if self._prev_vals is not None:
            self._sum += 0.5 * (t - self._prev_t) * (vals + self._prev_vals)
        else:
            self._t_first = t
        self._prev_vals = vals
        self._prev_t = t

    def result(self) -> list[SyncMatrix]:
        if self._prev_t is None or self._prev_t <= self._t_first:
            raise ValueError("accumulator saw fewer than two window samples")
        span = self._prev_t - self._t_first
        return [SyncMatrix(v / span, self.window) for v in self._sum]


def phase_lock_rate(trajectory: Trajectory, j: int, jp: int,
                    window: TimeWindow, tol: float = PHASE_LOCK_TOL,
                    amplitude_floor: Optional[float] = None) -> PhaseLockReport:
    """Drift of the unwrapped phase difference arg a_j - arg a_jp.

    The trajectory sampling guarantees less than pi of phase advance per
    sample, so nearest-branch unwrapping is exact.  Sites whose amplitude
    dips below the floor (default 1e-3 of the uncoupled saturation radius)
    have no well-defined phase and raise.
    """
    n = trajectory.n_sites
    if not (1 <= j <= n and 1 <= jp <= n) or j == jp:
        raise IndexError(f"invalid site pair ({j}, {jp})")
    sl = trajectory.window_slice(window.t_i, window.t_f)
    t = trajectory.sample_times[sl]
    aj = trajectory.alpha[sl, j - 1]
    ap = trajectory.alpha[sl, jp - 1]
    if amplitude_floor is None:
        from .meanfield import saturation_radius
        amplitude_floor = 1e-3 * saturation_radius(trajectory.params)
    small = min(np.min(np.abs(aj)), np.min(np.abs(ap)))
    if small < amplitude_floor:
        raise PhysicalityError(
            f"phase undefined: amplitude {small:.3g} below floor {amplitude_floor:.3g}")
    dphi = np.unwrap(np.angle(aj)) - np.unwrap(np.angle(ap))
    drift, offset = np.polyfit(t - t[0], dphi, 1)
    resid = np.angle(np.exp(1j * offset))  # mapped to (-pi, pi]
    return PhaseLockReport((j, jp), float(drift), bool(abs(drift) < tol),
                           float(resid), tol)
