"""Coupling-matrix construction for topological oscillator lattices.

Builds the hopping matrix of the lattice Hamiltonian (couplings only; the
uniform on-site frequency lives in the dynamics parameters, never here),
applies symmetry-preserving bond disorder, and exposes eigendecompositions
with near-zero-mode identification.

Site indices in the public API are 1-based, matching the physics
convention used throughout the package; array storage is 0-based.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "LatticeError",
    "LatticeSpec",
    "CouplingMatrix",
    "EigenDecomposition",
    "DisorderSpec",
    "build_ssh",
    "build_kagome",
    "build_custom",
    "apply_disorder",
    "eigendecompose",
    "count_zero_modes",
    "ssh_default_zero_tol",
    "kagome_default_zero_tol",
]

# Default near-zero-mode tolerances, in units of the coupling scale.
# SSH: finite-size edge splitting is exponentially small but physical, so a
# loose-ish absolute floor is used.  Kagome: corner energies on a finite
# flake scale like |l1/l2|**triangles_per_edge; 1e-4 captures them for the
# parameter range studied while staying four orders below the band gap.
SSH_ZERO_TOL_SCALE = 1e-3
KAGOME_ZERO_TOL_SCALE = 1e-4


class LatticeError(ValueError):
    """Invalid lattice specification or malformed coupling matrix."""


@dataclass(frozen=True)
class LatticeSpec:
    """Declarative lattice description, serializable to the runner config.

    kind is one of "ssh", "kagome", "custom".  SSH uses (n_sites, lambda0,
    delta_lambda); Kagome uses (triangles_per_edge, lambda1, lambda2);
    custom uses an explicit bond list [(j, jp, strength), ...] with 1-based
    site indices.
    """

    kind: str
    n_sites: Optional[int] = None
    lambda0: Optional[float] = None
    delta_lambda: Optional[float] = None
    triangles_per_edge: Optional[int] = None
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    bonds: Optional[tuple] = None

    def build(self) -> "CouplingMatrix":
        if self.kind == "ssh":
            return build_ssh(self.n_sites, self.lambda0, self.delta_lambda)
        if self.kind == "kagome":
            return build_kagome(self.triangles_per_edge, self.lambda1, self.lambda2)
        if self.kind == "custom":
            n = self.n_sites or max(max(j, jp) for j, jp, _ in self.bonds)
            return build_custom(n, self.bonds)
        raise LatticeError(f"unknown lattice kind {self.kind!r}")

    def coupling_scale(self) -> float:
        """Scale used for disorder strength and zero-mode tolerances."""
        if self.kind == "ssh":
            return abs(self.lambda0)
        if self.kind == "kagome":
            return abs(self.lambda2)
        return max(abs(s) for _, _, s in self.bonds)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in ("n_sites", "lambda0", "delta_lambda", "triangles_per_edge",
                    "lambda1", "lambda2"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        if self.bonds is not None:
            d["bonds"] = [list(b) for b in self.bonds]
        return d

    @staticmethod
    def from_dict(d: dict) -> "LatticeSpec":
        bonds = d.get("bonds")
        return LatticeSpec(
            kind=d["kind"],
            n_sites=d.get("n_sites"),
            lambda0=d.get("lambda0"),
            delta_lambda=d.get("delta_lambda"),
            triangles_per_edge=d.get("triangles_per_edge"),
            lambda1=d.get("lambda1"),
            lambda2=d.get("lambda2"),
            bonds=tuple(tuple(b) for b in bonds) if bonds is not None else None,
        )


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric zero-diagonal matrix of hopping strengths (units of w0)."""

    entries: np.ndarray
    site_labels: tuple = ()

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LatticeError("coupling matrix must be square")
        if np.max(np.abs(m - m.T)) != 0.0:
            raise LatticeError("coupling matrix must be exactly symmetric")
        if np.any(np.diag(m) != 0.0):
            raise LatticeError("coupling matrix must have zero diagonal")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        if not self.site_labels:
            object.__setattr__(
                self, "site_labels", tuple(f"site{j}" for j in range(1, self.n + 1)))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def bonds(self) -> list[tuple[int, int, float]]:
        """Nonzero unordered bonds as (j, jp, strength), 1-based, j < jp."""
        iu, ju = np.nonzero(np.triu(self.entries, k=1))
        return [(int(i) + 1, int(j) + 1, float(self.entries[i, j]))
                for i, j in zip(iu, ju)]

    def to_csv(self) -> str:
        """Dense row-major CSV with a header row of site labels."""
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.site_labels)
        for row in self.entries:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "CouplingMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        labels = tuple(rows[0])
        m = np.array([[float(v) for v in r] for r in rows[1:]])
        return CouplingMatrix(m, labels)


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues and orthonormal real eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_mode_indices: tuple = ()

    def mode(self, l: int) -> np.ndarray:
        """Eigenvector for 1-based mode index l."""
        return self.eigenvectors[:, l - 1]


@dataclass(frozen=True)
class DisorderSpec:
    """Static bond disorder: independent U(-r, r) draw per unordered bond."""

    strength: float
    seed: int

    def __post_init__(self):
        if self.strength < 0:
            raise LatticeError("disorder strength must be >= 0")


def build_ssh(n_sites: int, lambda0: float, delta_lambda: float) -> CouplingMatrix:
    """Open dimerized chain with alternating nearest-neighbor bonds.

    Bond (2k-1, 2k) carries lambda0 - delta_lambda and bond (2k, 2k+1)
    carries lambda0 + delta_lambda, so positive dimerization puts the weak
    bond at the chain ends (two mid-gap edge modes).
    """
    if n_sites < 2 or n_sites % 2 != 0:
        raise LatticeError("SSH chain needs an even site count >= 2")
    m = np.zeros((n_sites, n_sites))
    for i in range(1, n_sites):  # bond between sites i and i+1 (1-based)
        lam = lambda0 - delta_lambda if i % 2 == 1 else lambda0 + delta_lambda
        m[i - 1, i] = m[i, i - 1] = lam
    return CouplingMatrix(m)


def _kagome_sites(triangles_per_edge: int):
    """Site bookkeeping for a triangular flake of corner-connected triangles.

    Upward triangle (r, c), 0 <= c <= r < T, has vertices A (top),
    B (bottom-left), C (bottom-right); all 3T(T+1)/2 vertices are distinct
    sites.  Downward-triangle bonds connect neighboring upward triangles.
    Returns (positions dict keyed by (sub, r, c), up_bonds, down_bonds).
    """
    T = triangles_per_edge
    pos = {}
    for r in range(T):
        for c in range(r + 1):
            ax, ay = 2 * c - r, -r * np.sqrt(3.0)
            pos[("A", r, c)] = (ax, ay)
            pos[("B", r, c)] = (ax - 0.5, ay - np.sqrt(3.0) / 2)
            pos[("C", r, c)] = (ax + 0.5, ay - np.sqrt(3.0) / 2)
    up, down = [], []
    for r in range(T):
        for c in range(r + 1):
            up += [(("A", r, c), ("B", r, c)),
                   (("B", r, c), ("C", r, c)),
                   (("C", r, c), ("A", r, c))]
            if c + 1 <= r:
                down.append((("C", r, c), ("B", r, c + 1)))
            if r + 1 < T:
                down.append((("C", r, c), ("A", r + 1, c + 1)))
                down.append((("B", r, c), ("A", r + 1, c)))
    return pos, up, down


def _kagome_ordering(triangles_per_edge: int):
    """Corner-first site ordering.

    1 = top corner, 2 = left corner, 3 = right corner; then left edge
    (top to bottom), right edge (top to bottom), bottom edge (left to
    right); remaining bulk sites row-major from the top.
    """
    T = triangles_per_edge
    order = [("A", 0, 0), ("B", T - 1, 0), ("C", T - 1, T - 1)]
    left, right = [], []
    for r in range(T):
        if r > 0:
            left.append(("A", r, 0))
            right.append(("A", r, r))
        if r < T - 1:
            left.append(("B", r, 0))
            right.append(("C", r, r))
    # interleave to walk top -> bottom along each edge
    left_sorted = sorted(left, key=lambda s: (s[1], 0 if s[0] == "A" else 1))
    right_sorted = sorted(right, key=lambda s: (s[1], 0 if s[0] == "A" else 1))
    bottom = []
    for c in range(T):
        if c > 0:
            bottom.append(("B", T - 1, c))
        if c < T - 1:
            bottom.append(("C", T - 1, c))
    bottom_sorted = sorted(bottom, key=lambda s: (s[2], 0 if s[0] == "B" else 1))
    order += left_sorted + right_sorted + bottom_sorted
    taken = set(order)
    pos, _, _ = _kagome_sites(T)
    bulk = [s for s in pos if s not in taken]
    bulk.sort(key=lambda s: (-pos[s][1], pos[s][0]))  # row-major from top
    return order + bulk


def build_kagome(triangles_per_edge: int, lambda1: float, lambda2: float) -> CouplingMatrix:
    """Breathing-Kagome flake: up-triangle bonds lambda1, down lambda2.

    The flake has ``3 T (T+1) / 2`` sites for T upward triangles per edge
    (T=5 gives 45).  lambda1 <= 0 and lambda2 > 0; the higher-order
    topological phase with three corner modes occupies lambda1/lambda2 > -1.
    """
    if triangles_per_edge < 2:
        raise LatticeError("Kagome flake needs triangles_per_edge >= 2")
    if not (lambda2 > 0):
        raise LatticeError("Kagome requires lambda2 > 0")
    if lambda1 > 0:
        raise LatticeError("Kagome requires lambda1 <= 0")
    _, up, down = _kagome_sites(triangles_per_edge)
    order = _kagome_ordering(triangles_per_edge)
    idx = {s: i for i, s in enumerate(order)}
    n = len(order)
    m = np.zeros((n, n))
    for a, b in up:
        m[idx[a], idx[b]] = m[idx[b], idx[a]] = lambda1
    for a, b in down:
        m[idx[a], idx[b]] = m[idx[b], idx[a]] = lambda2
    labels = tuple("{}({},{})".format(*s) for s in order)
    return CouplingMatrix(m, labels)


def build_custom(n_sites: int, bonds: Sequence[tuple[int, int, float]]) -> CouplingMatrix:
    """Arbitrary lattice from a sparse bond list (1-based site pairs)."""
    m = np.zeros((n_sites, n_sites))
    seen = set()
    for j, jp, s in bonds:
        if j == jp:
            raise LatticeError(f"self-bond on site {j}")
        key = (min(j, jp), max(j, jp))
        if key in seen:
            raise LatticeError(f"duplicate bond {key}")
        seen.add(key)
        if not (1 <= j <= n_sites and 1 <= jp <= n_sites):
            raise LatticeError(f"bond {key} outside 1..{n_sites}")
        m[j - 1, jp - 1] = m[jp - 1, j - 1] = s
    return CouplingMatrix(m)


def apply_disorder(matrix: CouplingMatrix, spec: DisorderSpec) -> CouplingMatrix:
    """Perturb every nonzero bond by one independent U(-r, r) draw.

    The same draw enters (j, jp) and (jp, j), preserving symmetry; zero
    bonds stay exactly zero so the lattice connectivity is respected.
    Bonds are visited in canonical (row, col) upper-triangle order, which
    makes a given seed bit-reproducible.
    """
    m = np.array(matrix.entries)
    iu, ju = np.nonzero(np.triu(m, k=1))
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    draws = rng.uniform(-spec.strength, spec.strength, size=iu.size)
    m[iu, ju] += draws
    m[ju, iu] = m[iu, ju]
    return CouplingMatrix(m, matrix.site_labels)


def eigendecompose(matrix: CouplingMatrix, zero_tol: Optional[float] = None) -> EigenDecomposition:
    """Ascending eigensystem with deterministic degenerate handling.

    Eigenvectors inside a near-degenerate cluster (gap < 1e-6 of the
    spectral span) are an arbitrary rotation of each other, so the basis is
    fixed by peak pivoting: repeatedly project out the site with the
    largest remaining subspace weight.  This localizes e.g. the Kagome
    corner triplet onto individual corners.  Vectors are then ordered by
    the site index of their largest weight and sign-fixed; the paper never
    disambiguates degenerate modes, so the tie-break is a repo convention.
    """
    m = matrix.entries if isinstance(matrix, CouplingMatrix) else np.asarray(matrix, dtype=float)
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > 1e-10 * max(1.0, np.max(np.abs(m))):
        raise LatticeError("matrix asymmetry exceeds 1e-10")
    vals, vecs = np.linalg.eigh(m)
    span = max(np.max(np.abs(vals)), 1.0) if vals.size else 1.0
    i = 0
    n = vals.size
    while i < n:
        j = i + 1
        while j < n and vals[j] - vals[i] < 1e-6 * span:
            j += 1
        if j - i > 1:
            vecs[:, i:j] = _localized_basis(vecs[:, i:j])
        i = j
    lead = np.argmax(np.abs(vecs), axis=0)
    sign = np.sign(vecs[lead, np.arange(n)])
    sign[sign == 0] = 1.0
    vecs = vecs * sign
    if zero_tol is None:
        scale = np.max(np.abs(m)) or 1.0
        zero_tol = SSH_ZERO_TOL_SCALE * scale
    zero_idx = tuple(int(i) for i in np.nonzero(np.abs(vals) < zero_tol)[0])
    vals = vals.copy()
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return EigenDecomposition(vals, vecs, zero_idx)


def _localized_basis(block: np.ndarray) -> np.ndarray:
    """Site-localized orthonormal basis of a (near-)degenerate subspace.

    Greedy pivoting on the subspace projector: take the site carrying the
    largest remaining diagonal weight, use its projected unit vector as the
    next basis vector, deflate, repeat.  Deterministic and orthonormal.
    """
    q, k = block.shape
    proj = block @ block.T
    out = np.empty_like(block)
    for m in range(k):
        pivot = int(np.argmax(np.diag(proj)))
        v = proj[:, pivot]
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            # subspace exhausted numerically; keep the original remainder
            out[:, m:] = block[:, m:]
            break
        v = v / norm
        out[:, m] = v
        proj -= np.outer(v, v)
    # re-orthonormalize against accumulated roundoff, order by peak site
    qmat, _ = np.linalg.qr(out)
    order = np.argsort(np.argmax(np.abs(qmat), axis=0), kind="stable")
    return qmat[:, order]


def count_zero_modes(decomposition: EigenDecomposition, tol: float) -> int:
    """Number of eigenvalues with magnitude below tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return int(np.sum(np.abs(decomposition.eigenvalues) < tol))


def ssh_default_zero_tol(lambda0: float) -> float:
    return SSH_ZERO_TOL_SCALE * abs(lambda0)


def kagome_default_zero_tol(lambda2: float) -> float:
    return KAGOME_ZERO_TOL_SCALE * abs(lambda2)
