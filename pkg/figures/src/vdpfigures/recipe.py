"""Figure recipes over the runner's artifact contracts.

Supported kinds and their input schemas:

  spectrum-map      long CSV: control, omega, amplitude
  sync-matrix       dense CSV matrix (NaN diagonal) or labeled header form
  amplitude-raster  CSV: t, A_1 ... A_N
  wigner            CSV: x, p, W
  sc-curves         CSV: lambda, sc_exact, sc_effective
  phase-marginal    CSV: dphi, P

Rendering is read-only over the artifacts and deterministic: identical
inputs produce byte-identical image files.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("spectrum-map", "sync-matrix", "amplitude-raster", "wigner",
         "sc-curves", "phase-marginal")

# stable PNG metadata so identical inputs give identical bytes
_META = {"Software": "vdpfigures"}


class ArtifactError(ValueError):
    """Missing column, schema mismatch, or empty artifact."""


@dataclass
class FigureRecipe:
    artifact: str
    kind: str
    output: str
    x_range: Optional[tuple] = None
    y_range: Optional[tuple] = None
    color_scale: Optional[tuple] = None
    title: Optional[str] = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArtifactError(f"unknown figure kind {self.kind!r}; "
                                f"expected one of {KINDS}")


def _read_csv(path) -> tuple[list[str], np.ndarray]:
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ArtifactError(f"{path}: empty artifact")
    header = rows[0]
    body = rows[1:]
    if not body:
        raise ArtifactError(f"{path}: artifact has a header but no data")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ArtifactError(f"{path}: non-numeric data ({exc})") from exc
    return header, data


def _columns(header, data, names, path):
    cols = {}
    for name in names:
        if name not in header:
            raise ArtifactError(f"{path}: missing column {name!r} "
                                f"(found {header})")
        cols[name] = data[:, header.index(name)]
    return cols


def _new_axes(recipe):
    fig, ax = plt.subplots(figsize=recipe.options.get("figsize", (5.2, 4.0)),
                           dpi=recipe.options.get("dpi", 130))
    if recipe.title:
        ax.set_title(recipe.title)
    return fig, ax


def _finish(fig, ax, recipe):
    if recipe.x_range:
        ax.set_xlim(*recipe.x_range)
    if recipe.y_range:
        ax.set_ylim(*recipe.y_range)
    fig.tight_layout()
    out = Path(recipe.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata=_META)
    plt.close(fig)
    return out


def _render_spectrum_map(recipe):
    header, data = _read_csv(recipe.artifact)
    cols = _columns(header, data, ["control", "omega", "amplitude"], recipe.artifact)
    controls = np.unique(cols["control"])
    omegas = np.unique(cols["omega"])
    if controls.size < 1 or omegas.size < 2:
        raise ArtifactError(f"{recipe.artifact}: degenerate sweep axes")
    grid = np.full((omegas.size, controls.size), np.nan)
    ci = np.searchsorted(controls, cols["control"])
    oi = np.searchsorted(omegas, cols["omega"])
    grid[oi, ci] = cols["amplitude"]
    if np.any(np.isnan(grid)):
        raise ArtifactError(f"{recipe.artifact}: ragged sweep grid")
    fig, ax = _new_axes(recipe)
    floor = max(np.max(grid) * 1e-4, np.min(grid[grid > 0], initial=1e-12))
    vmin, vmax = recipe.color_scale or (floor, np.max(grid))
    from matplotlib.colors import LogNorm
    if controls.size == 1:
        ax.plot(omegas, grid[:, 0], color="#c2185b", lw=0.8)
        ax.set_xlabel("frequency (units of intrinsic)")
        ax.set_ylabel("amplitude")
        ax.set_yscale("log")
    else:
        mesh = ax.pcolormesh(controls, omegas, np.maximum(grid, floor),
                             norm=LogNorm(vmin=vmin, vmax=vmax),
                             cmap=recipe.options.get("cmap", "magma"),
                             shading="nearest")
        fig.colorbar(mesh, ax=ax, label="spectral amplitude")
        ax.set_xlabel(recipe.options.get("control_label", "control parameter"))
        ax.set_ylabel("frequency (units of intrinsic)")
    return _finish(fig, ax, recipe)


def _render_sync_matrix(recipe):
    header, data = _read_csv(recipe.artifact)
    try:
        # labeled form: header row of site labels
        [float(h) for h in header]
        values = np.vstack([np.array(header, float), data])
    except ValueError:
        values = data
    if values.shape[0] != values.shape[1]:
        raise ArtifactError(f"{recipe.artifact}: sync matrix must be square, "
                            f"got {values.shape}")
    fig, ax = _new_axes(recipe)
    masked = np.ma.masked_invalid(values)
    vmin, vmax = recipe.color_scale or (np.nanmin(values), np.nanmax(values))
    n = values.shape[0]
    mesh = ax.pcolormesh(np.arange(1, n + 2) - 0.5, np.arange(1, n + 2) - 0.5,
                         masked, cmap=recipe.options.get("cmap", "viridis"),
                         vmin=vmin, vmax=vmax, shading="flat")
    fig.colorbar(mesh, ax=ax, label="time-averaged synchronization")
    ax.set_xlabel("site j")
    ax.set_ylabel("site j'")
    ax.set_aspect("equal")
    return _finish(fig, ax, recipe)


def _render_amplitude_raster(recipe):
    header, data = _read_csv(recipe.artifact)
    if header[0] != "t" or len(header) < 2:
        raise ArtifactError(f"{recipe.artifact}: expected columns t, A_1..A_N")
    t = data[:, 0]
    amps = data[:, 1:]
    fig, ax = _new_axes(recipe)
    lim = np.max(np.abs(amps))
    mesh = ax.pcolormesh(t, np.arange(1, amps.shape[1] + 1), amps.T,
                         cmap=recipe.options.get("cmap", "RdBu_r"),
                         vmin=-lim, vmax=lim, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="displacement")
    ax.set_xlabel("time")
    ax.set_ylabel("site")
    return _finish(fig, ax, recipe)


def _render_wigner(recipe):
    header, data = _read_csv(recipe.artifact)
    cols = _columns(header, data, ["x", "p", "W"], recipe.artifact)
    x = np.unique(cols["x"])
    p = np.unique(cols["p"])
    grid = np.full((x.size, p.size), np.nan)
    xi = np.searchsorted(x, cols["x"])
    pi = np.searchsorted(p, cols["p"])
    grid[xi, pi] = cols["W"]
    if np.any(np.isnan(grid)):
        raise ArtifactError(f"{recipe.artifact}: ragged Wigner grid")
    fig, ax = _new_axes(recipe)
    lim = np.max(np.abs(grid))
    mesh = ax.pcolormesh(x, p, grid.T, cmap="RdBu_r", vmin=-lim, vmax=lim,
                         shading="nearest")
    fig.colorbar(mesh, ax=ax, label="W(x, p)")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_aspect("equal")
    return _finish(fig, ax, recipe)


def _render_sc_curves(recipe):
    header, data = _read_csv(recipe.artifact)
    cols = _columns(header, data, ["lambda", "sc_exact", "sc_effective"],
                    recipe.artifact)
    fig, ax = _new_axes(recipe)
    ax.plot(cols["lambda"], cols["sc_exact"], "o-", color="#1565c0", label="exact")
    ax.plot(cols["lambda"], cols["sc_effective"], "s-", color="#c2185b",
            label="effective")
    ax.set_xlabel("coupling strength")
    ax.set_ylabel("time-averaged synchronization")
    ax.legend()
    return _finish(fig, ax, recipe)


def _render_phase_marginal(recipe):
    header, data = _read_csv(recipe.artifact)
    cols = _columns(header, data, ["dphi", "P"], recipe.artifact)
    fig, ax = _new_axes(recipe)
    ax.plot(cols["dphi"], cols["P"], color="#c2185b")
    ax.set_xlabel("phase difference")
    ax.set_ylabel("P")
    return _finish(fig, ax, recipe)


_RENDERERS = {
    "spectrum-map": _render_spectrum_map,
    "sync-matrix": _render_sync_matrix,
    "amplitude-raster": _render_amplitude_raster,
    "wigner": _render_wigner,
    "sc-curves": _render_sc_curves,
    "phase-marginal": _render_phase_marginal,
}


def render(recipe: FigureRecipe) -> Path:
    """Render one figure; returns the written image path."""
    if not Path(recipe.artifact).exists():
        raise ArtifactError(f"artifact not found: {recipe.artifact}")
    return _RENDERERS[recipe.kind](recipe)
