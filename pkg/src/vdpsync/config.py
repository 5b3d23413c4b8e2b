"""Strict-schema simulation configuration.

Configs are JSON documents validated against the published schema shipped
with the package (``config_schema.json``); unknown keys are rejected
outright, since a silently ignored typo in a physics parameter is the
dominant failure mode of batch runs.  Parameter-regime issues that are
legal but suspicious (kappa1 >= kappa2, gamma_loss >= kappa1, ...) are
returned as warnings, not errors.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import jsonschema

from .lattice import LatticeSpec
from .meanfield import MeanFieldParams

__all__ = ["ConfigError", "SimulationConfig", "load_config", "validate_dict"]


class ConfigError(ValueError):
    """Malformed or schema-violating configuration."""


def _schema() -> dict:
    text = resources.files("vdpsync").joinpath("config_schema.json").read_text()
    return json.loads(text)


@dataclass
class SimulationConfig:
    """Validated, normalized view of one simulation config document."""

    raw: dict
    lattice: LatticeSpec
    omega0: float
    kappa1: float
    kappa2: float
    gamma_loss: float
    initial: dict
    disorder_strength: float
    t_relax: float
    t_end: float
    dt_out: float
    window: tuple[float, float]
    sweep_control: Optional[str]
    sweep_values: tuple
    n_realizations: int
    rtol: float
    atol: float
    exact: dict
    boundary_sites: tuple
    output_dir: str
    master_seed: int
    warnings: list = field(default_factory=list)
    jobs: int = 1

    def meanfield_params(self) -> MeanFieldParams:
        import warnings as _w
        with _w.catch_warnings():
            _w.simplefilter("ignore")
            return MeanFieldParams(self.omega0, self.kappa1, self.kappa2)

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def lattice_for_control(self, value: float) -> LatticeSpec:
        """Lattice spec with the sweep control substituted."""
        if self.sweep_control == "delta_lambda":
            return LatticeSpec(kind="ssh", n_sites=self.lattice.n_sites,
                               lambda0=self.lattice.lambda0, delta_lambda=value)
        if self.sweep_control == "lambda1":
            return LatticeSpec(kind="kagome",
                               triangles_per_edge=self.lattice.triangles_per_edge,
                               lambda1=value, lambda2=self.lattice.lambda2)
        raise ConfigError(f"control {self.sweep_control!r} does not modify the lattice")


def validate_dict(doc: dict) -> SimulationConfig:
    """Schema-validate a config dict and apply the invariant checks."""
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config schema violation at '{path}': {exc.message}") from exc

    warn: list[str] = []
    lat = doc["lattice"]
    kind = lat["kind"]
    if kind == "ssh":
        for key in ("n_sites", "lambda0", "delta_lambda"):
            if key not in lat:
                raise ConfigError(f"ssh lattice requires '{key}'")
        if lat["n_sites"] % 2 or lat["n_sites"] < 2:
            raise ConfigError("ssh n_sites must be even and >= 2")
    elif kind == "kagome":
        for key in ("triangles_per_edge", "lambda1", "lambda2"):
            if key not in lat:
                raise ConfigError(f"kagome lattice requires '{key}'")
    elif kind == "custom":
        if "bonds" not in lat:
            raise ConfigError("custom lattice requires 'bonds'")
    spec = LatticeSpec.from_dict(lat)
    try:
        spec.build()
    except Exception as exc:
        raise ConfigError(f"lattice spec rejected: {exc}") from exc

    p = doc["params"]
    omega0 = p.get("omega0", 1.0)
    kappa1, kappa2 = p["kappa1"], p["kappa2"]
    gamma_loss = p.get("gamma_loss", 0.0)
    if kappa1 >= kappa2:
        warn.append("kappa1 >= kappa2: amplitude may exceed the weakly "
                    "nonlinear regime")
    if kappa1 > 0.1 * omega0 or kappa2 > 0.1 * omega0:
        warn.append("dissipation above 0.1*omega0 leaves the weak-dissipation regime")
    if gamma_loss >= kappa1 and gamma_loss > 0:
        warn.append("gamma_loss >= kappa1: net linear gain negative, system "
                    "decays to vacuum")

    t = doc["time"]
    t_relax = t.get("t_relax", 0.0)
    t_end, dt_out = t["t_end"], t["dt_out"]
    window = tuple(t.get("window", (t_relax, t_end)))
    if not (0 <= t_relax <= window[0] < window[1] <= t_end):
        raise ConfigError("need 0 <= t_relax <= window[0] < window[1] <= t_end")

    initial = doc.get("initial", {"variant": "random"})
    if initial["variant"] == "eigenstate" and "mode_index" not in initial:
        raise ConfigError("eigenstate initial condition requires mode_index")
    if initial["variant"] == "explicit" and "alpha" not in initial:
        raise ConfigError("explicit initial condition requires alpha")

    sweep = doc.get("sweep", {})
    control = sweep.get("control")
    values = tuple(sweep.get("values", ()))
    n_real = sweep.get("n_realizations", 1)
    if control == "delta_lambda" and kind != "ssh":
        raise ConfigError("delta_lambda sweep requires an ssh lattice")
    if control == "lambda1" and kind != "kagome":
        raise ConfigError("lambda1 sweep requires a kagome lattice")

    solver = doc.get("solver", {})
    exact = dict(doc.get("exact", {}))
    disorder = doc.get("disorder", {})

    if "boundary_sites" in doc:
        boundary = tuple(doc["boundary_sites"])
    elif kind == "ssh":
        boundary = (1, lat["n_sites"])
    elif kind == "kagome":
        boundary = (1, 2, 3)
    else:
        boundary = ()

    return SimulationConfig(
        raw=doc,
        lattice=spec,
        omega0=omega0, kappa1=kappa1, kappa2=kappa2, gamma_loss=gamma_loss,
        initial=initial,
        disorder_strength=disorder.get("strength", 0.0),
        t_relax=t_relax, t_end=t_end, dt_out=dt_out, window=window,
        sweep_control=control, sweep_values=values, n_realizations=n_real,
        rtol=solver.get("rtol", 1e-9), atol=solver.get("atol", 1e-12),
        exact=exact,
        boundary_sites=boundary,
        output_dir=doc["output_dir"],
        master_seed=doc["master_seed"],
        warnings=warn,
    )


def load_config(path) -> SimulationConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return validate_dict(doc)


def dry_run_report(cfg: SimulationConfig) -> dict:
    """Job count and memory estimate without running anything."""
    n_controls = max(1, len(cfg.sweep_values))
    n_jobs = n_controls * max(1, cfg.n_realizations)
    n = cfg.lattice.build().n
    n_samples = int(round((cfg.window[1] - cfg.window[0]) / cfg.dt_out)) + 1
    traj_bytes = n_samples * n * 16
    cov_bytes = (2 * n) * (2 * n) * 8 * max(1, cfg.n_realizations)
    return {
        "jobs": n_jobs,
        "sites": n,
        "window_samples": n_samples,
        "trajectory_bytes_per_realization": traj_bytes,
        "covariance_state_bytes": cov_bytes,
        "estimated_peak_memory_bytes": traj_bytes * max(1, cfg.n_realizations) + cov_bytes,
        "warnings": list(cfg.warnings),
    }
