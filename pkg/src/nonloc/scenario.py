"""Config-driven scenarios: parse, validate, run, and write diagnostics.

A scenario is one flat YAML file.  Validation reports every problem it can
find, not just the first, and unknown keys are hard errors.  Runs are
deterministic: the same config file produces a byte-identical summary.json.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, _kernels
from .conservation import continuity_report, corrected_currents
from .dynamics import HamiltonianSpec, Propagator, PropagatorConfig
from .errors import ConfigError, NonlocError
from .fieldlab import (
    ComplexField,
    Grid,
    RealField,
    divergence,
    integrate,
    l2_norm,
    read_field,
    write_field,
)
from .ncalgebra import ETA_BOUND_KG2M2S2, HBAR_SI, NCParams, THETA_BOUND_M2, validate_nc_params
from .potentials import (
    LocalPotentialSpec,
    NonlocalKernelSpec,
    _check_beta_resolvable,
)

logger = logging.getLogger("nonloc")

_GRID_KEYS = {"dim", "points", "extent", "boundary"}
_UNITS_KEYS = {"hbar", "mass"}
_LOCAL_KEYS = {"kind", "h", "omega", "depth", "width", "W0", "region"}
_NONLOCAL_KEYS = {"kind", "V0", "beta"}
_NC_KEYS = {"theta", "eta", "theta_z", "eta_z", "preset"}
_DYNAMICS_KEYS = {"mode", "dt", "steps", "scheme", "nonlocal_path", "solver_tol", "max_iter"}
_INITIAL_KEYS = {"kind", "center", "width", "momentum", "m", "path"}
_OUTPUT_KEYS = {"sample_every", "dump_fields", "out_dir"}
_TOP_KEYS = {"grid", "units", "local", "nonlocal", "nc", "dynamics", "initial_state", "output"}


@dataclass(frozen=True)
class InitialStateSpec:
    kind: str
    center: tuple[float, ...] = ()
    width: float = 1.0
    momentum: tuple[float, ...] = ()
    lz: int = 0
    path: str = ""


@dataclass(frozen=True)
class OutputSpec:
    sample_every: int = 1
    dump_fields: bool = False
    out_dir: str = ""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    grid: Grid
    hbar: float
    mass: float
    local: LocalPotentialSpec
    nonlocal_kernel: NonlocalKernelSpec | None
    nc: NCParams
    propagation: PropagatorConfig
    steps: int
    nonlocal_path: str
    initial: InitialStateSpec
    output: OutputSpec
    raw: dict = field(repr=False, default_factory=dict)

    def hamiltonian(self) -> HamiltonianSpec:
        return HamiltonianSpec(
            mass=self.mass,
            hbar=self.hbar,
            local=self.local,
            nonlocal_kernel=self.nonlocal_kernel,
            nc=self.nc,
            nonlocal_path=self.nonlocal_path,
        )


class _SkipSection(Exception):
    """Internal: section absent, its detailed validation is skipped."""


class _Collector:
    """Accumulates validation errors so a config is diagnosed in one pass."""

    def __init__(self):
        self.errors: list[str] = []

    def add(self, msg: str):
        self.errors.append(msg)

    def unknown_keys(self, section: str, data: dict, allowed: set[str]):
        for key in sorted(set(data) - allowed):
            self.add(f"{section}: unknown key {key!r}")

    def raise_if_any(self, path):
        if self.errors:
            listing = "\n  - ".join(self.errors)
            raise ConfigError(f"invalid scenario config {path}:\n  - {listing}")


def _vector(value, dim: int, default: float = 0.0) -> tuple[float, ...]:
    if value is None:
        return tuple(default for _ in range(dim))
    if np.isscalar(value):
        return tuple(float(value) for _ in range(dim))
    out = tuple(float(v) for v in value)
    if len(out) != dim:
        raise ValueError(f"expected {dim} components, got {len(out)}")
    return out


def parse_config(path) -> ScenarioConfig:
    """Load and fully validate a scenario file; raises ConfigError listing
    every detected problem."""
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config syntax error in {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping of sections")

    errs = _Collector()
    errs.unknown_keys("top level", data, _TOP_KEYS)
    for section in ("grid", "dynamics", "initial_state"):
        if section not in data:
            errs.add(f"missing required section {section!r}")

    # --- grid ---
    gsec = data.get("grid") or {}
    errs.unknown_keys("grid", gsec, _GRID_KEYS)
    grid = None
    if "grid" in data:
        try:
            dim = int(gsec.get("dim", 1))
            points = gsec.get("points")
            extent = gsec.get("extent")
            if points is None or extent is None:
                raise ValueError("grid needs 'points' and 'extent'")
            pts = tuple(int(p) for p in (points if not np.isscalar(points) else [points] * dim))
            ext = tuple(float(L) for L in (extent if not np.isscalar(extent) else [extent] * dim))
            if len(pts) != dim or len(ext) != dim:
                raise ValueError(f"points/extent must have dim={dim} entries")
            grid = Grid(points=pts, extent=ext, boundary=gsec.get("boundary", "periodic"))
        except (ValueError, TypeError, NonlocError) as exc:
            errs.add(f"grid: {exc}")

    # --- units ---
    usec = data.get("units") or {}
    errs.unknown_keys("units", usec, _UNITS_KEYS)
    hbar_given = "hbar" in usec
    hbar = float(usec.get("hbar", 1.0))
    mass = float(usec.get("mass", 1.0))
    if hbar <= 0:
        errs.add("units: hbar must be positive")
    if mass <= 0:
        errs.add("units: mass must be positive")

    # --- nc ---
    ncsec = data.get("nc") or {}
    errs.unknown_keys("nc", ncsec, _NC_KEYS)
    nc = None
    try:
        if "preset" in ncsec:
            if set(ncsec) - {"preset"}:
                raise ValueError("nc.preset cannot be combined with explicit theta/eta")
            if ncsec["preset"] != "paper-bounds":
                raise ValueError(f"unknown nc preset {ncsec['preset']!r}")
            if not hbar_given:
                hbar = HBAR_SI
            theta = (0.0, 0.0, THETA_BOUND_M2)
            eta = (0.0, 0.0, ETA_BOUND_KG2M2S2)
        else:
            if ("theta" in ncsec or "eta" in ncsec) and ("theta_z" in ncsec or "eta_z" in ncsec):
                raise ValueError("give either nc.theta/nc.eta vectors or nc.theta_z/nc.eta_z")
            if "theta" in ncsec or "eta" in ncsec:
                theta = _vector(ncsec.get("theta"), 3)
                eta = _vector(ncsec.get("eta"), 3)
            else:
                theta = (0.0, 0.0, float(ncsec.get("theta_z", 0.0)))
                eta = (0.0, 0.0, float(ncsec.get("eta_z", 0.0)))
        if grid is not None and hbar > 0:
            nc = validate_nc_params(theta, eta, hbar, dim=grid.dim)
    except (ValueError, TypeError, NonlocError) as exc:
        errs.add(f"nc: {exc}")

    # --- local potential ---
    lsec = data.get("local") or {"kind": "none"}
    errs.unknown_keys("local", lsec, _LOCAL_KEYS)
    local = None
    try:
        region = lsec.get("region")
        local = LocalPotentialSpec(
            kind=lsec.get("kind", "none"),
            h=float(lsec.get("h", 0.0)),
            omega=float(lsec.get("omega", 0.0)),
            depth=float(lsec.get("depth", 0.0)),
            width=float(lsec.get("width", 0.0)),
            W0=float(lsec.get("W0", 0.0)),
            region=None if region is None else (float(region[0]), float(region[1])),
        )
    except (ValueError, TypeError, NonlocError) as exc:
        errs.add(f"local: {exc}")

    # --- nonlocal kernel ---
    nlsec = data.get("nonlocal") or {"kind": "none"}
    errs.unknown_keys("nonlocal", nlsec, _NONLOCAL_KEYS)
    kernel = None
    kind = nlsec.get("kind", "none")
    if kind == "frahn-lemmer":
        try:
            kernel = NonlocalKernelSpec.frahn_lemmer(
                float(nlsec.get("V0", 0.0)), float(nlsec.get("beta", 0.0))
            )
            if grid is not None:
                _check_beta_resolvable(kernel.beta, grid)
        except (ValueError, TypeError, NonlocError) as exc:
            errs.add(f"nonlocal: {exc}")
    elif kind != "none":
        errs.add(f"nonlocal: unknown kind {kind!r} (config supports none / frahn-lemmer)")

    # --- dynamics ---
    dsec = data.get("dynamics") or {}
    errs.unknown_keys("dynamics", dsec, _DYNAMICS_KEYS)
    propagation = None
    steps = 0
    nonlocal_path = dsec.get("nonlocal_path", "quadrature")
    if "dynamics" in data:
        try:
            steps = int(dsec.get("steps", 0))
            if steps < 1:
                raise ValueError("dynamics.steps must be >= 1")
            propagation = PropagatorConfig(
                dt=float(dsec.get("dt", 0.0)),
                mode=dsec.get("mode", "real-time"),
                scheme=dsec.get("scheme", "crank-nicolson"),
                solver_tol=float(dsec.get("solver_tol", 1e-12)),
                max_iter=int(dsec.get("max_iter", 200)),
            )
        except (ValueError, TypeError, NonlocError) as exc:
            errs.add(f"dynamics: {exc}")

    # --- initial state ---
    isec = data.get("initial_state") or {}
    errs.unknown_keys("initial_state", isec, _INITIAL_KEYS)
    initial = None
    try:
        if "initial_state" not in data:
            raise _SkipSection
        ikind = isec.get("kind")
        dim = grid.dim if grid is not None else 1
        if ikind == "gaussian-packet":
            initial = InitialStateSpec(
                kind=ikind,
                center=_vector(isec.get("center"), dim),
                width=float(isec.get("width", 1.0)),
                momentum=_vector(isec.get("momentum"), dim),
            )
            if initial.width <= 0:
                raise ValueError("gaussian-packet width must be positive")
        elif ikind == "lz-eigenstate":
            if dim != 2:
                raise ValueError("lz-eigenstate initial states need a 2D grid")
            initial = InitialStateSpec(kind=ikind, width=float(isec.get("width", 1.0)),
                                       lz=int(isec.get("m", 0)))
        elif ikind == "file":
            if not isec.get("path"):
                raise ValueError("file initial state needs 'path'")
            initial = InitialStateSpec(kind=ikind, path=str(isec["path"]))
        else:
            raise ValueError(f"unknown initial_state kind {ikind!r}")
    except _SkipSection:
        pass
    except (ValueError, TypeError, NonlocError) as exc:
        errs.add(f"initial_state: {exc}")

    # --- output ---
    osec = data.get("output") or {}
    errs.unknown_keys("output", osec, _OUTPUT_KEYS)
    output = OutputSpec(
        sample_every=int(osec.get("sample_every", 1)),
        dump_fields=bool(osec.get("dump_fields", False)),
        out_dir=str(osec.get("out_dir", "")),
    )
    if output.sample_every < 1:
        errs.add("output: sample_every must be >= 1")

    # --- cross-section consistency ---
    if nonlocal_path not in ("quadrature", "momentum", "fl-approx"):
        errs.add(f"dynamics: unknown nonlocal_path {nonlocal_path!r}")
    elif kernel is None and nonlocal_path != "quadrature":
        errs.add(f"dynamics: nonlocal_path={nonlocal_path!r} needs a frahn-lemmer kernel")

    errs.raise_if_any(path)

    cfg = ScenarioConfig(
        name=path.stem,
        grid=grid,
        hbar=hbar,
        mass=mass,
        local=local,
        nonlocal_kernel=kernel,
        nc=nc,
        propagation=propagation,
        steps=steps,
        nonlocal_path=nonlocal_path,
        initial=initial,
        output=output,
        raw=data,
    )
    # Constructing the Hamiltonian runs the remaining compatibility checks.
    try:
        cfg.hamiltonian()
    except NonlocError as exc:
        raise ConfigError(f"invalid scenario config {path}:\n  - {exc}")
    return cfg


def build_initial_state(cfg: ScenarioConfig) -> ComplexField:
    grid = cfg.grid
    spec = cfg.initial
    coords = grid.coordinate_arrays()
    if spec.kind == "gaussian-packet":
        envelope = np.zeros(grid.shape)
        phase = np.zeros(grid.shape)
        for x, c, k in zip(coords, spec.center, spec.momentum):
            envelope = envelope + (x - c) ** 2
            phase = phase + k * x
        values = np.exp(-envelope / (2.0 * spec.width ** 2) + 1j * phase)
        return ComplexField(grid, values, _copy=False).normalize()
    if spec.kind == "lz-eigenstate":
        x, y = coords
        r2 = x ** 2 + y ** 2
        radial = np.exp(-r2 / (2.0 * spec.width ** 2)) * np.ones(grid.shape)
        zpow = (x + 1j * y if spec.lz >= 0 else x - 1j * y) ** abs(spec.lz)
        return ComplexField(grid, zpow * radial, _copy=False).normalize()
    if spec.kind == "file":
        loaded = read_field(spec.path)
        if not isinstance(loaded, ComplexField):
            raise ConfigError(f"initial-state file {spec.path} holds a real field")
        if loaded.grid != grid:
            raise ConfigError("initial-state file grid does not match the scenario grid")
        return loaded.normalize()
    raise ConfigError(f"unknown initial state kind {spec.kind!r}")


def check_scenario(cfg: ScenarioConfig) -> dict:
    """Parameter-consistency report without running any dynamics."""
    report = {
        "scenario": cfg.name,
        "grid": {"dim": cfg.grid.dim, "points": list(cfg.grid.points),
                 "extent": list(cfg.grid.extent), "boundary": cfg.grid.boundary,
                 "spacing": list(cfg.grid.spacing)},
        "xi": cfg.nc.xi,
        "hbar_eff": cfg.nc.hbar_eff,
        "commutative": cfg.nc.is_commutative,
    }
    if cfg.nonlocal_kernel is not None and cfg.nonlocal_kernel.kind == "frahn-lemmer":
        report["beta_over_spacing"] = cfg.nonlocal_kernel.beta / max(cfg.grid.spacing)
        report["beta_over_extent"] = cfg.nonlocal_kernel.beta / min(cfg.grid.extent)
    return report


def _sample_record(step: int, t: float, norm: float, rep, dec) -> dict:
    balance = l2_norm(RealField(
        rep.rho.grid,
        divergence(dec.J_tot).values + rep.drho_dt.values,
        _copy=False,
    ))
    return {
        "step": step,
        "t": t,
        "norm": norm,
        "residual_l2": rep.residual_l2,
        "residual_max": rep.residual_max,
        "div_Jtot_l2": dec.div_jtot_l2,
        "jtot_balance_l2": balance,
        "sink_integrals": rep.sink_integrals,
        "sink_l2": rep.sink_l2,
    }


def run_scenario(cfg: ScenarioConfig, out_dir=None, dump_fields: bool | None = None,
                 sample_every: int | None = None) -> dict:
    """Evolve the scenario and write summary.json / run_meta.json (+ optional
    field CSVs).  Returns the summary dictionary."""
    t_start = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else Path(cfg.output.out_dir or f"out/{cfg.name}")
    out.mkdir(parents=True, exist_ok=True)
    dump = cfg.output.dump_fields if dump_fields is None else dump_fields
    every = cfg.output.sample_every if sample_every is None else sample_every

    H = cfg.hamiltonian()
    psi0 = build_initial_state(cfg)
    prop = Propagator(H, cfg.propagation, psi0)
    mode = "commutative" if H.nc.is_commutative else "nc"
    dt = cfg.propagation.dt

    samples = []
    last_dec = None
    fields_dir = out / "fields"
    if dump:
        fields_dir.mkdir(exist_ok=True)

    for step_index in range(1, cfg.steps + 1):
        sampled = step_index % every == 0 or step_index == cfg.steps
        prev = prop.psi if sampled else None
        new = prop.step()
        if not sampled:
            continue
        rep = continuity_report(prev, new, dt, H)
        dec = corrected_currents(rep, mode=mode)
        last_dec = dec
        norm = integrate(RealField(cfg.grid, np.abs(new.values) ** 2, _copy=False))
        samples.append(_sample_record(step_index, prop.t, norm, rep, dec))
        if dump:
            write_field(new, fields_dir / f"step{step_index:06d}_psi.csv")
            write_field(rep.rho, fields_dir / f"step{step_index:06d}_rho.csv")
            write_field(rep.residual, fields_dir / f"step{step_index:06d}_residual.csv")

    summary = {
        "scenario": cfg.name,
        "mode": mode,
        "steps": cfg.steps,
        "dt": dt,
        "samples": samples,
        "final": {
            "t": prop.t,
            "norm": samples[-1]["norm"],
            "div_Jtot_l2": last_dec.div_jtot_l2,
            "jtot_balance_l2": samples[-1]["jtot_balance_l2"],
            "j_l2": l2_norm(last_dec.J),
            "j_nl_l2": l2_norm(last_dec.J_NL),
            "j_l_l2": l2_norm(last_dec.J_L),
            "kappa_l2": l2_norm(last_dec.kappa),
            "j_tot_l2": l2_norm(last_dec.J_tot),
            "irreducible_sinks": list(last_dec.irreducible),
        },
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")

    import scipy
    meta = {
        "scenario": cfg.name,
        "config": cfg.raw,
        "versions": {
            "nonloc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": _python_version(),
        },
        "kernel_backend": _kernels.backend_name(),
        "wall_time_s": time.perf_counter() - t_start,
    }
    with open(out / "run_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")

    logger.info("scenario %s: %d steps, %d samples, wrote %s",
                cfg.name, cfg.steps, len(samples), out / "summary.json")
    return summary


def _python_version() -> str:
    import sys
    return sys.version.split()[0]
