"""Run-configuration parsing and validation.

Configurations are TOML files restricted to sections of scalar keys.
Every key has a documented default; unknown sections or keys, wrong
types, and out-of-range values are rejected with the offending key
named.  The configuration hash (sha256 of the canonical text) is stamped
into every snapshot a run writes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                       # python < 3.11
    import tomli as tomllib

from .coefficients import (AleMapCoefficients, FileCoefficients,
                           FluxPsiCoefficients, IdentityCoefficients,
                           standard_eta)
from .errors import ConfigError
from .grid import Grid

DEFAULTS = {
    "threads": 0,
    "grid": {"nx": 32, "ny": 32, "nz": 33},
    "coefficients": {"kind": "identity", "amplitude": 0.05, "frequency": 1,
                     "rate": 1.0, "volume_preserving": True, "path": ""},
    "initial": {"kind": "zero", "amplitude": 0.1, "seed": 0, "path": ""},
    "time": {"tfinal": 1.0, "cfl": 0.5, "dt_min": 1e-8, "dt_max": 0.05,
             "fixed_dt": 0.0},
    "picard": {"tol": 1e-8, "max_iter": 12},
    "elliptic": {"tol": 1e-10, "max_iter": 5000, "compat_tol": 1e-8},
    "tolerances": {"bc_tol": 1e-6, "div_tol": 1e-5, "projection_tol": 1e-6,
                   "ic_gate_tol": 1e-5, "compat_check_tol": 1e-8},
    "guards": {"w1inf_ceiling": 100.0, "allow_inhomogeneous_divergence": False},
    "output": {"dir": "out", "every_n_steps": 10},
}

_COEFF_KINDS = ("identity", "ale_map", "flux_psi", "file")
_INITIAL_KINDS = ("zero", "shear", "ale_divfree", "psi", "file")


@dataclass
class RunConfig:
    data: dict
    text: str = ""
    source: str = "<defaults>"
    config_hash: str = field(init=False)

    def __post_init__(self):
        self.config_hash = hashlib.sha256(self.text.encode()).hexdigest()

    def __getitem__(self, section):
        return self.data[section]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash, "config": self.text,
                "source": self.source}

    def build_grid(self) -> Grid:
        g = self.data["grid"]
        return Grid(g["nx"], g["ny"], g["nz"])

    def build_coefficients(self, grid: Grid | None = None):
        if grid is None:
            grid = self.build_grid()
        c = self.data["coefficients"]
        tfinal = self.data["time"]["tfinal"]
        if c["kind"] == "identity":
            return IdentityCoefficients(grid)
        if c["kind"] == "ale_map":
            eta = standard_eta(c["amplitude"], c["frequency"], c["rate"],
                               c["volume_preserving"])
            return AleMapCoefficients(grid, eta,
                                      certify_span=(0.0, max(tfinal, 1.0)))
        if c["kind"] == "flux_psi":
            return FluxPsiCoefficients(grid, c["amplitude"])
        if c["kind"] == "file":
            if not c["path"]:
                raise ConfigError("coefficients.kind = 'file' requires coefficients.path")
            return _coefficients_from_file(grid, c["path"])
        raise ConfigError(f"unknown coefficients.kind '{c['kind']}'")

    def build_initial(self, grid, cs):
        from .fixtures import initial_velocity
        ic = self.data["initial"]
        return initial_velocity(ic["kind"], grid, cs, ic["amplitude"],
                                ic["seed"], ic["path"])

    def simulate_kwargs(self) -> dict:
        t = self.data["time"]
        p = self.data["picard"]
        e = self.data["elliptic"]
        tol = self.data["tolerances"]
        gd = self.data["guards"]
        out = self.data["output"]
        return dict(
            tfinal=t["tfinal"], cfl=t["cfl"], dt_min=t["dt_min"],
            dt_max=t["dt_max"], fixed_dt=t["fixed_dt"],
            picard_tol=p["tol"], max_picard=p["max_iter"],
            elliptic_tol=e["tol"], elliptic_max_iter=e["max_iter"],
            bc_tol=tol["bc_tol"], div_tol=tol["div_tol"],
            ic_gate_tol=tol["ic_gate_tol"],
            compat_check_tol=tol["compat_check_tol"],
            allow_inhomogeneous_divergence=gd["allow_inhomogeneous_divergence"],
            w1inf_ceiling=gd["w1inf_ceiling"],
            every_n_steps=out["every_n_steps"],
        )


def _coefficients_from_file(grid, path):
    """Key-framed coefficients from a directory of snapshots named
    frame_<k> with fields 'a' and 'psi'."""
    from .snapshots import read_snapshot
    base = Path(path)
    frames = sorted(base.glob("frame_*"))
    if len(frames) < 2:
        raise ConfigError(f"{path}: need at least two coefficient frames")
    times, a_frames, psi_frames = [], [], []
    for fdir in frames:
        snap = read_snapshot(fdir)
        if snap.grid != grid:
            raise ConfigError(f"{fdir}: coefficient frame grid mismatch")
        try:
            a_frames.append(snap.fields["a"].data)
            psi_frames.append(snap.fields["psi"].data)
        except KeyError as exc:
            raise ConfigError(f"{fdir}: missing coefficient field {exc}") from exc
        times.append(snap.t)
    return FileCoefficients(grid, times, a_frames, psi_frames)


def _validate(data: dict, source: str):
    merged = {k: (dict(v) if isinstance(v, dict) else v)
              for k, v in DEFAULTS.items()}
    for section, content in data.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(DEFAULTS[section], dict):
            merged[section] = content
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        for key, value in content.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            ref = DEFAULTS[section][key]
            if isinstance(ref, bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"{source}: {section}.{key} must be a boolean")
            elif isinstance(ref, int) and not isinstance(ref, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{source}: {section}.{key} must be a number")
                if isinstance(value, float) and not value.is_integer():
                    raise ConfigError(f"{source}: {section}.{key} must be an integer")
                value = int(value)
            elif isinstance(ref, float):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{source}: {section}.{key} must be a number")
                value = float(value)
            elif isinstance(ref, str):
                if not isinstance(value, str):
                    raise ConfigError(f"{source}: {section}.{key} must be a string")
            merged[section][key] = value
    if not isinstance(merged["threads"], int):
        raise ConfigError(f"{source}: threads must be an integer")

    c = merged["coefficients"]
    if c["kind"] not in _COEFF_KINDS:
        raise ConfigError(
            f"{source}: coefficients.kind must be one of {_COEFF_KINDS}")
    ic = merged["initial"]
    if ic["kind"] not in _INITIAL_KINDS:
        raise ConfigError(
            f"{source}: initial.kind must be one of {_INITIAL_KINDS}")
    t = merged["time"]
    for key in ("tfinal", "cfl"):
        if t[key] <= 0:
            raise ConfigError(f"{source}: time.{key} must be positive")
    if merged["output"]["every_n_steps"] < 0:
        raise ConfigError(f"{source}: output.every_n_steps must be >= 0")
    for key in ("tol",):
        if merged["picard"][key] <= 0 or merged["elliptic"][key] <= 0:
            raise ConfigError(f"{source}: tolerances must be positive")
    return merged


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return RunConfig(_validate(data, source), text=text, source=source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
