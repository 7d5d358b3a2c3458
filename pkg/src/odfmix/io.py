"""File formats: ingestion, trace persistence, grids, config, manifests.

Conventions are deliberately plain: CSV for orientation data and grids,
newline-delimited JSON for traces, JSON for configuration and run
manifests.  Euler angles in data files are Bunge Z-X-Z radians; exported
grid coordinates are degrees.  All density exports are normalized against
the uniform density so 1.0 means "as frequent as in an untextured
material".
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .bingham import TWO_PI_SQ, BinghamComponent, complete_basis
from .mixture import Dataset, MixtureState
from .quat import SymmetryGroup, euler_to_quat
from .rjmcmc import ChainTrace

__all__ = [
    "IngestError",
    "ConfigError",
    "GridSpec",
    "ingest",
    "export_quaternion_csv",
    "euler_grid",
    "export_grid",
    "save_trace",
    "load_trace",
    "RunConfig",
    "load_config",
    "write_manifest",
]

TRACE_FORMAT = "odfmix-trace"
TRACE_VERSION = 1
COMPLETION_TAG = "right-quaternion-frame-v1"


class IngestError(ValueError):
    """Malformed or non-physical orientation data."""


class ConfigError(ValueError):
    """Invalid run configuration; carries the full problem list."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"- {p}" for p in self.problems))


# ---------------------------------------------------------------------------
# data ingestion
# ---------------------------------------------------------------------------


def _parse_rows(path, n_cols: int) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.replace(",", " ").split()
            if len(parts) != n_cols:
                raise IngestError(f"{path}:{lineno}: expected {n_cols} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise IngestError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise IngestError(f"{path}: no data rows")
    return np.array(rows)


def ingest(path, fmt: str = "quaternion-csv", qc=None, qs=None) -> Dataset:
    """Read orientations from disk.

    ``quaternion-csv`` rows are (w, x, y, z); rows within 1e-3 of unit
    length are normalized, anything further off is rejected with its line
    number.  ``euler-csv`` rows are Bunge Z-X-Z angles in radians.
    """
    qc = qc or quat.symmetry_group("identity")
    qs = qs or quat.symmetry_group("identity")
    if fmt == "quaternion-csv":
        rows = _parse_rows(path, 4)
        norms = np.linalg.norm(rows, axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > 1e-3)[0]
        if bad.size:
            raise IngestError(
                f"{path}: row {bad[0] + 1} has norm {norms[bad[0]]:.6f}, beyond the 1e-3 tolerance"
            )
        quats = rows / norms[:, None]
    elif fmt == "euler-csv":
        rows = _parse_rows(path, 3)
        quats = euler_to_quat(rows)
    else:
        raise IngestError(f"unknown format '{fmt}'; use quaternion-csv or euler-csv")
    digest = hashlib.sha256(np.ascontiguousarray(quats).tobytes()).hexdigest()
    provenance = {"path": str(path), "format": fmt, "n": int(quats.shape[0]), "sha256": digest}
    return Dataset(quats, qc, qs, provenance=provenance)


def export_quaternion_csv(path, quats) -> None:
    quats = np.atleast_2d(np.asarray(quats, dtype=float))
    with open(path, "w") as fh:
        fh.write("# w,x,y,z\n")
        for row in quats:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Export surface: full Euler grid or pole figures.

    ``resolution`` is in degrees and must divide 360 evenly.  Pole
    directions are crystal-frame unit 3-vectors, pole-figure exports only.
    """

    kind: str = "euler-grid"
    resolution: float = 5.0
    pole_directions: tuple = ((1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (1.0, 1.0, 1.0))

    def __post_init__(self):
        if self.kind not in ("euler-grid", "pole-figure"):
            raise ValueError("kind must be 'euler-grid' or 'pole-figure'")
        if self.resolution <= 0 or abs(360.0 / self.resolution - round(360.0 / self.resolution)) > 1e-9:
            raise ValueError("resolution must divide 360 evenly")
        dirs = []
        for d in self.pole_directions:
            v = np.asarray(d, dtype=float)
            norm = np.linalg.norm(v)
            if norm <= 0:
                raise ValueError("pole directions must be nonzero")
            dirs.append(tuple(v / norm))
        object.__setattr__(self, "pole_directions", tuple(dirs))


def euler_grid(resolution: float):
    """Grid axes (degrees) and the flattened quaternion array of all nodes."""
    phi1 = np.arange(0.0, 360.0, resolution)
    Phi = np.arange(0.0, 180.0 + resolution / 2, resolution)
    phi2 = np.arange(0.0, 360.0, resolution)
    mesh = np.stack(np.meshgrid(phi1, Phi, phi2, indexing="ij"), axis=-1).reshape(-1, 3)
    return (phi1, Phi, phi2), euler_to_quat(np.deg2rad(mesh)), mesh


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for an (n, 4) quaternion array, shape (n, 3, 3)."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def export_euler_grid(evaluator, spec: GridSpec, path) -> int:
    """Write (phi1, Phi, phi2, value) rows, density in multiples of uniform.

    Returns the row count, which is the product of the axis lengths.
    """
    axes, quats, mesh = euler_grid(spec.resolution)
    values = np.asarray(evaluator(quats), dtype=float) * TWO_PI_SQ
    if not np.all(np.isfinite(values)):
        raise ValueError("evaluator produced non-finite grid values")
    with open(path, "w") as fh:
        fh.write("phi1_deg,Phi_deg,phi2_deg,value\n")
        for (p1, P, p2), v in zip(mesh, values):
            fh.write(f"{p1:.6f},{P:.6f},{p2:.6f},{repr(float(v))}\n")
    return values.shape[0]


def export_pole_figures(samples, spec: GridSpec, qc: SymmetryGroup, out_paths, kappa: float = 40.0):
    """Point-density pole figures from orientation samples.

    For each crystal-frame pole the sample orientations map it into the
    specimen frame (crystal-symmetry orbit included, antipodes identified),
    and the resulting directions are smoothed on the upper hemisphere with
    a cos(theta/2)**(2*kappa) kernel.  One CSV of (azimuth_deg, polar_deg,
    value) per pole direction, values in multiples of uniform.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(out_paths) != len(spec.pole_directions):
        raise ValueError("need one output path per pole direction")
    res = spec.resolution
    az = np.arange(0.0, 360.0, res)
    pol = np.arange(0.0, 90.0 + res / 2, res)
    azr, polr = np.deg2rad(az), np.deg2rad(pol)
    grid_dirs = np.stack(
        [
            np.outer(np.sin(polr), np.cos(azr)),
            np.outer(np.sin(polr), np.sin(azr)),
            np.outer(np.cos(polr), np.ones_like(azr)),
        ],
        axis=-1,
    ).reshape(-1, 3)  # (n_pol * n_az, 3)

    # orientations map specimen directions to crystal directions, so a
    # crystal pole h appears in the specimen frame through the inverse
    rot = _quat_to_matrix(quat.qconj(samples))
    log_c2 = math.log((kappa + 1.0) / (4.0 * math.pi))
    counts = len(qc) * samples.shape[0]
    rows = []
    for pole in spec.pole_directions:
        orbit = np.unique(np.round(_quat_to_matrix(qc.elements) @ np.asarray(pole), 12), axis=0)
        dirs = (rot[:, None, :, :] @ orbit[None, :, :, None]).reshape(-1, 3)
        # antipodal kernel on the sphere: average of +/- directions
        dots = grid_dirs @ dirs.T
        c2 = 0.5 * (1.0 + np.abs(dots))  # cos^2(theta/2) of the closer antipode
        with np.errstate(divide="ignore"):
            dens = np.exp(kappa * np.log(c2) + log_c2).mean(axis=1)
        dens += np.exp(kappa * np.log(np.clip(1.0 - c2, 0.0, 1.0)) + log_c2).mean(axis=1)
        values = dens * 4.0 * math.pi / 2.0  # multiples of uniform, antipodal halves
        rows.append(values)

    n_az, n_pol = az.shape[0], pol.shape[0]
    for path, values in zip(out_paths, rows):
        if not np.all(np.isfinite(values)):
            raise ValueError("pole-figure export produced non-finite values")
        with open(path, "w") as fh:
            fh.write("azimuth_deg,polar_deg,value\n")
            grid = values.reshape(n_pol, n_az)
            for i, p in enumerate(pol):
                for j, a in enumerate(az):
                    fh.write(f"{a:.6f},{p:.6f},{repr(float(grid[i, j]))}\n")
    return [len(pol) * len(az)] * len(out_paths)


def export_grid(source, spec: GridSpec, qc: SymmetryGroup, qs: SymmetryGroup, out) -> list:
    """Dispatch on the grid kind.

    ``euler-grid`` needs a callable density ``source`` and a single output
    path; ``pole-figure`` needs orientation samples and one path per pole.
    Returns the written row counts.
    """
    if spec.kind == "euler-grid":
        return [export_euler_grid(source, spec, out)]
    return export_pole_figures(source, spec, qc, out)


# ---------------------------------------------------------------------------
# trace persistence
# ---------------------------------------------------------------------------


def save_trace(trace: ChainTrace, path) -> None:
    """Write the trace as newline-delimited JSON.

    The first line is a header with the format version and the frame
    completion convention; each following record stores the iteration,
    component count, weights, per-component concentrations and first frame
    axis, and the log posterior.
    """
    with open(path, "w") as fh:
        header = {
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "completion": COMPLETION_TAG,
            "crystal": trace.qc.name if trace.qc is not None else None,
            "specimen": trace.qs.name if trace.qs is not None else None,
            "forced_uniform": bool(trace.states[0].forced_uniform) if trace.states else False,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for it, state, lp in zip(trace.iters, trace.states, trace.log_posteriors):
            rec = {
                "iter": it,
                "M": state.m,
                "alpha": [repr(float(w)) for w in state.weights],
                "components": [
                    {
                        "lambda": [repr(float(v)) for v in c.lam],
                        "v1": [repr(float(v)) for v in c.frame[:, 0]],
                    }
                    for c in state.components
                ],
                "log_posterior": repr(float(lp)),
            }
            fh.write(json.dumps(rec) + "\n")


def load_trace(path) -> ChainTrace:
    """Read a trace written by :func:`save_trace`.

    Frames are rebuilt from the stored first axes with the deterministic
    completion; acceptance flags are not persisted and load as None.
    """
    trace = ChainTrace()
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != TRACE_FORMAT:
            raise ValueError(f"{path}: not a trace file")
        if header.get("completion") != COMPLETION_TAG:
            raise ValueError(f"{path}: unknown completion convention {header.get('completion')}")
        forced = bool(header.get("forced_uniform", False))
        if header.get("crystal"):
            trace.qc = quat.symmetry_group(header["crystal"])
        if header.get("specimen"):
            trace.qs = quat.symmetry_group(header["specimen"])
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            comps = tuple(
                BinghamComponent(
                    lam=np.array([float(v) for v in c["lambda"]]),
                    frame=complete_basis(np.array([float(v) for v in c["v1"]])),
                )
                for c in rec["components"]
            )
            weights = np.array([float(w) for w in rec["alpha"]])
            state = MixtureState(
                weights=weights / weights.sum(), components=comps, forced_uniform=forced
            )
            trace.states.append(state)
            trace.log_posteriors.append(float(rec["log_posterior"]))
            trace.iters.append(int(rec["iter"]))
            trace.accept_dim.append(None)
            trace.accept_within.append(None)
    return trace


# ---------------------------------------------------------------------------
# run configuration and manifests
# ---------------------------------------------------------------------------

_CONFIG_DEFAULTS = {
    "data": None,
    "data_format": "quaternion-csv",
    "crystal_symmetry": "cubic-24",
    "specimen_symmetry": "cyclic-2",
    "hyperparams": {"mu": 10.0, "beta": 1.0, "nu": 1.0, "m_max": 5},
    "sampler": {
        "iters": 10000,
        "burn_in": 2000,
        "b": 0.01,
        "c": 2.0,
        "d": 0.05,
        "thin": 1,
        "adapt": True,
    },
    "ladder": list((1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)),
    "forced_uniform": False,
    "swap_rule": "corrected",
    "weights_normalization": "cumulative",
    "dimension_rule": "corrected",
    "table": None,
    "out": None,
    "seed": None,
}


@dataclass
class RunConfig:
    """Validated run configuration resolved from JSON plus CLI overrides."""

    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.raw[key]

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True)

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path=None, overrides: dict | None = None, require_files=("data", "table")) -> RunConfig:
    """Merge defaults, a JSON config file, and overrides; validate exhaustively.

    Every problem found is reported in a single :class:`ConfigError`, not
    just the first.
    """
    merged = json.loads(json.dumps(_CONFIG_DEFAULTS))
    problems = []
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError([f"config file not found: {path}"]) from None
        except json.JSONDecodeError as e:
            raise ConfigError([f"config file is not valid JSON: {e}"]) from None
        for key, value in user.items():
            if key not in merged:
                problems.append(f"unknown config key '{key}'")
            elif isinstance(merged[key], dict) and isinstance(value, dict):
                for sub, sval in value.items():
                    if sub not in merged[key]:
                        problems.append(f"unknown config key '{key}.{sub}'")
                    else:
                        merged[key][sub] = sval
            else:
                merged[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            top, sub = key.split(".", 1)
            merged[top][sub] = value
        else:
            merged[key] = value

    if merged["seed"] is None:
        problems.append("seed is mandatory; set it in the config or pass --seed")
    for name in ("crystal_symmetry", "specimen_symmetry"):
        try:
            quat.symmetry_group(merged[name])
        except quat.GroupError as e:
            problems.append(str(e))
    hp = merged["hyperparams"]
    if hp["mu"] <= 0 or hp["beta"] <= 0 or hp["nu"] <= 0:
        problems.append("hyperparams mu, beta, nu must be positive")
    if hp["m_max"] < 1:
        problems.append("hyperparams.m_max must be at least 1")
    sp = merged["sampler"]
    if sp["iters"] < 0:
        problems.append("sampler.iters must be nonnegative")
    if sp["burn_in"] < 0 or (sp["iters"] > 0 and sp["burn_in"] >= sp["iters"]):
        problems.append("sampler.burn_in must be nonnegative and smaller than iters")
    if min(sp["b"], sp["c"], sp["d"]) <= 0:
        problems.append("sampler proposal variances b, c, d must be positive")
    if sp["thin"] < 1:
        problems.append("sampler.thin must be at least 1")
    try:
        temps = tuple(float(t) for t in merged["ladder"])
        if not temps or temps[0] != 1.0 or any(
            t <= 0 or t > 1 for t in temps
        ) or any(b >= a for a, b in zip(temps, temps[1:])):
            problems.append("ladder must start at 1.0 and decrease strictly within (0, 1]")
    except (TypeError, ValueError):
        problems.append("ladder must be a list of numbers")
    if merged["swap_rule"] not in ("corrected", "literal"):
        problems.append("swap_rule must be 'corrected' or 'literal'")
    if merged["weights_normalization"] not in ("cumulative", "literal"):
        problems.append("weights_normalization must be 'cumulative' or 'literal'")
    if merged["dimension_rule"] not in ("corrected", "literal"):
        problems.append("dimension_rule must be 'corrected' or 'literal'")
    import os

    for key in require_files:
        if merged.get(key) is None:
            problems.append(f"{key} path is required for this command")
        elif not os.path.exists(merged[key]):
            problems.append(f"{key} file does not exist: {merged[key]}")
    if merged["out"] is None:
        problems.append("out directory is required; set 'out' or pass --out")

    if problems:
        raise ConfigError(problems)
    return RunConfig(raw=merged)


def write_manifest(out_dir, config: RunConfig, command: str, outputs: list) -> str:
    """Deterministic machine-readable record sufficient to reproduce the run."""
    from . import __version__

    manifest = {
        "tool": "odfmix",
        "version": __version__,
        "command": command,
        "config": config.raw,
        "config_sha256": config.sha256(),
        "seed": config["seed"],
        "outputs": sorted(str(o) for o in outputs),
    }
    import os

    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
