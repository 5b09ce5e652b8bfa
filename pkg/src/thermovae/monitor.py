"""Anomaly scoring, threshold calibration, thermal difficulty, latent export.

Scoring is deterministic: windows are reconstructed through the posterior
mean (eps = 0), so rerunning a frozen model on the same data yields bitwise
identical scores.  A window's score is the mean absolute reconstruction
error over its W*channels elements; a window is anomalous when its score
exceeds the calibrated threshold.

The thermal difficulty of joint k over a time horizon is

    d_k = 1 - exp(-mean_t |e_k(t)|),    d = sum_k d_k

where |e_k(t)| sums the absolute reconstruction errors of the joint's
position, velocity and torque channels at sample t.  d_k is dimensionless,
bounded in [0, 1), and strictly increasing in the mean error, which makes it
safe to exchange between robots regardless of sampling rate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import vae as vae_mod
from .data import Normalizer, Trajectory, kind_slices

TOTAL_TOL = 1e-12


class MonitorError(ValueError):
    """Invalid monitoring request (bad horizon, too few windows, ...)."""


class ReportFormatError(ValueError):
    """Difficulty report file is malformed or violates an invariant."""


@dataclass
class AnomalyVerdict:
    """Score and decision for one window."""

    window_offset: int
    score: float
    threshold: float
    is_anomalous: bool

    def __post_init__(self):
        if self.is_anomalous != (self.score > self.threshold):
            raise MonitorError("verdict: is_anomalous inconsistent with score/threshold")


@dataclass
class ReconErrors:
    """Window scores plus coverage-averaged per-timestep channel errors."""

    offsets: np.ndarray          # [K] window start indices
    scores: np.ndarray           # [K] per-window mean absolute error
    per_step_error: np.ndarray   # [T, channels], T = covered timesteps
    coverage: np.ndarray         # [T] number of windows covering each step
    times: np.ndarray            # [T] timestamps of covered steps


def window_scores(model: vae_mod.VaeModel, values: np.ndarray) -> np.ndarray:
    """Mean absolute reconstruction error per stacked window [B, W, C]."""
    values = np.asarray(values, dtype=np.float64)
    recon = vae_mod.reconstruct(model, values)
    return np.abs(values - recon).mean(axis=(1, 2))


def recon_error_series(model: vae_mod.VaeModel, traj: Trajectory,
                       norm: Normalizer | None = None, *,
                       stride: int = 16) -> ReconErrors:
    """Score every window of a trajectory and aggregate per-timestep errors.

    Windows overlap at the given stride; timesteps covered by several
    windows average their absolute errors by coverage count.
    """
    norm = norm if norm is not None else model.normalizer
    if norm is None:
        raise MonitorError("recon_error_series: no normalizer available")
    w = model.window_len
    if len(traj) < w:
        raise MonitorError(f"recon_error_series: trajectory length {len(traj)} < {w}")
    x = norm.transform(traj.channel_matrix())
    offsets = np.arange(0, len(traj) - w + 1, stride)
    stacked = np.stack([x[o:o + w] for o in offsets])
    recon = vae_mod.reconstruct(model, stacked)
    abs_err = np.abs(stacked - recon)
    scores = abs_err.mean(axis=(1, 2))

    t_cov = int(offsets[-1]) + w
    per_step = np.zeros((t_cov, model.channels))
    coverage = np.zeros(t_cov)
    for i, o in enumerate(offsets):
        per_step[o:o + w] += abs_err[i]
        coverage[o:o + w] += 1.0
    per_step /= coverage[:, None]
    return ReconErrors(offsets=offsets, scores=scores, per_step_error=per_step,
                       coverage=coverage, times=traj.times()[:t_cov])


def calibrate_threshold(scores, percentile: float = 99.0) -> float:
    """Percentile (linear interpolation) of cool-validation window scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 20:
        raise MonitorError(f"calibrate_threshold: need >= 20 scores, got {scores.size}")
    return float(np.percentile(scores, percentile))


def make_verdicts(errors: ReconErrors, threshold: float) -> list[AnomalyVerdict]:
    return [AnomalyVerdict(window_offset=int(o), score=float(s),
                           threshold=float(threshold),
                           is_anomalous=bool(s > threshold))
            for o, s in zip(errors.offsets, errors.scores)]


# --------------------------------------------------------------- difficulty


@dataclass
class DifficultyReport:
    """Shareable per-joint thermal difficulty over a time horizon."""

    robot_id: str
    horizon: tuple[float, float]
    per_joint: list[float]
    total: float
    model_fingerprint: str
    created_at: str

    def __post_init__(self):
        t_l, t_h = self.horizon
        if not t_l < t_h:
            raise ReportFormatError(f"horizon [{t_l}, {t_h}] must have t_l < t_h")
        for k, d in enumerate(self.per_joint):
            if not (0.0 <= d < 1.0):
                raise ReportFormatError(f"d_{k + 1} = {d} outside [0, 1)")
        if abs(self.total - sum(self.per_joint)) > TOTAL_TOL:
            raise ReportFormatError("total does not equal the per-joint sum")


def joint_difficulty(mean_abs_error: float) -> float:
    """d_k = 1 - exp(-mean absolute reconstruction error).

    The limit 1.0 is unreachable for finite error; a clamp one ulp below 1
    preserves that open interval where float rounding would otherwise hit it
    (mean errors beyond ~36.7, far outside any plausible z-scored series).
    """
    if mean_abs_error < 0:
        raise MonitorError("joint_difficulty: mean error must be >= 0")
    return min(-math.expm1(-mean_abs_error), math.nextafter(1.0, 0.0))


def difficulty(model: vae_mod.VaeModel, planned: Trajectory,
               norm: Normalizer | None = None, *, t_l: float, t_h: float,
               robot_id: str = "robot", stride: int = 16,
               created_at: str | None = None) -> DifficultyReport:
    """Thermal difficulty of a planned trajectory over [t_l, t_h].

    Per-timestep channel errors come from the coverage-averaged
    reconstruction series; each joint sums its three channels, and d_k maps
    the horizon-mean through 1 - exp(-x).
    """
    if not t_l < t_h:
        raise MonitorError(f"difficulty: empty horizon [{t_l}, {t_h}]")
    errors = recon_error_series(model, planned, norm, stride=stride)
    mask = (errors.times >= t_l) & (errors.times <= t_h)
    if not mask.any():
        raise MonitorError(f"difficulty: horizon [{t_l}, {t_h}] contains no "
                           "covered samples")
    slices = kind_slices(model.n_joints)
    per_joint = []
    for k in range(model.n_joints):
        cols = [slices["position"].start + k, slices["velocity"].start + k,
                slices["torque"].start + k]
        e_k = errors.per_step_error[mask][:, cols].sum(axis=1)
        per_joint.append(joint_difficulty(float(e_k.mean())))
    if created_at is None:
        created_at = datetime.now(timezone.utc).isoformat()
    return DifficultyReport(robot_id=robot_id, horizon=(float(t_l), float(t_h)),
                            per_joint=per_joint, total=float(sum(per_joint)),
                            model_fingerprint=vae_mod.model_fingerprint(model),
                            created_at=created_at)


def emit_report(report: DifficultyReport, path) -> None:
    """Write the canonical report JSON (stable key order, lossless floats)."""
    doc = {
        "robot_id": report.robot_id,
        "horizon": [report.horizon[0], report.horizon[1]],
        "per_joint": report.per_joint,
        "total": report.total,
        "model_fingerprint": report.model_fingerprint,
        "created_at": report.created_at,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def parse_report(path) -> DifficultyReport:
    """Read a report file back, enforcing every invariant."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReportFormatError(f"invalid JSON: {exc}") from exc
    required = {"robot_id", "horizon", "per_joint", "total",
                "model_fingerprint", "created_at"}
    if not isinstance(doc, dict) or set(doc) != required:
        raise ReportFormatError(f"report must contain exactly the fields {sorted(required)}")
    horizon = doc["horizon"]
    if (not isinstance(horizon, list) or len(horizon) != 2
            or not all(isinstance(v, (int, float)) for v in horizon)):
        raise ReportFormatError("horizon must be [t_l, t_h]")
    per_joint = doc["per_joint"]
    if (not isinstance(per_joint, list) or not per_joint
            or not all(isinstance(v, (int, float)) for v in per_joint)):
        raise ReportFormatError("per_joint must be a nonempty number list")
    if not isinstance(doc["robot_id"], str) or not isinstance(doc["created_at"], str):
        raise ReportFormatError("robot_id and created_at must be strings")
    if not isinstance(doc["model_fingerprint"], str):
        raise ReportFormatError("model_fingerprint must be a string")
    try:
        return DifficultyReport(robot_id=doc["robot_id"],
                                horizon=(float(horizon[0]), float(horizon[1])),
                                per_joint=[float(v) for v in per_joint],
                                total=float(doc["total"]),
                                model_fingerprint=doc["model_fingerprint"],
                                created_at=doc["created_at"])
    except ReportFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise ReportFormatError(str(exc)) from exc


# ------------------------------------------------------------- latent export


@dataclass
class LatentExport:
    """Posterior rows plus a summed-Gaussian density grid for plotting."""

    mu: np.ndarray        # [K, 2]
    sigma: np.ndarray     # [K, 2]
    labels: list[str]
    grid: np.ndarray      # [G, G]; grid[i, j] = density at (x_j, y_i)
    bounds: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax


def export_latent(model: vae_mod.VaeModel, windows, labels: list[str], *,
                  grid_size: int = 64, pad_sigmas: float = 3.0) -> LatentExport:
    """Posterior means/stds of labeled windows plus their density landscape.

    The grid sums the diagonal-Gaussian pdf of every window's posterior over
    a bounding box covering all mu +- pad_sigmas * sigma.
    """
    if len(windows) != len(labels):
        raise MonitorError("export_latent: one label per window required")
    if not windows:
        raise MonitorError("export_latent: no windows")
    values = np.stack([vae_mod._window_values(w) for w in windows])
    mu, log_var = vae_mod.encode_batch(model, values)
    sigma = np.exp(0.5 * log_var)

    xmin = float((mu[:, 0] - pad_sigmas * sigma[:, 0]).min())
    xmax = float((mu[:, 0] + pad_sigmas * sigma[:, 0]).max())
    ymin = float((mu[:, 1] - pad_sigmas * sigma[:, 1]).min())
    ymax = float((mu[:, 1] + pad_sigmas * sigma[:, 1]).max())
    xs = np.linspace(xmin, xmax, grid_size)
    ys = np.linspace(ymin, ymax, grid_size)

    grid = np.zeros((grid_size, grid_size))
    for i in range(len(mu)):
        px = np.exp(-0.5 * ((xs - mu[i, 0]) / sigma[i, 0]) ** 2) \
            / (sigma[i, 0] * math.sqrt(2.0 * math.pi))
        py = np.exp(-0.5 * ((ys - mu[i, 1]) / sigma[i, 1]) ** 2) \
            / (sigma[i, 1] * math.sqrt(2.0 * math.pi))
        grid += np.outer(py, px)
    return LatentExport(mu=mu, sigma=sigma, labels=list(labels), grid=grid,
                        bounds=(xmin, xmax, ymin, ymax))


def save_latent_csv(export: LatentExport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("mu1,mu2,sigma1,sigma2,label\n")
        for i, label in enumerate(export.labels):
            row = [export.mu[i, 0], export.mu[i, 1],
                   export.sigma[i, 0], export.sigma[i, 1]]
            fh.write(",".join(repr(float(v)) for v in row) + f",{label}\n")


def load_latent_csv(path):
    """Rows back as (mu [K,2], sigma [K,2], labels)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["mu1", "mu2", "sigma1", "sigma2", "label"]:
            raise ReportFormatError(f"bad latent CSV header {header!r}")
        mu, sigma, labels = [], [], []
        for cells in reader:
            if len(cells) != 5:
                raise ReportFormatError("ragged latent CSV row")
            mu.append([float(cells[0]), float(cells[1])])
            sigma.append([float(cells[2]), float(cells[3])])
            labels.append(cells[4])
    return np.array(mu), np.array(sigma), labels


def save_density_json(export: LatentExport, path) -> None:
    xmin, xmax, ymin, ymax = export.bounds
    doc = {
        "bounds": {"xmin": xmin, "xmax": xmax, "ymin": ymin, "ymax": ymax},
        "grid_size": int(export.grid.shape[0]),
        "values": export.grid.reshape(-1).tolist(),  # row-major
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_density_json(path):
    """Density grid back as ([G, G] array, bounds tuple)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReportFormatError(f"invalid JSON: {exc}") from exc
    try:
        g = int(doc["grid_size"])
        values = np.array(doc["values"], dtype=np.float64).reshape(g, g)
        b = doc["bounds"]
        bounds = (float(b["xmin"]), float(b["xmax"]),
                  float(b["ymin"]), float(b["ymax"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportFormatError(f"malformed density document: {exc}") from exc
    if np.any(values < 0):
        raise ReportFormatError("density values must be nonnegative")
    return values, bounds


# ----------------------------------------------------- channel error table


def per_channel_errors(model: vae_mod.VaeModel, values: np.ndarray) -> np.ndarray:
    """Mean absolute reconstruction error per channel over stacked windows."""
    values = np.asarray(values, dtype=np.float64)
    recon = vae_mod.reconstruct(model, values)
    return np.abs(values - recon).mean(axis=(0, 1))


def channel_kind_errors(model: vae_mod.VaeModel, values: np.ndarray) -> dict[str, float]:
    """Per-kind (torque/position/velocity) normalized reconstruction errors."""
    per_channel = per_channel_errors(model, values)
    slices = kind_slices(model.n_joints)
    return {kind: float(per_channel[sl].mean()) for kind, sl in slices.items()}


# ------------------------------------------------------------- verdict CSV


def save_verdicts_csv(verdicts: list[AnomalyVerdict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("offset,score,threshold,is_anomalous\n")
        for v in verdicts:
            flag = "true" if v.is_anomalous else "false"
            fh.write(f"{v.window_offset},{repr(v.score)},{repr(v.threshold)},{flag}\n")


def load_verdicts_csv(path) -> list[AnomalyVerdict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["offset", "score", "threshold", "is_anomalous"]:
            raise ReportFormatError(f"bad verdicts header {header!r}")
        out = []
        for cells in reader:
            if len(cells) != 4 or cells[3] not in ("true", "false"):
                raise ReportFormatError(f"bad verdict row {cells!r}")
            out.append(AnomalyVerdict(window_offset=int(cells[0]),
                                      score=float(cells[1]),
                                      threshold=float(cells[2]),
                                      is_anomalous=cells[3] == "true"))
    return out
