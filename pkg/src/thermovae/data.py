"""Robot joint-state data model, synthetic thermal plant, CSV I/O, windowing.

A trajectory carries per-sample joint positions, velocities and torques (the
channels the autoencoder consumes, laid out q1..qn, qd1..qdn, tau1..taun)
plus per-joint motor temperature.  Temperature exists only to label
trajectories cool/hot and to validate the plant; it is never a model input.

The plant is a per-joint one-mass rigid body feeding a first-order RC
thermal model: winding losses R_w (tau/k_t)^2 heat a lumped capacitance
C_th that leaks to ambient through R_th.  Explicit Euler at dt = 0.1 s is
accurate here because the RC time constant is hundreds of seconds.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

# Kinova Gen 3 motor safety margins: trajectories above LABEL_TEMP_C are
# thermally critical; crossing ERROR_TEMP_C aborts the simulation.
LABEL_TEMP_C = 40.0
ERROR_TEMP_C = 75.0

_STD_FLOOR = 1e-12


class DataError(ValueError):
    """Malformed trajectory, corpus, or configuration data."""


class CsvFormatError(DataError):
    """CSV contract violation; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def label_for(max_temp: float) -> str:
    """'hot' strictly above the 40 degC threshold, 'cool' at or below it."""
    return "hot" if max_temp > LABEL_TEMP_C else "cool"


def channel_names(n_joints: int) -> list[str]:
    """Column names for the 3*n_J model channels, positions first."""
    idx = range(1, n_joints + 1)
    return ([f"q{i}" for i in idx] + [f"qd{i}" for i in idx]
            + [f"tau{i}" for i in idx])


def kind_slices(n_joints: int) -> dict[str, slice]:
    """Channel ranges per physical kind in the model channel layout."""
    n = n_joints
    return {"position": slice(0, n), "velocity": slice(n, 2 * n),
            "torque": slice(2 * n, 3 * n)}


@dataclass
class RobotState:
    """One timestamped sample of joint positions, velocities and torques."""

    t: float
    q: np.ndarray
    qdot: np.ndarray
    tau: np.ndarray
    temp: np.ndarray


@dataclass
class Trajectory:
    """Uniformly sampled sequence of robot states.

    ``label`` is 'cool' or 'hot' for plant output (keyed to the 40 degC
    threshold) and 'unlabeled' for ingested files; labels travel in corpus
    manifests, never in the CSV itself.
    """

    states: list[RobotState]
    dt: float
    label: str = "unlabeled"
    traj_id: str = ""
    fault: str | None = None

    def __post_init__(self):
        if not self.states:
            raise DataError("trajectory: empty state list")
        n_j = len(self.states[0].q)
        if n_j < 1:
            raise DataError("trajectory: need at least one joint")
        for s in self.states:
            if not (len(s.q) == len(s.qdot) == len(s.tau) == len(s.temp) == n_j):
                raise DataError("trajectory: inconsistent joint counts")
        ts = self.times()
        if np.any(np.diff(ts) <= 0):
            raise DataError("trajectory: time must be strictly increasing")

    def __len__(self):
        return len(self.states)

    @property
    def n_joints(self) -> int:
        return len(self.states[0].q)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def temps(self) -> np.ndarray:
        return np.stack([s.temp for s in self.states])

    def channel_matrix(self) -> np.ndarray:
        """[N, 3*n_J] matrix in the model channel layout (no temperature)."""
        q = np.stack([s.q for s in self.states])
        qd = np.stack([s.qdot for s in self.states])
        tau = np.stack([s.tau for s in self.states])
        return np.concatenate([q, qd, tau], axis=1)


@dataclass
class Normalizer:
    """Per-channel z-score transform fitted on the training corpus."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DataError("normalizer: mean/std must be equal-length vectors")
        if np.any(self.std <= 0):
            raise DataError("normalizer: std must be positive in every channel")

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean


@dataclass
class Window:
    """Fixed-length normalized slice of a trajectory, the VAE's unit."""

    values: np.ndarray  # [W, channels], z-scored
    source: tuple[str, int] | None = None  # (trajectory id, start index)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] % 3:
            raise DataError("window: expected [W, 3*n_joints] values, got "
                            f"{self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("window: non-finite values")


@dataclass
class PlantConfig:
    """Physical constants and motion-profile settings of the synthetic plant.

    Thermal constants are per joint (scalars are broadcast).  The defaults
    are tuned so that cruise motions stay well below the 40 degC label
    threshold over 600 s while the hold posture crosses it within ~140 s and
    saturates near 72 degC, safely under the 75 degC abort level.
    """

    n_joints: int = 1
    dt: float = 0.1
    r_th: float | list = 1.5        # K/W thermal resistance to ambient
    c_th: float | list = 200.0      # J/K lumped thermal capacitance
    r_w: float | list = 1.0         # ohm winding resistance
    k_t: float | list = 1.0         # N*m/A torque constant
    t_amb: float | list = 22.0      # degC ambient
    inertia: float | list = 1.0     # kg*m^2 one-mass link inertia
    damping: float | list = 0.5     # N*m*s/rad viscous friction
    gravity_torque: float | list = 2.0  # N*m gravity load scale (times sin q)
    n_sinusoids: tuple[int, int] = (2, 3)       # cruise component count range
    amp_range: tuple[float, float] = (0.3, 0.5)    # rad
    freq_range: tuple[float, float] = (0.06, 0.13)  # Hz
    hold_torque: float = 5.8        # N*m constant load in hold mode
    hold_posture_range: tuple[float, float] = (-1.2, 1.2)  # rad
    noise_q: float = 0.002
    noise_qdot: float = 0.005
    noise_tau: float = 0.02
    noise_temp: float = 0.0
    seed: int = 42

    def __post_init__(self):
        if self.n_joints < 1:
            raise DataError("plant: n_joints must be >= 1")
        if self.dt <= 0:
            raise DataError("plant: dt must be positive")
        for name in ("r_th", "c_th", "r_w", "k_t", "inertia"):
            arr = self._per_joint(name)
            if np.any(arr <= 0):
                raise DataError(f"plant: {name} must be positive")

    def _per_joint(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            return np.full(self.n_joints, float(arr))
        if arr.shape != (self.n_joints,):
            raise DataError(f"plant: {name} must be scalar or length n_joints")
        return arr

    def steady_state_temp(self, tau: float | np.ndarray) -> np.ndarray:
        """Closed-form RC steady state T_amb + R_th R_w (tau/k_t)^2."""
        tau = np.asarray(tau, dtype=np.float64)
        return (self._per_joint("t_amb")
                + self._per_joint("r_th") * self._per_joint("r_w")
                * (tau / self._per_joint("k_t")) ** 2)


def plant_config_to_json(cfg: PlantConfig) -> str:
    d = asdict(cfg)
    for key, value in d.items():
        if isinstance(value, tuple):
            d[key] = list(value)
    return json.dumps(d, indent=2)


def plant_config_from_json(text: str) -> PlantConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"plant config: invalid JSON ({exc})") from exc
    known = {f.name for f in PlantConfig.__dataclass_fields__.values()}
    unknown = set(d) - known
    if unknown:
        raise DataError(f"plant config: unknown fields {sorted(unknown)}")
    for key in ("n_sinusoids", "amp_range", "freq_range", "hold_posture_range"):
        if key in d:
            d[key] = tuple(d[key])
    return PlantConfig(**d)


def _cruise_profiles(cfg: PlantConfig, rng: np.random.Generator, t: np.ndarray):
    """Sum-of-sinusoids position per joint with analytic derivatives."""
    n = len(t)
    q = np.zeros((n, cfg.n_joints))
    qdot = np.zeros((n, cfg.n_joints))
    qddot = np.zeros((n, cfg.n_joints))
    lo, hi = cfg.n_sinusoids
    for j in range(cfg.n_joints):
        k = int(rng.integers(lo, hi + 1))
        for _ in range(k):
            amp = rng.uniform(*cfg.amp_range)
            omega = 2.0 * math.pi * rng.uniform(*cfg.freq_range)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            arg = omega * t + phase
            q[:, j] += amp * np.sin(arg)
            qdot[:, j] += amp * omega * np.cos(arg)
            qddot[:, j] -= amp * omega * omega * np.sin(arg)
    return q, qdot, qddot


def simulate(cfg: PlantConfig, duration: float, mode: str) -> Trajectory:
    """Generate one labeled trajectory of ``duration`` seconds.

    'cruise' follows seeded sinusoids per joint with a one-mass torque model;
    'hold' freezes a seeded posture under a constant high load torque.
    Temperature integrates the RC model by explicit Euler from ambient and
    determines the cool/hot label.  Crossing the 75 degC error level stops
    the simulation early and marks the trajectory with an overtemp fault.
    Deterministic given cfg.seed.
    """
    if mode not in ("cruise", "hold"):
        raise DataError(f"simulate: unknown mode {mode!r}")
    if duration < cfg.dt:
        raise DataError("simulate: duration shorter than one sampling period")
    rng = np.random.default_rng(cfg.seed)
    n = int(round(duration / cfg.dt)) + 1
    t = np.arange(n) * cfg.dt

    if mode == "cruise":
        q, qdot, qddot = _cruise_profiles(cfg, rng, t)
        tau_true = (cfg._per_joint("inertia") * qddot
                    + cfg._per_joint("damping") * qdot
                    + cfg._per_joint("gravity_torque") * np.sin(q))
    else:
        posture = rng.uniform(*cfg.hold_posture_range, size=cfg.n_joints)
        q = np.tile(posture, (n, 1))
        qdot = np.zeros((n, cfg.n_joints))
        tau_true = np.full((n, cfg.n_joints), float(cfg.hold_torque))

    # sensor noise rides on top of the true signals; heating uses true torque
    q_meas = q + rng.normal(0.0, cfg.noise_q, size=q.shape)
    qdot_meas = qdot + rng.normal(0.0, cfg.noise_qdot, size=q.shape)
    tau_meas = tau_true + rng.normal(0.0, cfg.noise_tau, size=q.shape)
    temp_noise = rng.normal(0.0, cfg.noise_temp, size=q.shape) if cfg.noise_temp > 0 \
        else np.zeros_like(q)

    r_th = cfg._per_joint("r_th")
    c_th = cfg._per_joint("c_th")
    r_w = cfg._per_joint("r_w")
    k_t = cfg._per_joint("k_t")
    t_amb = cfg._per_joint("t_amb")

    temp = np.empty((n, cfg.n_joints))
    temp[0] = t_amb
    fault = None
    last = n
    for k in range(n - 1):
        loss = r_w * (tau_true[k] / k_t) ** 2
        temp[k + 1] = temp[k] + cfg.dt * (loss - (temp[k] - t_amb) / r_th) / c_th
        if np.any(temp[k + 1] > ERROR_TEMP_C):
            fault = "overtemp"
            last = k + 2
            break

    temp_meas = temp[:last] + temp_noise[:last]
    states = [RobotState(t=float(t[k]), q=q_meas[k], qdot=qdot_meas[k],
                         tau=tau_meas[k], temp=temp_meas[k])
              for k in range(last)]
    return Trajectory(states=states, dt=cfg.dt, label=label_for(float(temp_meas.max())),
                      traj_id=f"{mode}-{cfg.seed}", fault=fault)


# ------------------------------------------------------------------ CSV I/O


def save_csv(traj: Trajectory, path) -> None:
    """Write the trajectory CSV contract: t,q1..qn,qd1..qdn,tau1..taun,temp1..tempn."""
    n = traj.n_joints
    idx = range(1, n + 1)
    header = (["t"] + [f"q{i}" for i in idx] + [f"qd{i}" for i in idx]
              + [f"tau{i}" for i in idx] + [f"temp{i}" for i in idx])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for s in traj.states:
            row = [s.t, *s.q, *s.qdot, *s.tau, *s.temp]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path) -> Trajectory:
    """Parse a trajectory CSV, validating the contract row by row.

    Raises CsvFormatError with the 1-based line number for ragged rows,
    non-numeric cells, non-monotone time, or non-uniform dt (1e-6 s).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file", line=1) from None
        n = (len(header) - 1) // 4
        idx = range(1, n + 1)
        expected = (["t"] + [f"q{i}" for i in idx] + [f"qd{i}" for i in idx]
                    + [f"tau{i}" for i in idx] + [f"temp{i}" for i in idx])
        if n < 1 or header != expected:
            raise CsvFormatError(f"bad header {header!r}", line=1)
        width = 1 + 4 * n
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != width:
                raise CsvFormatError(f"expected {width} cells, got {len(cells)}",
                                     line=lineno)
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise CsvFormatError("non-numeric cell", line=lineno) from None

    if not rows:
        raise CsvFormatError("no data rows", line=1)
    data = np.array(rows)
    ts = data[:, 0]
    if len(ts) < 2:
        dt = 0.0
    else:
        dt = ts[1] - ts[0]
    for k in range(1, len(ts)):
        if ts[k] <= ts[k - 1]:
            raise CsvFormatError("time not strictly increasing", line=k + 2)
        if abs((ts[k] - ts[k - 1]) - dt) > 1e-6:
            raise CsvFormatError(f"non-uniform dt ({ts[k] - ts[k - 1]!r} vs {dt!r})",
                                 line=k + 2)
    states = [RobotState(t=float(r[0]), q=np.array(r[1:1 + n]),
                         qdot=np.array(r[1 + n:1 + 2 * n]),
                         tau=np.array(r[1 + 2 * n:1 + 3 * n]),
                         temp=np.array(r[1 + 3 * n:1 + 4 * n]))
              for r in rows]
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return Trajectory(states=states, dt=float(dt) if dt else 1.0,
                      label="unlabeled", traj_id=name)


# -------------------------------------------------------- normalizer, windows


def fit_normalizer(trajs: list[Trajectory]) -> Normalizer:
    """Per-channel mean and population (1/N) std over all states of all trajectories."""
    if not trajs:
        raise DataError("fit_normalizer: no trajectories")
    stacked = np.concatenate([tr.channel_matrix() for tr in trajs], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)  # ddof=0, population convention
    names = channel_names(trajs[0].n_joints)
    for ch, s in enumerate(std):
        if s < _STD_FLOOR:
            raise DataError(f"fit_normalizer: channel {names[ch]!r} has zero variance")
    return Normalizer(mean=mean, std=std)


def windows(traj: Trajectory, norm: Normalizer, length: int, stride: int) -> list[Window]:
    """Overlapping normalized windows at offsets 0, stride, 2*stride, ...

    The final partial window is dropped.
    """
    if stride < 1:
        raise DataError("windows: stride must be >= 1")
    if len(traj) < length:
        raise DataError(f"windows: trajectory length {len(traj)} < window length {length}")
    x = norm.transform(traj.channel_matrix())
    out = []
    for off in range(0, len(traj) - length + 1, stride):
        out.append(Window(values=x[off:off + length].copy(),
                          source=(traj.traj_id, off)))
    return out


# --------------------------------------------------- generated-window CSV


def save_windows_csv(values_list: list[np.ndarray], n_joints: int, path) -> None:
    """Write normalized windows: one row per (window, step) in model channels."""
    names = channel_names(n_joints)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("window,step," + ",".join(names) + "\n")
        for w, vals in enumerate(values_list):
            for step, row in enumerate(vals):
                cells = [str(w), str(step)] + [repr(float(v)) for v in row]
                fh.write(",".join(cells) + "\n")


def load_windows_csv(path) -> list[np.ndarray]:
    """Parse the generated-window CSV back into [W, channels] arrays."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["window", "step"]:
            raise CsvFormatError("bad windows header", line=1)
        channels = len(header) - 2
        if channels < 3 or channels % 3:
            raise CsvFormatError("channel count must be a positive multiple of 3", line=1)
        groups: dict[int, list] = {}
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise CsvFormatError("ragged row", line=lineno)
            try:
                w = int(cells[0])
                step = int(cells[1])
                row = [float(c) for c in cells[2:]]
            except ValueError:
                raise CsvFormatError("non-numeric cell", line=lineno) from None
            groups.setdefault(w, []).append((step, row))
    out = []
    for w in sorted(groups):
        rows = [r for _, r in sorted(groups[w])]
        out.append(np.array(rows))
    return out
