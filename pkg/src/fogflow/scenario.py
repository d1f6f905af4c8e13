"""Scenario definition: vehicles, AVs, channel model, frame segmentation.

A scenario is a straight multi-lane road populated by participant vehicles
(perceptual sensors, caching relays, fog computers), bystander audience
vehicles (AVs) whose uplink subchannels get reused, and one base station.
Vehicles move with constant signed speed along x; AVs and the BS are static.
Time is split into frames at the instants where any participant pair crosses
the communication range, so the contact topology is constant inside a frame.
"""

from __future__ import annotations

import configparser
import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

PATHLOSS_FIXED_DB = 128.1
PATHLOSS_SLOPE_DB = 37.6  # per decade of distance in km
MIN_PATH_DISTANCE_M = 1.0  # pathloss model clamp for near-zero separations
BOUNDARY_MERGE_S = 1e-3  # contact events closer than this collapse to one

ROLES = ("perceptual", "relay", "fog")
BS_LEGS = ("I", "II")  # fog -> BS uplink, BS -> requester downlink

DEFAULT_COMM_RANGE_M = 100.0
DEFAULT_HORIZON_S = 10.0


class ScenarioError(ValueError):
    """Invalid scenario file or field."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class VehicleSpec:
    vid: str
    role: str  # perceptual | relay | fog
    x0: float
    y0: float
    speed_mps: float  # signed, along +x
    cache_bits: float | None = None  # relay cache per frame
    compute_bits: float | None = None  # fog compute per frame

    def __post_init__(self):
        if self.role not in ROLES:
            raise ScenarioError(f"vehicle {self.vid}: unknown role {self.role!r}")
        if self.role == "relay" and (self.cache_bits is None or self.cache_bits < 0):
            raise ScenarioError(f"vehicle {self.vid}: relay needs cache >= 0")
        if self.role == "fog" and (self.compute_bits is None or self.compute_bits < 0):
            raise ScenarioError(f"vehicle {self.vid}: fog needs compute >= 0")

    def position(self, t: float) -> tuple[float, float]:
        return (self.x0 + self.speed_mps * t, self.y0)


@dataclass(frozen=True)
class ChannelParams:
    bandwidth_hz: float = 1.0e7
    noise_dbm_per_hz: float = -174.0
    shadowing_db: float = 4.0
    rayleigh_fading: bool = True
    prediction_error_std: float = 0.15  # relative error of forecast gains
    epsilon: float = 1e-3
    sample_count: int = 1000
    compression_eta: float = 0.1
    gamma_v_th: float = 10.0  # AV SINR threshold, linear
    p_max_v_watts: float = 1.0  # V2V link cap (30 dBm)
    p_max_av_watts: float = 1.0  # AV cap
    p_max_bs_watts: float = 1.0  # BS cap per leg
    w_p: float = 1.0  # power weight in the objective
    zeta_watts: float = 1e-3  # bisection band
    deterministic: bool = False  # disable shadowing/fading/prediction error

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ScenarioError("channel: bandwidth_hz must be > 0")
        if not 0.0 < self.epsilon < 1.0:
            raise ScenarioError("channel: epsilon must be in (0, 1)")
        if self.sample_count < 2:
            raise ScenarioError("channel: sample_count must be >= 2")
        if self.gamma_v_th <= 0:
            raise ScenarioError("channel: gamma_v_th must be > 0")
        if not 0.0 < self.compression_eta <= 1.0:
            raise ScenarioError("channel: compression_eta must be in (0, 1]")
        for name in ("p_max_v_watts", "p_max_av_watts", "p_max_bs_watts"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"channel: {name} must be > 0")

    @property
    def noise_watts(self) -> float:
        return 10.0 ** (self.noise_dbm_per_hz / 10.0) / 1000.0 * self.bandwidth_hz


@dataclass(frozen=True)
class Task:
    tid: str
    source: str  # perceptual vehicle id
    delay_budget_frames: int

    def __post_init__(self):
        if self.delay_budget_frames < 1:
            raise ScenarioError(f"task {self.tid}: delay budget must be >= 1 frame")


@dataclass(frozen=True)
class Frame:
    index: int  # 1-based
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_start + self.t_end)


@dataclass(frozen=True)
class Scenario:
    vehicles: dict[str, VehicleSpec]
    avs: dict[str, tuple[float, float]]
    bs_xy: tuple[float, float]
    channel: ChannelParams
    tasks: tuple[Task, ...]
    seed: int
    comm_range_m: float = DEFAULT_COMM_RANGE_M
    horizon_s: float = DEFAULT_HORIZON_S

    def __post_init__(self):
        if not self.vehicles:
            raise ScenarioError("[vehicles] section is empty")
        if self.comm_range_m <= 0:
            raise ScenarioError("[sim] comm_range_m must be > 0")
        if self.horizon_s <= 0:
            raise ScenarioError("[sim] horizon_s must be > 0")
        for task in self.tasks:
            src = self.vehicles.get(task.source)
            if src is None:
                raise ScenarioError(f"task {task.tid}: unknown source {task.source!r}")
            if src.role != "perceptual":
                raise ScenarioError(
                    f"task {task.tid}: source {task.source} has role {src.role}, "
                    "expected perceptual"
                )

    def position_at(self, vid: str, t: float) -> tuple[float, float]:
        try:
            return self.vehicles[vid].position(t)
        except KeyError:
            raise ScenarioError(f"unknown vehicle id {vid!r}") from None

    def ids_with_role(self, role: str) -> tuple[str, ...]:
        return tuple(v.vid for v in self.vehicles.values() if v.role == role)

    @property
    def perceptual_ids(self) -> tuple[str, ...]:
        return self.ids_with_role("perceptual")

    @property
    def relay_ids(self) -> tuple[str, ...]:
        return self.ids_with_role("relay")

    @property
    def fog_ids(self) -> tuple[str, ...]:
        return self.ids_with_role("fog")

    def task_by_id(self, tid: str) -> Task:
        for task in self.tasks:
            if task.tid == tid:
                return task
        raise ScenarioError(f"unknown task id {tid!r}")


# ---------------------------------------------------------------------------
# config file parsing


def _parse_kv_options(parts: list[str], where: str) -> dict[str, float]:
    opts = {}
    for part in parts:
        if "=" not in part:
            raise ScenarioError(f"{where}: expected key=value, got {part!r}")
        key, _, val = part.partition("=")
        try:
            opts[key.strip()] = float(val)
        except ValueError:
            raise ScenarioError(f"{where}: bad number {val!r} for {key.strip()!r}") from None
    return opts


def _parse_vehicle(vid: str, raw: str) -> VehicleSpec:
    where = f"[vehicles] {vid}"
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) < 4:
        raise ScenarioError(f"{where}: expected 'role, x, y, speed_mps[, key=value...]'")
    role = parts[0]
    try:
        x0, y0, speed = (float(p) for p in parts[1:4])
    except ValueError:
        raise ScenarioError(f"{where}: x, y, speed_mps must be numbers") from None
    opts = _parse_kv_options(parts[4:], where)
    cache = opts.pop("cache_bits", None)
    compute = opts.pop("compute_bits", None)
    if opts:
        raise ScenarioError(f"{where}: unknown options {sorted(opts)}")
    return VehicleSpec(vid, role, x0, y0, speed, cache_bits=cache, compute_bits=compute)


def _parse_point(raw: str, where: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ScenarioError(f"{where}: expected 'x, y'")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError:
        raise ScenarioError(f"{where}: coordinates must be numbers") from None


def _parse_task(tid: str, raw: str) -> Task:
    where = f"[tasks] {tid}"
    opts = {}
    for part in (p.strip() for p in raw.split(",")):
        if "=" not in part:
            raise ScenarioError(f"{where}: expected key=value, got {part!r}")
        key, _, val = part.partition("=")
        opts[key.strip()] = val.strip()
    source = opts.pop("source", None)
    budget = opts.pop("delay_budget_frames", None)
    if source is None or budget is None:
        raise ScenarioError(f"{where}: needs source=<vehicle> and delay_budget_frames=<int>")
    if opts:
        raise ScenarioError(f"{where}: unknown options {sorted(opts)}")
    try:
        budget_i = int(budget)
    except ValueError:
        raise ScenarioError(f"{where}: delay_budget_frames must be an integer") from None
    return Task(tid, source, budget_i)


_CHANNEL_FIELDS: dict[str, type] = {
    "bandwidth_hz": float,
    "noise_dbm_per_hz": float,
    "shadowing_db": float,
    "rayleigh_fading": bool,
    "prediction_error_std": float,
    "epsilon": float,
    "sample_count": int,
    "compression_eta": float,
    "gamma_v_th": float,
    "p_max_v_watts": float,
    "p_max_av_watts": float,
    "p_max_bs_watts": float,
    "w_p": float,
    "zeta_watts": float,
    "deterministic": bool,
}


def _coerce(name: str, raw: str, typ: type, where: str):
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ScenarioError(f"{where}: {name} must be a boolean, got {raw!r}")
    try:
        return typ(float(raw)) if typ is int else typ(raw)
    except ValueError:
        raise ScenarioError(f"{where}: {name} must be {typ.__name__}, got {raw!r}") from None


def load_scenario(path: str) -> Scenario:
    """Parse an INI scenario file; raise ScenarioError naming the bad field."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # ids are case-sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from None
    except configparser.Error as exc:
        raise ScenarioError(f"scenario parse error in {path}: {exc}") from None

    for section in ("vehicles", "bs", "channel", "tasks", "sim"):
        if not parser.has_section(section):
            raise ScenarioError(f"missing [{section}] section in {path}")

    vehicles = {
        vid: _parse_vehicle(vid, raw) for vid, raw in parser.items("vehicles")
    }
    avs = {}
    if parser.has_section("avs"):
        avs = {
            aid: _parse_point(raw, f"[avs] {aid}") for aid, raw in parser.items("avs")
        }
    bs_items = dict(parser.items("bs"))
    if "position" not in bs_items:
        raise ScenarioError("[bs]: needs position = x, y")
    bs_xy = _parse_point(bs_items["position"], "[bs] position")

    chan_kwargs = {}
    for name, raw in parser.items("channel"):
        if name not in _CHANNEL_FIELDS:
            raise ScenarioError(f"[channel]: unknown field {name!r}")
        chan_kwargs[name] = _coerce(name, raw, _CHANNEL_FIELDS[name], "[channel]")
    channel = ChannelParams(**chan_kwargs)

    tasks = tuple(_parse_task(tid, raw) for tid, raw in parser.items("tasks"))

    sim = dict(parser.items("sim"))
    if "seed" not in sim:
        raise ScenarioError("[sim]: seed is mandatory")
    seed = _coerce("seed", sim.pop("seed"), int, "[sim]")
    comm_range = _coerce("comm_range_m", sim.pop("comm_range_m", str(DEFAULT_COMM_RANGE_M)), float, "[sim]")
    horizon = _coerce("horizon_s", sim.pop("horizon_s", str(DEFAULT_HORIZON_S)), float, "[sim]")
    if sim:
        raise ScenarioError(f"[sim]: unknown fields {sorted(sim)}")

    return Scenario(
        vehicles=vehicles,
        avs=avs,
        bs_xy=bs_xy,
        channel=channel,
        tasks=tasks,
        seed=seed,
        comm_range_m=comm_range,
        horizon_s=horizon,
    )


def with_channel(scenario: Scenario, **channel_fields) -> Scenario:
    return replace(scenario, channel=replace(scenario.channel, **channel_fields))


# ---------------------------------------------------------------------------
# frame segmentation


def contact_frames(scenario: Scenario) -> list[Frame]:
    """Split [0, horizon] at every instant a participant pair crosses comm range.

    Pairwise distance is quadratic in t under constant velocities, so the
    crossing instants are the real roots of |dp + dv*t|^2 = R^2 inside the
    horizon. Roots closer than BOUNDARY_MERGE_S collapse into one boundary.
    """
    r2 = scenario.comm_range_m ** 2
    horizon = scenario.horizon_s
    vehicles = list(scenario.vehicles.values())
    events = []
    for i in range(len(vehicles)):
        for j in range(i + 1, len(vehicles)):
            vi, vj = vehicles[i], vehicles[j]
            dx, dy = vj.x0 - vi.x0, vj.y0 - vi.y0
            dvx = vj.speed_mps - vi.speed_mps
            a = dvx * dvx
            b = 2.0 * dx * dvx
            c = dx * dx + dy * dy - r2
            if a == 0.0:
                continue  # constant distance, never crosses
            disc = b * b - 4.0 * a * c
            if disc <= 0.0:
                continue
            sq = math.sqrt(disc)
            for t in ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)):
                if BOUNDARY_MERGE_S < t < horizon - BOUNDARY_MERGE_S:
                    events.append(t)
    events.sort()
    boundaries = [0.0]
    for t in events:
        if t - boundaries[-1] >= BOUNDARY_MERGE_S:
            boundaries.append(t)
    boundaries.append(horizon)
    return [
        Frame(index=k + 1, t_start=boundaries[k], t_end=boundaries[k + 1])
        for k in range(len(boundaries) - 1)
    ]


def in_contact(scenario: Scenario, vid_a: str, vid_b: str, t: float) -> bool:
    ax, ay = scenario.position_at(vid_a, t)
    bx, by = scenario.position_at(vid_b, t)
    return math.hypot(bx - ax, by - ay) <= scenario.comm_range_m


# ---------------------------------------------------------------------------
# channel model


def nominal_gain(tx_xy: tuple[float, float], rx_xy: tuple[float, float]) -> float:
    """Deterministic linear power gain from the distance-based pathloss law."""
    d_raw = math.hypot(rx_xy[0] - tx_xy[0], rx_xy[1] - tx_xy[1])
    if d_raw == 0.0:
        raise ScenarioError("channel gain undefined for coincident tx and rx")
    d_m = max(d_raw, MIN_PATH_DISTANCE_M)
    loss_db = PATHLOSS_FIXED_DB + PATHLOSS_SLOPE_DB * math.log10(d_m / 1000.0)
    return 10.0 ** (-loss_db / 10.0)


def sample_gain(
    tx_xy: tuple[float, float],
    rx_xy: tuple[float, float],
    channel: ChannelParams,
    rng: np.random.Generator,
    n: int = 1,
) -> np.ndarray:
    """Draw instantaneous linear gains: pathloss x lognormal shadowing x Rayleigh power."""
    base = nominal_gain(tx_xy, rx_xy)
    if channel.deterministic:
        return np.full(n, base)
    shadow = 10.0 ** (rng.normal(0.0, channel.shadowing_db, size=n) / 10.0)
    fading = rng.exponential(1.0, size=n) if channel.rayleigh_fading else np.ones(n)
    return base * shadow * fading


def predicted_gain_samples(
    tx_xy: tuple[float, float],
    rx_xy: tuple[float, float],
    channel: ChannelParams,
    rng: np.random.Generator,
    n: int = 1,
) -> np.ndarray:
    """Draw forecast-error gains: nominal x max(0, 1 + sigma_rel * N(0,1)).

    This is the law the robust uncertainty sets are trained on and the one
    outage is evaluated against; it models imperfect future-channel knowledge
    rather than instantaneous fades.
    """
    base = nominal_gain(tx_xy, rx_xy)
    if channel.deterministic or channel.prediction_error_std == 0.0:
        return np.full(n, base)
    err = 1.0 + channel.prediction_error_std * rng.standard_normal(n)
    return base * np.maximum(err, 0.0)


def mean_gain(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("mean_gain: empty sample set")
    return float(samples.mean())


def child_rng(seed: int, *tags) -> np.random.Generator:
    """Deterministic per-purpose RNG: seed plus crc32 of each string tag."""
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, int):
            entropy.append(tag & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(tag).encode()))
    return np.random.default_rng(np.random.SeedSequence(entropy))
