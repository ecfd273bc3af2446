"""
Geometric scene simulator

Synthesizes multi-tone sounding snapshots of a co-located transceiver that
observes single-bounce returns from labeled scatterers moving along
piecewise-linear tracks in a 2-D plan.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from exceptions import DelayRangeError, SceneError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Campaign defaults: 28 GHz, 1 GHz band, 20 km/h for 60 s
DEFAULT_CARRIER = 28e9
DEFAULT_BANDWIDTH = 1e9
DEFAULT_N_TONES = 1001
DEFAULT_SNAPSHOT_RATE = 15.625
DEFAULT_DURATION = 60.0
DEFAULT_SPEED = 20.0 / 3.6


def round_trip_delay(distance: float) -> float:
    return 2.0 * distance / SPEED_OF_LIGHT


def one_way_distance(delay: float) -> float:
    return SPEED_OF_LIGHT * delay / 2.0


@dataclass(frozen=True)
class Track:
    """Piecewise-linear position vs. time, held constant outside its waypoints"""
    waypoints: Tuple[Tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.waypoints:
            raise SceneError("Track needs at least one waypoint")
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise SceneError("Track waypoint times must be strictly increasing")

    @classmethod
    def static(cls, x: float, y: float) -> 'Track':
        return cls(((0.0, float(x), float(y)),))

    @classmethod
    def linear(cls, start: Tuple[float, float], velocity: Tuple[float, float],
               duration: float) -> 'Track':
        x0, y0 = start
        vx, vy = velocity
        return cls(((0.0, x0, y0), (duration, x0 + vx * duration, y0 + vy * duration)))

    @property
    def start_time(self) -> float:
        return self.waypoints[0][0]

    @property
    def end_time(self) -> float:
        return self.waypoints[-1][0]

    def covers(self, duration: float) -> bool:
        """A single waypoint is a static track and covers any duration"""
        if len(self.waypoints) == 1:
            return True
        return self.start_time <= 0.0 and self.end_time >= duration

    def position(self, t: float) -> Tuple[float, float]:
        arr = np.asarray(self.waypoints, dtype=float)
        if len(arr) == 1:
            return float(arr[0, 1]), float(arr[0, 2])
        return float(np.interp(t, arr[:, 0], arr[:, 1])), float(np.interp(t, arr[:, 0], arr[:, 2]))


@dataclass(frozen=True)
class Scatterer:
    label: str
    track: Track
    reflectivity: float


@dataclass(frozen=True)
class SoundingConfig:
    carrier: float = DEFAULT_CARRIER
    bandwidth: float = DEFAULT_BANDWIDTH
    n_tones: int = DEFAULT_N_TONES

    @property
    def tone_spacing(self) -> float:
        return self.bandwidth / (self.n_tones - 1)

    @property
    def max_unambiguous_delay(self) -> float:
        return 1.0 / self.tone_spacing

    @property
    def delay_resolution(self) -> float:
        """Spacing of the inverse-DFT delay grid, 1/(N·Δf) ≈ 1/B"""
        return 1.0 / (self.n_tones * self.tone_spacing)

    def frequencies(self) -> np.ndarray:
        """Baseband tone offsets f_k = k·Δf"""
        return np.arange(self.n_tones) * self.tone_spacing


@dataclass(frozen=True)
class Scene:
    scatterers: Tuple[Scatterer, ...]
    platform: Track = field(default_factory=lambda: Track.static(0.0, 0.0))
    sounding: SoundingConfig = field(default_factory=SoundingConfig)
    duration: float = DEFAULT_DURATION
    snapshot_rate: float = DEFAULT_SNAPSHOT_RATE
    noise_floor_dB: Optional[float] = None
    rng_seed: int = 0
    name: str = "scene"

    @property
    def n_snapshots(self) -> int:
        # tolerance keeps 60 s at 15.625 Hz from losing the last sample to rounding
        return int(math.floor(self.duration * self.snapshot_rate + 1e-9)) + 1

    @property
    def noise_power(self) -> float:
        if self.noise_floor_dB is None:
            return 0.0
        return 10.0 ** (self.noise_floor_dB / 10.0)

    def snapshot_times(self) -> np.ndarray:
        return np.arange(self.n_snapshots) / self.snapshot_rate


@dataclass(frozen=True)
class GroundTruthPath:
    """Which scatterer produced which synthesized path"""
    scatterer: int
    label: str
    delay: float
    amplitude: float


@dataclass(eq=False)
class FrequencyResponse:
    snapshot_time: float
    samples: np.ndarray


@dataclass(eq=False)
class SnapshotTrace:
    scene_name: str
    sounding: SoundingConfig
    snapshot_rate: float
    responses: List[FrequencyResponse]
    ground_truth: Optional[List[List[GroundTruthPath]]] = None

    def __len__(self) -> int:
        return len(self.responses)

    @property
    def snapshot_interval(self) -> float:
        return 1.0 / self.snapshot_rate


def path_geometry(scene: Scene, t: float) -> List[GroundTruthPath]:
    """Round-trip delay and amplitude of every scatterer at time t"""
    px, py = scene.platform.position(t)
    paths = []
    for i, s in enumerate(scene.scatterers):
        sx, sy = s.track.position(t)
        distance = math.hypot(sx - px, sy - py)
        if distance <= 0.0:
            raise SceneError(f"Scatterer {i} ({s.label}) coincides with the platform at t={t} s")
        delay = round_trip_delay(distance)
        # inverse total path length: Γ / (c·τ)
        amplitude = s.reflectivity / (SPEED_OF_LIGHT * delay)
        paths.append(GroundTruthPath(scatterer=i, label=s.label, delay=delay, amplitude=amplitude))
    return paths


def synthesize_snapshot(scene: Scene, t: float, index: int = 0) -> Tuple[FrequencyResponse, List[GroundTruthPath]]:
    """H_k = Σ a_s·exp(−j2π f_k τ_s) + noise for one snapshot"""
    if not (-1e-12 <= t <= scene.duration + 1e-9):
        raise SceneError(f"Snapshot time {t} s outside [0, {scene.duration}] s")

    paths = path_geometry(scene, t)
    sounding = scene.sounding
    limit = sounding.max_unambiguous_delay
    for p in paths:
        if p.delay >= limit:
            raise DelayRangeError(
                f"Delay {p.delay * 1e9:.3f} ns of '{p.label}' exceeds unambiguous range "
                f"{limit * 1e9:.3f} ns")

    freqs = sounding.frequencies()
    samples = np.zeros(sounding.n_tones, dtype=complex)
    if paths:
        delays = np.array([p.delay for p in paths])
        amps = np.array([p.amplitude for p in paths])
        samples = np.exp(-2j * np.pi * np.outer(freqs, delays)) @ amps

    if scene.noise_floor_dB is not None:
        rng = np.random.default_rng([scene.rng_seed, index])
        sigma = math.sqrt(scene.noise_power / 2.0)
        samples = samples + sigma * (rng.standard_normal(sounding.n_tones)
                                     + 1j * rng.standard_normal(sounding.n_tones))

    return FrequencyResponse(snapshot_time=float(t), samples=samples), paths


def run_scene(scene: Scene, progress: bool = False) -> SnapshotTrace:
    """All snapshots of a scene at uniform spacing, with ground truth"""
    responses = []
    truth = []
    times = scene.snapshot_times()
    for index, t in enumerate(tqdm(times, desc=f"Simulating {scene.name}",
                                   unit="snap", disable=not progress)):
        fr, paths = synthesize_snapshot(scene, float(t), index)
        responses.append(fr)
        truth.append(paths)
    logger.info(f"📡 Synthesized {len(responses)} snapshots of '{scene.name}' "
                f"({len(scene.scatterers)} scatterers, {scene.sounding.bandwidth / 1e9:g} GHz band)")
    return SnapshotTrace(scene_name=scene.name, sounding=scene.sounding,
                         snapshot_rate=scene.snapshot_rate, responses=responses,
                         ground_truth=truth)


# Scene config documents

def scene_from_dict(data: Dict[str, Any]) -> Scene:
    try:
        sounding = SoundingConfig(**data.get("sounding", {}))
        platform_data = data.get("platform", {"waypoints": [[0.0, 0.0, 0.0]]})
        platform = Track(tuple(tuple(float(v) for v in w) for w in platform_data["waypoints"]))
        scatterers = tuple(
            Scatterer(
                label=s["label"],
                track=Track(tuple(tuple(float(v) for v in w) for w in s["waypoints"])),
                reflectivity=float(s["reflectivity"]),
            )
            for s in data.get("scatterers", [])
        )
        noise = data.get("noise_floor_dB")
        return Scene(
            scatterers=scatterers,
            platform=platform,
            sounding=sounding,
            duration=float(data.get("duration", DEFAULT_DURATION)),
            snapshot_rate=float(data.get("snapshot_rate", DEFAULT_SNAPSHOT_RATE)),
            noise_floor_dB=None if noise is None else float(noise),
            rng_seed=int(data.get("rng_seed", 0)),
            name=str(data.get("name", "scene")),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SceneError(f"Malformed scene document: {e}")


def scene_to_dict(scene: Scene) -> Dict[str, Any]:
    return {
        "name": scene.name,
        "duration": scene.duration,
        "snapshot_rate": scene.snapshot_rate,
        "noise_floor_dB": scene.noise_floor_dB,
        "rng_seed": scene.rng_seed,
        "sounding": {"carrier": scene.sounding.carrier,
                     "bandwidth": scene.sounding.bandwidth,
                     "n_tones": scene.sounding.n_tones},
        "platform": {"waypoints": [list(w) for w in scene.platform.waypoints]},
        "scatterers": [{"label": s.label, "reflectivity": s.reflectivity,
                        "waypoints": [list(w) for w in s.track.waypoints]}
                       for s in scene.scatterers],
    }


def load_scene(path: Union[str, Path]) -> Scene:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as e:
        raise SceneError(f"Cannot read scene {path}: {e}")
    return scene_from_dict(data)


def with_sounding(scene: Scene, carrier: Optional[float] = None,
                  bandwidth: Optional[float] = None, n_tones: Optional[int] = None) -> Scene:
    sounding = scene.sounding
    sounding = replace(
        sounding,
        carrier=sounding.carrier if carrier is None else carrier,
        bandwidth=sounding.bandwidth if bandwidth is None else bandwidth,
        n_tones=sounding.n_tones if n_tones is None else n_tones,
    )
    return replace(scene, sounding=sounding)
