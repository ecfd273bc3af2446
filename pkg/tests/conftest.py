from pathlib import Path
from typing import Sequence

import pytest

from config import PipelineConfig
from processors import characterize
from scene_sim import Scatterer, Scene, SoundingConfig, Track, load_scene, run_scene
from semantics_engine import load_rules
from sounding_dsp import Mpc

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENES = REPO_ROOT / "scenes"
DEFAULT_RULES = REPO_ROOT / "rules" / "fig6.json"


def mpcs_at(delays_ns: Sequence[float], powers: Sequence[float] = None, t: float = 0.0):
    powers = powers or [1.0] * len(delays_ns)
    return [Mpc(delay=d * 1e-9, amplitude=p ** 0.5, power=p, snapshot_time=t)
            for d, p in zip(delays_ns, powers)]


@pytest.fixture
def small_sounding():
    return SoundingConfig(carrier=28e9, bandwidth=1e9, n_tones=1001)


@pytest.fixture
def one_scatterer_scene(small_sounding):
    return Scene(
        scatterers=(Scatterer("median barrier", Track.static(0.0, 3.32), 0.5),),
        sounding=small_sounding,
        duration=1.0,
        snapshot_rate=15.625,
        name="one_scatterer",
    )


@pytest.fixture
def default_rules():
    return load_rules(DEFAULT_RULES)


@pytest.fixture(scope="session")
def songshanhu_scene():
    return load_scene(SCENES / "songshanhu.json")


@pytest.fixture(scope="session")
def songshanhu_trace(songshanhu_scene):
    return run_scene(songshanhu_scene)


@pytest.fixture(scope="session")
def songshanhu_result(songshanhu_trace):
    return characterize(songshanhu_trace, PipelineConfig(), load_rules(DEFAULT_RULES))


@pytest.fixture(scope="session")
def turn_result():
    trace = run_scene(load_scene(SCENES / "turn_maneuvers.json"))
    return characterize(trace, PipelineConfig(), load_rules(DEFAULT_RULES))
