"""
Configuration management for the channel semantics toolkit

Defaults come from the environment (a `.env` file is honoured), a JSON config
file may override them, and command-line flags override both.
"""
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from exceptions import ConfigurationError

load_dotenv()


def _env_float(name: str, default: Optional[float]) -> Optional[float]:
    raw = os.getenv(name, '')
    if raw == '':
        return default
    if raw.lower() in ('none', 'off'):
        return None
    return float(raw)


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.getenv(name, '')
    if raw == '':
        return default
    if raw.lower() in ('none', 'auto'):
        return None
    return int(raw)


@dataclass
class SoundingOverrides:
    """Optional replacements for a scene's sounding parameters"""
    carrier: Optional[float] = None
    bandwidth: Optional[float] = None
    n_tones: Optional[int] = None

    @classmethod
    def from_env(cls) -> 'SoundingOverrides':
        return cls(
            carrier=_env_float('CHANSEM_CARRIER_HZ', None),
            bandwidth=_env_float('CHANSEM_BANDWIDTH_HZ', None),
            n_tones=_env_int('CHANSEM_N_TONES', None)
        )


@dataclass
class DspConfig:
    """CIR / PDP / MPC extraction settings"""
    noise_margin_db: float = 6.0
    dynamic_range_db: Optional[float] = 60.0
    interpolate: bool = True

    @classmethod
    def from_env(cls) -> 'DspConfig':
        return cls(
            noise_margin_db=_env_float('CHANSEM_NOISE_MARGIN_DB', 6.0),
            dynamic_range_db=_env_float('CHANSEM_DYNAMIC_RANGE_DB', 60.0),
            interpolate=os.getenv(
                'CHANSEM_INTERPOLATE', 'true').lower() == 'true'
        )


@dataclass
class ClusteringConfig:
    """k-power-means settings; k=None selects K automatically up to k_max"""
    k: Optional[int] = None
    k_max: int = 8
    restarts: int = 10
    seed: int = 0

    @classmethod
    def from_env(cls) -> 'ClusteringConfig':
        return cls(
            k=_env_int('CHANSEM_K', None),
            k_max=_env_int('CHANSEM_K_MAX', 8),
            restarts=_env_int('CHANSEM_RESTARTS', 10),
            seed=_env_int('CHANSEM_CLUSTER_SEED', 0)
        )


@dataclass
class TrackingConfig:
    """Cluster-to-trajectory association settings"""
    gate_ns: float = 5.0
    max_gap: int = 3

    @property
    def gate(self) -> float:
        return self.gate_ns * 1e-9

    @classmethod
    def from_env(cls) -> 'TrackingConfig':
        return cls(
            gate_ns=_env_float('CHANSEM_GATE_NS', 5.0),
            max_gap=_env_int('CHANSEM_MAX_GAP', 3)
        )


@dataclass
class BehaviorConfig:
    """Sliding-window drift classifier thresholds"""
    window: int = 16
    epsilon_ns_s: float = 0.5
    delta_ns_s2: float = 1.0

    @classmethod
    def from_env(cls) -> 'BehaviorConfig':
        return cls(
            window=_env_int('CHANSEM_WINDOW', 16),
            epsilon_ns_s=_env_float('CHANSEM_EPSILON_NS_S', 0.5),
            delta_ns_s2=_env_float('CHANSEM_DELTA_NS_S2', 1.0)
        )


# CLI flag name -> (section, field)
_FLAG_FIELDS = {
    'carrier': ('sounding', 'carrier'),
    'bandwidth': ('sounding', 'bandwidth'),
    'n_tones': ('sounding', 'n_tones'),
    'noise_margin_db': ('dsp', 'noise_margin_db'),
    'dynamic_range_db': ('dsp', 'dynamic_range_db'),
    'interpolate': ('dsp', 'interpolate'),
    'k': ('clustering', 'k'),
    'k_max': ('clustering', 'k_max'),
    'restarts': ('clustering', 'restarts'),
    'gate_ns': ('tracking', 'gate_ns'),
    'max_gap': ('tracking', 'max_gap'),
    'window': ('behavior', 'window'),
    'epsilon_ns_s': ('behavior', 'epsilon_ns_s'),
    'delta_ns_s2': ('behavior', 'delta_ns_s2'),
}

_SECTIONS = {
    'sounding': SoundingOverrides,
    'dsp': DspConfig,
    'clustering': ClusteringConfig,
    'tracking': TrackingConfig,
    'behavior': BehaviorConfig,
}


@dataclass
class PipelineConfig:
    """Main configuration class"""
    scene_path: Optional[str] = None
    trace_path: Optional[str] = None
    label_map_path: Optional[str] = None
    rules_path: str = 'rules/fig6.json'
    output_dir: str = 'output'
    store_path: Optional[str] = None
    seed: Optional[int] = None
    log_level: str = 'INFO'
    sounding: SoundingOverrides = field(default_factory=SoundingOverrides)
    dsp: DspConfig = field(default_factory=DspConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)

    @classmethod
    def from_env(cls) -> 'PipelineConfig':
        return cls(
            rules_path=os.getenv('CHANSEM_RULES', 'rules/fig6.json'),
            output_dir=os.getenv('CHANSEM_OUTPUT_DIR', 'output'),
            store_path=os.getenv('CHANSEM_STORE') or None,
            seed=_env_int('CHANSEM_SEED', None),
            log_level=os.getenv('CHANSEM_LOG', 'INFO'),
            sounding=SoundingOverrides.from_env(),
            dsp=DspConfig.from_env(),
            clustering=ClusteringConfig.from_env(),
            tracking=TrackingConfig.from_env(),
            behavior=BehaviorConfig.from_env()
        )

    @classmethod
    def from_file(cls, path: str, base: Optional['PipelineConfig'] = None) -> 'PipelineConfig':
        """Load a JSON config document on top of `base` (defaults: environment)"""
        base = base or cls.from_env()
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Cannot read config file {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file {path} must hold a JSON object")

        updates: Dict[str, Any] = {}
        top_level = {f.name for f in fields(cls)} - set(_SECTIONS)
        for key, value in data.items():
            if key in _SECTIONS:
                section_cls = _SECTIONS[key]
                known = {f.name for f in fields(section_cls)}
                unknown = set(value) - known
                if unknown:
                    raise ConfigurationError(
                        f"Unknown keys in section '{key}': {', '.join(sorted(unknown))}")
                updates[key] = replace(getattr(base, key), **value)
            elif key in top_level:
                updates[key] = value
            else:
                raise ConfigurationError(f"Unknown config key '{key}'")
        return replace(base, **updates)

    def with_overrides(self, **flags: Any) -> 'PipelineConfig':
        """Apply command-line flags; None means 'not given'"""
        cfg = self
        section_updates: Dict[str, Dict[str, Any]] = {}
        top_updates: Dict[str, Any] = {}
        for name, value in flags.items():
            if value is None:
                continue
            if name in _FLAG_FIELDS:
                section, attr = _FLAG_FIELDS[name]
                section_updates.setdefault(section, {})[attr] = value
            elif hasattr(cfg, name):
                top_updates[name] = value
            else:
                raise ConfigurationError(f"Unknown override '{name}'")
        for section, values in section_updates.items():
            top_updates[section] = replace(getattr(cfg, section), **values)
        return replace(cfg, **top_updates)

    def validate(self, require_input: bool = True) -> List[str]:
        """Validate configuration and return list of errors"""
        errors = []

        if require_input and (self.scene_path is None) == (self.trace_path is None):
            errors.append("Exactly one of scene path or trace path is required")

        if self.sounding.bandwidth is not None and self.sounding.bandwidth <= 0:
            errors.append("bandwidth must be > 0")
        if self.sounding.n_tones is not None and self.sounding.n_tones < 2:
            errors.append("n_tones must be >= 2")
        if self.sounding.carrier is not None and self.sounding.carrier <= 0:
            errors.append("carrier must be > 0")

        if self.dsp.noise_margin_db < 0:
            errors.append("noise_margin_db must be >= 0")
        if self.dsp.dynamic_range_db is not None and self.dsp.dynamic_range_db <= 0:
            errors.append("dynamic_range_db must be > 0 when set")

        if self.clustering.k is not None and self.clustering.k < 1:
            errors.append("k must be >= 1")
        if not 1 <= self.clustering.k_max <= 32:
            errors.append("k_max must be within [1, 32]")
        if self.clustering.restarts < 1:
            errors.append("restarts must be >= 1")

        if self.tracking.gate_ns <= 0:
            errors.append("gate_ns must be > 0")
        if self.tracking.max_gap < 0:
            errors.append("max_gap must be >= 0")

        if self.behavior.window < 2:
            errors.append("window must be >= 2 snapshots")
        if self.behavior.epsilon_ns_s < 0:
            errors.append("epsilon_ns_s must be >= 0")
        if self.behavior.delta_ns_s2 < 0:
            errors.append("delta_ns_s2 must be >= 0")

        if self.log_level.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"Unknown log level '{self.log_level}'")

        return errors

    def output_path(self, name: str) -> Path:
        return Path(self.output_dir) / name
