"""
Validation utilities for scenes, label maps and event rules
"""
import math
from typing import Iterable, List, Sequence

from exceptions import ConfigurationError, SceneError, RuleError
from semantic_core import BehaviorKind
from scene_sim import Scene, SPEED_OF_LIGHT


def validate_scene(scene: Scene, require_scatterers: bool = True) -> None:
    """Validate a scene against its documented invariants"""
    if not scene.duration >= 0:
        raise SceneError(f"Scene duration must be >= 0, got {scene.duration}")
    if not scene.snapshot_rate > 0:
        raise SceneError(f"Snapshot rate must be > 0, got {scene.snapshot_rate}")
    if require_scatterers and not scene.scatterers:
        raise SceneError("Scene needs at least one scatterer")

    sounding = scene.sounding
    if sounding.n_tones < 2:
        raise SceneError(f"Sounding needs at least 2 tones, got {sounding.n_tones}")
    if not sounding.bandwidth > 0:
        raise SceneError(f"Bandwidth must be > 0, got {sounding.bandwidth}")

    if not scene.platform.covers(scene.duration):
        raise SceneError("Platform track does not cover the scene duration")
    for i, s in enumerate(scene.scatterers):
        if not s.label:
            raise SceneError(f"Scatterer {i} has an empty label")
        if not 0.0 < s.reflectivity <= 1.0:
            raise SceneError(
                f"Scatterer {i} ({s.label}) reflectivity {s.reflectivity} not in (0, 1]")
        if not s.track.covers(scene.duration):
            raise SceneError(f"Scatterer {i} ({s.label}) track does not cover the scene duration")

    # Relative position is linear between breakpoints, so its norm peaks at one of them
    limit_distance = SPEED_OF_LIGHT * sounding.max_unambiguous_delay / 2.0
    platform_times = {w[0] for w in scene.platform.waypoints}
    for i, s in enumerate(scene.scatterers):
        times = sorted({0.0, scene.duration} | {
            t for t in platform_times | {w[0] for w in s.track.waypoints}
            if 0.0 <= t <= scene.duration})
        worst = 0.0
        for t in times:
            sx, sy = s.track.position(t)
            px, py = scene.platform.position(t)
            worst = max(worst, math.hypot(sx - px, sy - py))
        if worst >= limit_distance:
            raise SceneError(
                f"Scatterer {i} ({s.label}) reaches {worst:.2f} m, beyond the "
                f"unambiguous range {limit_distance:.2f} m")


def validate_window(lo: float, hi: float, what: str) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ValueError(f"{what} window [{lo}, {hi}] is not well-ordered")


def validate_rule_names(names: Sequence[str]) -> None:
    seen = set()
    for name in names:
        if not name:
            raise RuleError("Rule name cannot be empty")
        if name in seen:
            raise RuleError(f"Duplicate rule name '{name}'")
        seen.add(name)


def validate_label_map(entries) -> None:
    """Windows well-ordered, labels non-empty, domain known"""
    for i, entry in enumerate(entries):
        if not entry.label:
            raise ConfigurationError(f"Label map entry {i} has an empty label")
        if entry.domain not in ("delay", "distance"):
            raise ConfigurationError(f"Label map entry {i} has unknown domain '{entry.domain}'")
        try:
            validate_window(entry.lo, entry.hi, f"Entry {i} {entry.domain}")
        except ValueError as e:
            raise ConfigurationError(str(e))
        if entry.t_lo > entry.t_hi:
            raise ConfigurationError(f"Entry {i} time window [{entry.t_lo}, {entry.t_hi}] is not well-ordered")


def validate_rules(rules) -> None:
    """Patterns non-empty, references resolved to strictly lower levels"""
    validate_rule_names([r.name for r in rules])
    levels = {r.name: r.level for r in rules}
    for rule in rules:
        if not rule.pattern:
            raise RuleError(f"Rule '{rule.name}' has an empty pattern")
        if rule.level < 0:
            raise RuleError(f"Rule '{rule.name}' has negative level {rule.level}")
        if rule.min_overlap < 0:
            raise RuleError(f"Rule '{rule.name}' has negative min_overlap")
        if rule.level == 0:
            for label, kind in rule.pattern:
                if not label:
                    raise RuleError(f"Rule '{rule.name}' has an empty status label")
                try:
                    BehaviorKind(kind)
                except ValueError:
                    raise RuleError(f"Rule '{rule.name}' uses unknown behavior kind '{kind}'")
            continue
        if rule.max_seq_gap < 0:
            raise RuleError(f"Rule '{rule.name}' has negative max_seq_gap")
        for name in rule.pattern:
            if name not in levels:
                raise RuleError(f"Rule '{rule.name}' references unknown event '{name}'")
            if levels[name] >= rule.level:
                raise RuleError(
                    f"Rule '{rule.name}' (level {rule.level}) references '{name}' "
                    f"of level {levels[name]}")
        if rule.level - 1 not in {levels[name] for name in rule.pattern}:
            raise RuleError(f"Rule '{rule.name}' has no level-{rule.level - 1} sub-event")

