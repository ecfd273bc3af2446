"""
Pipeline stages behind the CLI subcommands

simulate:     scene document -> snapshot trace file
characterize: trace -> CIR/PDP -> MPCs -> clusters -> trajectories -> semantic map + exports
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from clustering import Cluster, cluster_snapshot, intra_cluster_params
from config import PipelineConfig
from scene_sim import Scene, SnapshotTrace, load_scene, run_scene, with_sounding
from semantic_core import MapMeta, SemanticMap, write_map
from semantics_engine import Association, EventRule, LabelMap, build_semantic_map
from sounding_dsp import Cir, Mpc, Pdp, process_snapshot
from trace_io import write_cir_dump, write_trace
from tracking import Trajectory, cluster_index, track_clusters, trajectory_stats
from validators import validate_scene

logger = logging.getLogger(__name__)

SEMANTIC_MAP_FILE = "semantic_map.jsonl"
TRAJECTORIES_FILE = "trajectories.jsonl"
CLUSTERS_FILE = "clusters.jsonl"
PDP_MATRIX_FILE = "pdp_matrix.csv"
CIR_DUMP_FILE = "cir_pdp.bin"


@dataclass
class CharacterizationResult:
    semantic_map: SemanticMap
    mpcs: List[List[Mpc]]
    clusters: List[List[Cluster]]
    trajectories: List[Trajectory]
    pdp_matrix: np.ndarray
    resolution: float
    floors: List[float] = field(default_factory=list)
    cirs: List[Cir] = field(default_factory=list)
    pdps: List[Pdp] = field(default_factory=list)


def prepare_scene(config: PipelineConfig) -> Scene:
    """Load the configured scene and apply sounding overrides"""
    scene = load_scene(config.scene_path)
    overrides = config.sounding
    scene = with_sounding(scene, overrides.carrier, overrides.bandwidth, overrides.n_tones)
    validate_scene(scene)
    return scene


def simulate(config: PipelineConfig, progress: bool = False) -> Tuple[SnapshotTrace, Path]:
    scene = prepare_scene(config)
    trace = run_scene(scene, progress=progress)
    path = write_trace(trace, config.output_path(f"{scene.name}.trace"))
    logger.info(f"✅ Trace written to {path}")
    return trace, path


def _associations(trace: SnapshotTrace, label_map: Optional[LabelMap]) -> List[Association]:
    if label_map is not None:
        return [label_map] * len(trace)
    if trace.ground_truth is not None:
        return list(trace.ground_truth)
    logger.warning("No label map and no ground truth: every status will be 'unknown'")
    return [None] * len(trace)


def characterize(trace: SnapshotTrace, config: PipelineConfig, rules: Sequence[EventRule],
                 label_map: Optional[LabelMap] = None,
                 progress: bool = False) -> CharacterizationResult:
    """Run every characterization stage over a trace"""
    dsp = config.dsp
    clustering = config.clustering
    seed = clustering.seed if config.seed is None else config.seed

    all_mpcs: List[List[Mpc]] = []
    all_clusters: List[List[Cluster]] = []
    cirs: List[Cir] = []
    pdps: List[Pdp] = []
    floors = []
    resolution = trace.sounding.delay_resolution
    for fr in tqdm(trace.responses, desc="Characterizing", unit="snap", disable=not progress):
        cir, pdp, floor, mpcs = process_snapshot(fr, trace.sounding, dsp.noise_margin_db,
                                                 dsp.dynamic_range_db, dsp.interpolate)
        clusters = cluster_snapshot(mpcs, k=clustering.k, k_max=clustering.k_max,
                                    seed=seed, restarts=clustering.restarts,
                                    min_spread=resolution)
        cirs.append(cir)
        pdps.append(pdp)
        floors.append(floor)
        all_mpcs.append(mpcs)
        all_clusters.append(clusters)

    tracking = config.tracking
    trajectories = track_clusters(all_clusters, tracking.gate, tracking.max_gap)
    meta = MapMeta(trace_id=trace.scene_name, snapshot_rate=trace.snapshot_rate,
                   carrier=trace.sounding.carrier, bandwidth=trace.sounding.bandwidth,
                   n_tones=trace.sounding.n_tones)
    semantic_map = build_semantic_map(all_clusters, trajectories, _associations(trace, label_map),
                                      rules, config.behavior, trace.snapshot_interval,
                                      tracking.gate, meta)

    matrix = np.vstack([p.bins for p in pdps]) if pdps else np.empty((0, trace.sounding.n_tones))
    logger.info(f"📊 {len(trace)} snapshots, {sum(len(m) for m in all_mpcs)} MPCs, "
                f"{sum(len(c) for c in all_clusters)} clusters, {len(trajectories)} trajectories")
    return CharacterizationResult(semantic_map=semantic_map, mpcs=all_mpcs,
                                  clusters=all_clusters, trajectories=trajectories,
                                  pdp_matrix=matrix, resolution=resolution, floors=floors,
                                  cirs=cirs, pdps=pdps)


def trajectory_record(tr: Trajectory) -> Dict:
    stats = trajectory_stats(tr)
    return {
        "id": tr.id,
        "birth_time": tr.birth_time,
        "death_time": tr.death_time,
        "lifetime": stats.lifetime,
        "drift_ns_s": stats.drift_ns_s,
        "fading_db_s": stats.fading_db_s,
        "gap_count": stats.gap_count,
        "times": [s.snapshot_time for s in tr.samples],
        "centroid_delays": [s.centroid_delay for s in tr.samples],
        "total_powers": [s.total_power for s in tr.samples],
        "clusters": tr.cluster_ids,
    }


def cluster_record(cluster: Cluster, trajectory_id: Optional[str]) -> Dict:
    return {"id": cluster.id, "snapshot_time": cluster.snapshot_time,
            "trajectory": trajectory_id, **asdict(intra_cluster_params(cluster))}


def _write_jsonl(path: Path, rows) -> Path:
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path


def write_artifacts(result: CharacterizationResult, output_dir: Path) -> Dict[str, Path]:
    """Semantic map, trajectory / cluster parameter exports, the PDP matrix and the CIR/PDP dump"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    owner = cluster_index(result.trajectories)

    paths = {
        "semantic_map": write_map(result.semantic_map, output_dir / SEMANTIC_MAP_FILE),
        "trajectories": _write_jsonl(output_dir / TRAJECTORIES_FILE,
                                     (trajectory_record(tr) for tr in result.trajectories)),
        "clusters": _write_jsonl(output_dir / CLUSTERS_FILE,
                                 (cluster_record(c, owner.get(c.id))
                                  for clusters in result.clusters for c in clusters)),
    }
    # rows = snapshots, columns = delay bins n·resolution
    pdp_path = output_dir / PDP_MATRIX_FILE
    np.savetxt(pdp_path, result.pdp_matrix, delimiter=",", fmt="%.9e",
               header=f"delay_resolution_s={result.resolution!r}")
    paths["pdp_matrix"] = pdp_path
    paths["cir_dump"] = write_cir_dump(result.cirs, result.pdps, result.floors,
                                       output_dir / CIR_DUMP_FILE, result.semantic_map.meta.trace_id)
    for name, path in paths.items():
        logger.debug(f"Wrote {name} to {path}")
    return paths
