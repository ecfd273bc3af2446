"""
Binary snapshot trace and CIR/PDP dump formats

Both files share one framing:

    magic   8 bytes  b"CHSTRACE" (trace) or b"CHSCIRDP" (CIR/PDP dump)
    version uint16   little-endian
    hlen    uint32   length of the JSON header that follows
    header  JSON

Trace, per snapshot:
    time     float64
    samples  2·N float64, interleaved re/im
    [glen uint32 + JSON ground-truth block]   when the header flag is set

CIR/PDP dump, per snapshot:
    time     float64
    floor    float64   noise floor used for MPC extraction
    taps     2·N float64, interleaved re/im
    pdp      N float64

All numbers are little-endian.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Any, BinaryIO, Dict, List, Sequence, Tuple, Union

import numpy as np

from exceptions import TraceFormatError
from scene_sim import FrequencyResponse, GroundTruthPath, SnapshotTrace, SoundingConfig
from sounding_dsp import Cir, Pdp

logger = logging.getLogger(__name__)

MAGIC = b"CHSTRACE"
TRACE_FORMAT_VERSION = 1
CIR_MAGIC = b"CHSCIRDP"
CIR_FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sHI")
_U32 = struct.Struct("<I")


def _write_preamble(f: BinaryIO, magic: bytes, version: int, header: Dict[str, Any]) -> None:
    encoded = json.dumps(header).encode('utf-8')
    f.write(_PREAMBLE.pack(magic, version, len(encoded)))
    f.write(encoded)


def _write_f64(f: BinaryIO, *values: float) -> None:
    f.write(np.asarray(values, dtype='<f8').tobytes())


def _write_complex(f: BinaryIO, values: np.ndarray) -> None:
    interleaved = np.empty(2 * len(values), dtype='<f8')
    interleaved[0::2] = values.real
    interleaved[1::2] = values.imag
    f.write(interleaved.tobytes())


def _take(buf: memoryview, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(buf):
        raise TraceFormatError(f"Trace truncated while reading {what}")
    return bytes(buf[offset:offset + size])


def _read_file(path: Union[str, Path]) -> memoryview:
    try:
        return memoryview(Path(path).read_bytes())
    except FileNotFoundError:
        raise
    except OSError as e:
        raise TraceFormatError(f"Cannot read {path}: {e}")


def _read_preamble(buf: memoryview, path: Union[str, Path], magic: bytes,
                   version: int) -> Tuple[Dict[str, Any], int]:
    """Check magic and version, return the decoded header and the offset after it"""
    found, found_version, hlen = _PREAMBLE.unpack(_take(buf, 0, _PREAMBLE.size, "preamble"))
    if found != magic:
        raise TraceFormatError(f"{path} is not a {magic.decode()} file (bad magic {found!r})")
    if found_version != version:
        raise TraceFormatError(
            f"Format version {found_version} of {path} not supported (expected {version})")
    offset = _PREAMBLE.size
    try:
        header = json.loads(_take(buf, offset, hlen, "header").decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TraceFormatError(f"Corrupted header in {path}: {e}")
    if not isinstance(header, dict):
        raise TraceFormatError(f"Corrupted header in {path}: not a JSON object")
    return header, offset + hlen


def _read_f64(buf: memoryview, offset: int, count: int, what: str) -> Tuple[np.ndarray, int]:
    raw = np.frombuffer(_take(buf, offset, 8 * count, what), dtype='<f8')
    return raw, offset + 8 * count


def _check_consumed(buf: memoryview, offset: int) -> None:
    if offset != len(buf):
        raise TraceFormatError(f"{len(buf) - offset} trailing bytes after the last snapshot")


# Snapshot traces

def write_trace(trace: SnapshotTrace, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    has_truth = trace.ground_truth is not None
    header = {
        "scene_name": trace.scene_name,
        "carrier": trace.sounding.carrier,
        "bandwidth": trace.sounding.bandwidth,
        "n_tones": trace.sounding.n_tones,
        "snapshot_rate": trace.snapshot_rate,
        "n_snapshots": len(trace.responses),
        "has_ground_truth": has_truth,
    }

    with open(path, 'wb') as f:
        _write_preamble(f, MAGIC, TRACE_FORMAT_VERSION, header)
        for i, fr in enumerate(trace.responses):
            _write_f64(f, fr.snapshot_time)
            _write_complex(f, fr.samples)
            if has_truth:
                block = json.dumps([[p.scatterer, p.label, p.delay, p.amplitude]
                                    for p in trace.ground_truth[i]]).encode('utf-8')
                f.write(_U32.pack(len(block)))
                f.write(block)
    logger.debug(f"Wrote {len(trace.responses)} snapshots to {path}")
    return path


def read_trace(path: Union[str, Path]) -> SnapshotTrace:
    buf = _read_file(path)
    header, offset = _read_preamble(buf, path, MAGIC, TRACE_FORMAT_VERSION)
    try:
        sounding = SoundingConfig(carrier=float(header["carrier"]),
                                  bandwidth=float(header["bandwidth"]),
                                  n_tones=int(header["n_tones"]))
        n_snapshots = int(header["n_snapshots"])
        has_truth = bool(header["has_ground_truth"])
        rate = float(header["snapshot_rate"])
    except (KeyError, TypeError, ValueError) as e:
        raise TraceFormatError(f"Corrupted trace header in {path}: {e}")

    n = sounding.n_tones
    responses = []
    truth = [] if has_truth else None
    for i in range(n_snapshots):
        (t,), offset = _read_f64(buf, offset, 1, f"snapshot {i} time")
        raw, offset = _read_f64(buf, offset, 2 * n, f"snapshot {i} samples")
        responses.append(FrequencyResponse(snapshot_time=float(t), samples=raw[0::2] + 1j * raw[1::2]))
        if has_truth:
            (glen,) = _U32.unpack(_take(buf, offset, 4, f"snapshot {i} ground truth"))
            offset += 4
            try:
                block = json.loads(_take(buf, offset, glen, f"snapshot {i} ground truth").decode('utf-8'))
                truth.append([GroundTruthPath(int(s), str(label), float(d), float(a))
                              for s, label, d, a in block])
            except (UnicodeDecodeError, json.JSONDecodeError, ValueError, TypeError) as e:
                raise TraceFormatError(f"Corrupted ground truth at snapshot {i}: {e}")
            offset += glen
    _check_consumed(buf, offset)

    return SnapshotTrace(scene_name=str(header.get("scene_name", "")), sounding=sounding,
                         snapshot_rate=rate, responses=responses, ground_truth=truth)


# CIR/PDP checkpoints

def write_cir_dump(cirs: Sequence[Cir], pdps: Sequence[Pdp], floors: Sequence[float],
                   path: Union[str, Path], scene_name: str = "") -> Path:
    """Complex taps, PDP bins and floor of every snapshot on one delay grid"""
    if not len(cirs) == len(pdps) == len(floors):
        raise TraceFormatError("CIR, PDP and floor counts differ")
    n_bins = len(cirs[0].taps) if cirs else 0
    resolution = cirs[0].resolution if cirs else 0.0
    if any(len(c.taps) != n_bins or len(p.bins) != n_bins for c, p in zip(cirs, pdps)):
        raise TraceFormatError("Every CIR and PDP in a dump needs the same number of bins")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"scene_name": scene_name, "resolution": resolution, "n_bins": n_bins,
              "n_snapshots": len(cirs)}
    with open(path, 'wb') as f:
        _write_preamble(f, CIR_MAGIC, CIR_FORMAT_VERSION, header)
        for cir, pdp, floor in zip(cirs, pdps, floors):
            _write_f64(f, cir.snapshot_time, floor)
            _write_complex(f, np.asarray(cir.taps, dtype=complex))
            f.write(np.asarray(pdp.bins, dtype='<f8').tobytes())
    logger.debug(f"Wrote {len(cirs)} CIR/PDP snapshots to {path}")
    return path


def read_cir_dump(path: Union[str, Path]) -> Tuple[List[Cir], List[Pdp], List[float]]:
    buf = _read_file(path)
    header, offset = _read_preamble(buf, path, CIR_MAGIC, CIR_FORMAT_VERSION)
    try:
        resolution = float(header["resolution"])
        n = int(header["n_bins"])
        n_snapshots = int(header["n_snapshots"])
    except (KeyError, TypeError, ValueError) as e:
        raise TraceFormatError(f"Corrupted dump header in {path}: {e}")

    cirs, pdps, floors = [], [], []
    for i in range(n_snapshots):
        (t, floor), offset = _read_f64(buf, offset, 2, f"snapshot {i} time")
        raw, offset = _read_f64(buf, offset, 2 * n, f"snapshot {i} taps")
        bins, offset = _read_f64(buf, offset, n, f"snapshot {i} pdp")
        cirs.append(Cir(snapshot_time=float(t), taps=raw[0::2] + 1j * raw[1::2],
                        resolution=resolution))
        pdps.append(Pdp(snapshot_time=float(t), bins=bins.copy(), resolution=resolution))
        floors.append(float(floor))
    _check_consumed(buf, offset)
    return cirs, pdps, floors
