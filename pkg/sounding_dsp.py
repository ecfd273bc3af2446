"""
Sounding signal processing: frequency response -> CIR -> PDP -> MPCs
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.signal import find_peaks

from exceptions import SignalProcessingError
from scene_sim import FrequencyResponse, SoundingConfig

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


@dataclass(eq=False)
class Cir:
    """Channel impulse response h(t, τ_n) on the grid τ_n = n·resolution"""
    snapshot_time: float
    taps: np.ndarray
    resolution: float

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.taps)) * self.resolution


@dataclass(eq=False)
class Pdp:
    """Power delay profile |h(t, τ)|² on the CIR delay grid"""
    snapshot_time: float
    bins: np.ndarray
    resolution: float

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.bins)) * self.resolution


@dataclass(frozen=True)
class Mpc:
    """One multipath component of one snapshot"""
    delay: float
    amplitude: float
    power: float
    snapshot_time: float


def to_cir(fr: FrequencyResponse, sounding: SoundingConfig) -> Cir:
    """Unitary inverse DFT of the tone samples (rectangular window)"""
    samples = np.asarray(fr.samples, dtype=complex)
    if samples.ndim != 1 or len(samples) < 2:
        raise SignalProcessingError("A frequency response needs at least 2 tone samples")
    if not np.all(np.isfinite(samples)):
        raise SignalProcessingError(f"Non-finite samples in snapshot at {fr.snapshot_time} s")
    taps = np.fft.ifft(samples, norm="ortho")
    resolution = 1.0 / (len(samples) * sounding.tone_spacing)
    return Cir(snapshot_time=fr.snapshot_time, taps=taps, resolution=resolution)


def to_frequency_response(cir: Cir) -> FrequencyResponse:
    """Forward unitary DFT, the inverse of to_cir"""
    return FrequencyResponse(snapshot_time=cir.snapshot_time,
                             samples=np.fft.fft(cir.taps, norm="ortho"))


def to_pdp(cir: Cir) -> Pdp:
    """PDP(t, τ) = |h(t, τ)|², no smoothing"""
    return Pdp(snapshot_time=cir.snapshot_time, bins=np.abs(cir.taps) ** 2,
               resolution=cir.resolution)


def estimate_noise_floor(pdp: Pdp, margin_db: float = 6.0,
                         dynamic_range_db: Optional[float] = None) -> float:
    """Median bin power times the margin.

    With `dynamic_range_db` set, the floor is also kept within that many dB of
    the strongest bin.
    """
    if len(pdp.bins) < 8:
        raise SignalProcessingError(f"Noise floor needs at least 8 bins, got {len(pdp.bins)}")
    floor = float(np.median(pdp.bins)) * 10.0 ** (margin_db / 10.0)
    if dynamic_range_db is not None:
        floor = max(floor, float(np.max(pdp.bins)) * 10.0 ** (-dynamic_range_db / 10.0))
    return max(floor, _TINY)


def _local_maxima(bins: np.ndarray, floor: float) -> np.ndarray:
    """Indices of circular local maxima strictly above floor"""
    n = len(bins)
    extended = np.concatenate([bins[-1:], bins, bins[:1]])
    peaks, _ = find_peaks(extended, height=floor)
    peaks = peaks - 1
    peaks = peaks[(peaks >= 0) & (peaks < n)]
    return peaks[bins[peaks] > floor]


def _parabolic_offset(bins: np.ndarray, n: int, floor: float) -> float:
    """Sub-bin offset of a peak from a parabola through three log-power bins"""
    size = len(bins)
    left, centre, right = bins[(n - 1) % size], bins[n], bins[(n + 1) % size]
    if left <= floor or right <= floor:
        return 0.0
    y_l, y_c, y_r = (10.0 * math.log10(max(v, _TINY)) for v in (left, centre, right))
    denom = y_l - 2.0 * y_c + y_r
    if denom >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (y_l - y_r) / denom, -0.5, 0.5))


def extract_mpcs(pdp: Pdp, cir: Cir, floor: float, interpolate: bool = True) -> List[Mpc]:
    """PDP local maxima above floor, delay-ascending"""
    if not floor > 0:
        raise SignalProcessingError(f"Floor must be > 0, got {floor}")
    bins = pdp.bins
    span = (len(bins) - 1) * pdp.resolution
    mpcs = []
    for n in _local_maxima(bins, floor):
        offset = _parabolic_offset(bins, int(n), floor) if interpolate else 0.0
        delay = min(max((n + offset) * pdp.resolution, 0.0), span)
        amplitude = float(abs(cir.taps[n]))
        mpcs.append(Mpc(delay=float(delay), amplitude=amplitude, power=amplitude ** 2,
                        snapshot_time=pdp.snapshot_time))
    mpcs.sort(key=lambda m: m.delay)
    return mpcs


def process_snapshot(fr: FrequencyResponse, sounding: SoundingConfig, margin_db: float = 6.0,
                     dynamic_range_db: Optional[float] = None,
                     interpolate: bool = True) -> Tuple[Cir, Pdp, float, List[Mpc]]:
    """to_cir -> to_pdp -> estimate_noise_floor -> extract_mpcs for one snapshot"""
    cir = to_cir(fr, sounding)
    pdp = to_pdp(cir)
    floor = estimate_noise_floor(pdp, margin_db, dynamic_range_db)
    mpcs = extract_mpcs(pdp, cir, floor, interpolate)
    logger.debug(f"t={fr.snapshot_time:.3f} s: floor {floor:.3e}, {len(mpcs)} MPCs")
    return cir, pdp, floor, mpcs
