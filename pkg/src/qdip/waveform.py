"""Piecewise control waveforms.

A control is a sorted, non-overlapping list of segments on ``[0, horizon]``;
the field is zero in the gaps. Two segment kinds cover everything the
synthesis produces:

* ``SampledSegment`` -- zero-order-hold samples of width ``dt`` (steering
  pulses live here),
* ``ResonantSegment`` -- ``amplitude * cos(frequency * (tau - start))``
  (the long interrogation drive).

Amplitudes are field values; the propagator multiplies them by
``||mu|| / ||H0||`` to obtain the normalized coupling. Times are in
normalized units throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError

_OVERLAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SampledSegment:
    start: float
    dt: float
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        if amps.ndim != 1 or amps.size == 0:
            raise SchemaError("sampled segment needs a 1-d list of amplitudes")
        if not np.all(np.isfinite(amps)):
            raise SchemaError("sample amplitudes must be finite")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise SchemaError("sample width must be positive")
        amps = np.array(amps, copy=True)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def end(self) -> float:
        return self.start + self.dt * self.amplitudes.size

    def field(self, tau):
        tau = np.asarray(tau, dtype=float)
        idx = np.floor((tau - self.start) / self.dt).astype(int)
        inside = (tau >= self.start) & (tau < self.end)
        idx = np.clip(idx, 0, self.amplitudes.size - 1)
        return np.where(inside, self.amplitudes[idx], 0.0)


@dataclass(frozen=True)
class ResonantSegment:
    start: float
    duration: float
    amplitude: float
    frequency: float

    def __post_init__(self):
        for name in ("start", "duration", "amplitude", "frequency"):
            if not np.isfinite(getattr(self, name)):
                raise SchemaError(f"resonant segment {name} must be finite")
        if self.duration <= 0:
            raise SchemaError("resonant segment duration must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def field(self, tau):
        tau = np.asarray(tau, dtype=float)
        inside = (tau >= self.start) & (tau < self.end)
        return np.where(inside,
                        self.amplitude * np.cos(self.frequency * (tau - self.start)),
                        0.0)


@dataclass(frozen=True, eq=False)
class ControlWaveform:
    horizon: float
    segments: tuple

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon >= 0):
            raise SchemaError("horizon must be finite and non-negative")
        segs = tuple(self.segments)
        for seg in segs:
            if not isinstance(seg, (SampledSegment, ResonantSegment)):
                raise SchemaError(f"unknown segment type {type(seg).__name__}")
        prev_end = 0.0
        for seg in segs:
            if seg.start < -_OVERLAP_TOL or seg.end > self.horizon + _OVERLAP_TOL:
                raise SchemaError(
                    f"segment [{seg.start:g}, {seg.end:g}] outside [0, {self.horizon:g}]")
            if seg.start < prev_end - _OVERLAP_TOL:
                raise SchemaError(f"segments overlap near tau={seg.start:g}")
            prev_end = seg.end
        object.__setattr__(self, "segments", segs)

    def field(self, tau):
        """Field value(s) at ``tau``; zero in the gaps."""
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(tau)
        for seg in self.segments:
            out = out + seg.field(tau)
        return out if out.ndim else float(out)

    def max_amplitude(self) -> float:
        amps = [0.0]
        for seg in self.segments:
            if isinstance(seg, SampledSegment):
                amps.append(float(np.max(np.abs(seg.amplitudes))))
            else:
                amps.append(abs(seg.amplitude))
        return max(amps)

    def padded_to(self, horizon: float) -> "ControlWaveform":
        """Extend the horizon with zero field (no-op if already that long)."""
        if horizon < self.horizon - _OVERLAP_TOL:
            raise SchemaError("cannot shrink a waveform's horizon")
        return ControlWaveform(max(horizon, self.horizon), self.segments)


def empty_waveform(horizon=0.0) -> ControlWaveform:
    return ControlWaveform(horizon, ())


# --- file I/O --------------------------------------------------------------

def waveform_to_dict(wf: ControlWaveform) -> dict:
    segs = []
    for seg in wf.segments:
        if isinstance(seg, SampledSegment):
            segs.append({
                "kind": "sampled",
                "start": seg.start,
                "dt": seg.dt,
                "amplitudes": seg.amplitudes.tolist(),
            })
        else:
            segs.append({
                "kind": "resonant",
                "start": seg.start,
                "duration": seg.duration,
                "amplitude": seg.amplitude,
                "frequency": seg.frequency,
            })
    return {"horizon": wf.horizon, "segments": segs}


def waveform_from_dict(data: dict) -> ControlWaveform:
    if not isinstance(data, dict) or "horizon" not in data or "segments" not in data:
        raise SchemaError("control file must be an object with horizon and segments")
    segs = []
    for i, raw in enumerate(data["segments"]):
        kind = raw.get("kind") if isinstance(raw, dict) else None
        try:
            if kind == "sampled":
                segs.append(SampledSegment(raw["start"], raw["dt"],
                                           np.asarray(raw["amplitudes"], dtype=float)))
            elif kind == "resonant":
                segs.append(ResonantSegment(raw["start"], raw["duration"],
                                            raw["amplitude"], raw["frequency"]))
            else:
                raise SchemaError(f"segment {i}: unknown kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"segment {i}: {exc}") from exc
    return ControlWaveform(float(data["horizon"]), tuple(segs))


def load_control(path) -> ControlWaveform:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return waveform_from_dict(data)


def save_control(path, wf: ControlWaveform):
    Path(path).write_text(json.dumps(waveform_to_dict(wf), indent=2) + "\n")
