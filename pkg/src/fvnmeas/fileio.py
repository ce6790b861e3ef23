"""File formats: WAV I/O, the plan sidecar, report JSON, and CSV export.

The sidecar carries everything needed to rebuild the exact test signal
bit-for-bit (mode, geometry, seeds, normalization, shaper settings); audio
alone is never sufficient because the FVN seeds cannot be recovered from
the waveform.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from fvnmeas.core import FvnParams, unit_fvn
from fvnmeas.decompose import DecompositionReport
from fvnmeas.errors import ParameterError, WavFormatError
from fvnmeas.sequences import (
    MODE_TWO,
    SequencePlan,
    TestSignal,
    assemble_test_signal,
    weight_matrix,
)

SCHEMA_VERSION = 1

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3

_PCM16_SCALE = 32767.0
_PCM24_SCALE = 8388607.0


def wav_write(path, samples: np.ndarray, fs: int, fmt: str = "float32") -> None:
    """Write a RIFF/WAVE file.

    Parameters
    ----------
    path : str or Path
    samples : ndarray
        Shape (n,) for mono or (n, channels).  Float values; PCM formats
        clip to [-1, 1] and quantize.
    fs : int
        Sample rate in Hz.
    fmt : {"float32", "pcm16", "pcm24"}
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2:
        raise ParameterError("samples must be 1-D or (n, channels)")
    n, nch = samples.shape
    if fmt == "float32":
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
        payload = samples.astype("<f4").tobytes()
    elif fmt == "pcm16":
        tag, bits = _WAVE_FORMAT_PCM, 16
        q = np.clip(np.rint(samples * _PCM16_SCALE), -32768, 32767).astype("<i2")
        payload = q.tobytes()
    elif fmt == "pcm24":
        tag, bits = _WAVE_FORMAT_PCM, 24
        q = np.clip(np.rint(samples * _PCM24_SCALE), -8388608, 8388607).astype("<i4")
        b = q.astype("<i4").tobytes()
        arr = np.frombuffer(b, dtype=np.uint8).reshape(-1, 4)
        payload = arr[:, :3].tobytes()
    else:
        raise ParameterError(f"unsupported format {fmt!r} (use pcm16, pcm24, float32)")

    block_align = nch * bits // 8
    byte_rate = fs * block_align
    fmt_chunk = struct.pack("<HHIIHH", tag, nch, fs, byte_rate, block_align, bits)
    chunks = [b"fmt ", fmt_chunk]
    if tag == _WAVE_FORMAT_IEEE_FLOAT:
        chunks += [b"fact", struct.pack("<I", n)]
    body = b""
    for i in range(0, len(chunks), 2):
        cid, data = chunks[i], chunks[i + 1]
        body += cid + struct.pack("<I", len(data)) + data
        if len(data) % 2:
            body += b"\x00"
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body)


def wav_read(path, channel: int | None = None):
    """Read a RIFF/WAVE file into float64 samples.

    PCM data is scaled by the symmetric full-scale factor used by
    ``wav_write`` so quantized round trips are exact.  Multi-channel files
    require an explicit ``channel`` selection; mono files return a 1-D
    array directly.

    Returns
    -------
    (samples, fs)
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt_info = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4:pos + 8])
        chunk = raw[pos + 8:pos + 8 + size]
        if len(chunk) < size:
            raise WavFormatError(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt_info = struct.unpack("<HHIIHH", chunk[:16])
        elif cid == b"data":
            data = chunk
        pos += 8 + size + (size % 2)
    if fmt_info is None or data is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    tag, nch, fs, _, _, bits = fmt_info
    if tag == 0xFFFE and len(data) >= 0:
        raise WavFormatError(f"{path}: WAVE_FORMAT_EXTENSIBLE is not supported")
    if nch < 1:
        raise WavFormatError(f"{path}: invalid channel count {nch}")

    if tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(float)
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 64:
        x = np.frombuffer(data, dtype="<f8").astype(float)
    elif tag == _WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(float) / _PCM16_SCALE
    elif tag == _WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(data, dtype=np.uint8)
        if len(b) % 3:
            raise WavFormatError(f"{path}: 24-bit data size not a multiple of 3")
        b = b.reshape(-1, 3)
        val = (b[:, 0].astype(np.int32)
               | (b[:, 1].astype(np.int32) << 8)
               | (b[:, 2].astype(np.int32) << 16))
        val = np.where(val & 0x800000, val - 0x1000000, val)
        x = val.astype(float) / _PCM24_SCALE
    elif tag == _WAVE_FORMAT_PCM and bits == 32:
        x = np.frombuffer(data, dtype="<i4").astype(float) / 2147483647.0
    else:
        raise WavFormatError(f"{path}: unsupported format tag={tag} bits={bits}")

    if len(x) % nch:
        raise WavFormatError(f"{path}: data size not a multiple of the frame size")
    x = x.reshape(-1, nch)
    if nch == 1:
        return x[:, 0], int(fs)
    if channel is None:
        raise ParameterError(
            f"{path} has {nch} channels; select one with channel=0..{nch - 1}"
        )
    if not (0 <= channel < nch):
        raise ParameterError(f"channel {channel} out of range for {nch} channels")
    return x[:, channel], int(fs)


@dataclass(frozen=True)
class PlanSidecar:
    """JSON-serializable description sufficient to rebuild a TestSignal
    bit-for-bit."""

    mode: str
    sample_rate: int
    sigma_t: float
    phi_max: float
    c_mag: float
    fft_length: int
    n_o: int
    k_reps: int
    seeds: tuple
    norm: str
    peak_norm: float
    shaper_enabled: bool = False
    shaper_order: int = 44
    shaper_corner_hz: float = 20.0
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        d = {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "sample_rate": self.sample_rate,
            "sigma_t": self.sigma_t,
            "phi_max": self.phi_max,
            "c_mag": self.c_mag,
            "fft_length": self.fft_length,
            "n_o": self.n_o,
            "k_reps": self.k_reps,
            "seeds": list(self.seeds),
            "norm": self.norm,
            "peak_norm": self.peak_norm,
            "shaper": {
                "enabled": self.shaper_enabled,
                "order": self.shaper_order,
                "corner_hz": self.shaper_corner_hz,
            },
        }
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PlanSidecar":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"sidecar is not valid JSON: {exc}") from exc
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ParameterError(
                f"unsupported sidecar schema_version {d.get('schema_version')!r}"
            )
        sh = d.get("shaper", {})
        try:
            return cls(
                mode=d["mode"],
                sample_rate=int(d["sample_rate"]),
                sigma_t=float(d["sigma_t"]),
                phi_max=float(d["phi_max"]),
                c_mag=float(d["c_mag"]),
                fft_length=int(d["fft_length"]),
                n_o=int(d["n_o"]),
                k_reps=int(d["k_reps"]),
                seeds=tuple(int(s) for s in d["seeds"]),
                norm=d["norm"],
                peak_norm=float(d["peak_norm"]),
                shaper_enabled=bool(sh.get("enabled", False)),
                shaper_order=int(sh.get("order", 44)),
                shaper_corner_hz=float(sh.get("corner_hz", 20.0)),
            )
        except KeyError as exc:
            raise ParameterError(f"sidecar missing field {exc}") from exc

    def build_plan(self) -> SequencePlan:
        """Regenerate the SequencePlan (FVNs from the recorded seeds)."""
        n_analysis = 2 if self.mode == MODE_TWO else 4
        if len(self.seeds) < n_analysis:
            raise ParameterError(
                f"sidecar has {len(self.seeds)} seeds; mode {self.mode} needs {n_analysis}"
            )
        fvns = tuple(
            unit_fvn(FvnParams(
                sample_rate=self.sample_rate,
                sigma_t=self.sigma_t,
                phi_max=self.phi_max,
                c_mag=self.c_mag,
                fft_length=self.fft_length,
                seed=s,
            ))
            for s in self.seeds[:n_analysis]
        )
        return SequencePlan(
            n_o=self.n_o,
            k_reps=self.k_reps,
            mode=self.mode,
            fvns=fvns,
            weights=weight_matrix(n_analysis),
        )

    def rebuild_test_signal(self) -> TestSignal:
        return assemble_test_signal(self.build_plan(), norm=self.norm)


def make_sidecar(ts: TestSignal, seeds, shaper_enabled: bool = False,
                 shaper_order: int = 44, shaper_corner_hz: float = 20.0) -> PlanSidecar:
    p = ts.plan.fvns[0].params
    return PlanSidecar(
        mode=ts.plan.mode,
        sample_rate=p.sample_rate,
        sigma_t=p.sigma_t,
        phi_max=p.phi_max,
        c_mag=p.c_mag,
        fft_length=p.fft_length,
        n_o=ts.plan.n_o,
        k_reps=ts.plan.k_reps,
        seeds=tuple(int(s) for s in seeds),
        norm=ts.norm,
        peak_norm=ts.peak_norm,
        shaper_enabled=shaper_enabled,
        shaper_order=shaper_order,
        shaper_corner_hz=shaper_corner_hz,
    )


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def report_to_dict(report: DecompositionReport, provenance: dict | None = None) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "sample_rate": report.sample_rate,
        "n_o": report.n_o,
        "alignment": report.alignment,
        "l_count": report.l_count,
        "component_levels_dbfs": report.component_levels,
        "var_rv": report.var_rv,
        "var_ro": report.var_ro,
        "var_n": report.var_n,
        "frequency_hz": [float(v) for v in report.freq],
        "linear_db": [float(v) for v in report.linear_spectrum_db],
        "nonlinear_db": [float(v) for v in report.nonlinear_spectrum_db],
        "random_db": [float(v) for v in report.random_spectrum_db],
        "preceding_db": (None if report.preceding_spectrum_db is None
                         else [float(v) for v in report.preceding_spectrum_db]),
    }
    if provenance:
        d["provenance"] = provenance
    return d


def write_report_json(report: DecompositionReport, path, provenance: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report, provenance), fh, indent=2)
        fh.write("\n")


def csv_export(report: DecompositionReport, path) -> None:
    """Plot-ready CSV: frequency_hz, linear_db, nonlinear_db, random_db,
    preceding_db (RFC 4180, one header row, deterministic formatting)."""
    pre = report.preceding_spectrum_db
    lines = ["frequency_hz,linear_db,nonlinear_db,random_db,preceding_db"]
    for i, f in enumerate(report.freq):
        p = "" if pre is None else f"{pre[i]:.6f}"
        lines.append(
            f"{f:.6f},{report.linear_spectrum_db[i]:.6f},"
            f"{report.nonlinear_spectrum_db[i]:.6f},"
            f"{report.random_spectrum_db[i]:.6f},{p}"
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")
