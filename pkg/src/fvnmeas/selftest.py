"""Built-in invariant checks behind the `fvnmeas selftest` subcommand."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from fvnmeas.core import FvnParams, cross_correlation_report, derive_seeds, matched_compress, unit_fvn
from fvnmeas.decompose import random_component
from fvnmeas.fileio import wav_read, wav_write
from fvnmeas.recovery import expansion_coefficients, expansion_matrix, locate_clean_region, orthogonalize, recover
from fvnmeas.sequences import MODE_FOUR_FULL, MODE_FOUR_REDUCED, SequencePlan, assemble_test_signal, weight_matrix


def _check_allpass():
    p = FvnParams(sample_rate=44100, sigma_t=0.05, seed=11)
    fvn = unit_fvn(p)
    fvn2 = unit_fvn(p)
    dev = np.abs(np.abs(np.fft.fft(fvn.waveform)) - 1.0).max()
    same = np.array_equal(fvn.waveform, fvn2.waveform)
    return dev < 1e-10 and same, f"allpass dev={dev:.2e} deterministic={same}"


def _check_pulse_recovery():
    fvn = unit_fvn(FvnParams(sample_rate=44100, sigma_t=0.05, seed=12))
    y = matched_compress(fvn, fvn.waveform)
    n = len(fvn.waveform)
    peak = y[n - 1]
    off = np.abs(np.concatenate([y[:n - 1], y[n:]])).max()
    floor = 20 * np.log10(off / peak)
    return floor < -180.0, f"self-compression floor {floor:.1f} dB"


def _build_plan(mode, seed=1, k_reps=32):
    seeds = derive_seeds(seed, 4)
    fvns = tuple(unit_fvn(FvnParams(sample_rate=44100, sigma_t=0.05, seed=s)) for s in seeds)
    return SequencePlan(n_o=8820, k_reps=k_reps, mode=mode, fvns=fvns, weights=weight_matrix(4))


def _check_orthogonalization():
    plan = _build_plan(MODE_FOUR_FULL)
    x = assemble_test_signal(plan).samples
    rec, region, avg = recover(x, plan)
    peak = np.abs(avg.r_mean).max()
    worst = 0.0
    for m in range(4):
        for start in region.pulse_indices:
            w = np.abs(rec.r_itr[m][start + 400:start + plan.n_o - 400])
            worst = max(worst, w.max())
    floor = 20 * np.log10(worst / peak)
    pulse_ok = abs(avg.r_mean[0] / peak - 1.0) < 1e-9
    return floor < -200.0 and pulse_ok, f"leakage {floor:.1f} dB, unit pulse={pulse_ok}"


def _check_expansion():
    a = expansion_matrix()
    c1, c2 = expansion_coefficients()
    v1 = a.T @ c1
    v2 = a.T @ c2
    ok = (np.array_equal(v1, np.array([0, 1, 0, 0, 0, 1, 0, 0.0]))
          and np.array_equal(v2, np.array([0, 0, 0, 1, 0, 0, 0, 1.0])))
    return ok, f"A^T c1 = {v1.tolist()}"


def _check_noise_calibration():
    plan = _build_plan(MODE_FOUR_REDUCED, seed=2, k_reps=40)
    sigma = 0.05
    rng = np.random.default_rng(77)
    noise = sigma * rng.standard_normal(plan.total_length)
    q4 = matched_compress(plan.fvns[3], noise)
    r4 = orthogonalize(q4, plan.weights.rows[3], plan.n_o)
    region = locate_clean_region(plan, len(q4))
    rc = random_component(r4, region, plan.n_o)
    ratio = np.sqrt(rc.var_ro) / sigma
    return abs(ratio - 1.0) < 0.15, f"sigma ratio {ratio:.3f}"


def _check_wav_roundtrip():
    rng = np.random.default_rng(5)
    x = np.clip(rng.standard_normal(4096) * 0.2, -1, 1)
    with tempfile.TemporaryDirectory() as d:
        pf = os.path.join(d, "f32.wav")
        wav_write(pf, x, 44100, "float32")
        y, fs = wav_read(pf)
        ok_f = np.array_equal(y, x.astype(np.float32).astype(float)) and fs == 44100
        pq = os.path.join(d, "p24.wav")
        wav_write(pq, x, 44100, "pcm24")
        z, _ = wav_read(pq)
        ok_q = np.abs(z - x).max() <= 2.0 ** -23
    return ok_f and ok_q, f"float32 exact={ok_f} pcm24 bound={ok_q}"


def _check_independence():
    f1 = unit_fvn(FvnParams(sample_rate=44100, sigma_t=0.05, seed=21))
    f2 = unit_fvn(FvnParams(sample_rate=44100, sigma_t=0.05, seed=22))
    rep = cross_correlation_report(f1, f2)
    return rep["max_abs"] < 1.0, f"cross max_abs {rep['max_abs']:.3f} rms {rep['rms']:.2e}"


CHECKS = [
    ("allpass/determinism", _check_allpass),
    ("pulse recovery", _check_pulse_recovery),
    ("orthogonalization cancellation", _check_orthogonalization),
    ("expansion coefficients", _check_expansion),
    ("noise calibration", _check_noise_calibration),
    ("wav round-trip", _check_wav_roundtrip),
    ("cross-correlation report", _check_independence),
]


def run_selftest(verbose: bool = True) -> int:
    """Run all built-in checks; returns 0 when everything passes."""
    failures = 0
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        if verbose:
            print(f"selftest: {name:34s} {'PASS' if ok else 'FAIL'}  ({detail})")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1
