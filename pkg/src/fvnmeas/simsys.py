"""Simulated measurement targets: loudspeaker pole model, memoryless
nonlinearity, noise injection, and the LPC pink spectral shaper.

Everything here is deterministic given its configuration and seed, so
decomposition claims can be tested against exact ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve, lfilter

from fvnmeas.errors import NumericalError, ParameterError
from fvnmeas.sequences import SequencePlan, assemble_test_signal


@dataclass(frozen=True)
class LoudspeakerModel:
    """Two complex-conjugate pole pairs plus a second-order differentiator.

    The defaults (70 Hz / 50 Hz and 8 kHz / 1.2 kHz pole frequency /
    bandwidth) model a small loudspeaker's low-frequency cut-off and
    high-frequency resonance.  Analog poles map to the z-plane by impulse
    invariance: radius exp(-pi * bw / fs), angle 2 * pi * f0 / fs.
    """

    fs: int
    pole_freqs: tuple = (70.0, 8000.0)
    pole_bandwidths: tuple = (50.0, 1200.0)
    diff_order: int = 2

    def __post_init__(self):
        if self.fs <= 0:
            raise ParameterError("fs must be positive")
        if len(self.pole_freqs) != len(self.pole_bandwidths):
            raise ParameterError("pole_freqs and pole_bandwidths must pair up")
        for f0, bw in zip(self.pole_freqs, self.pole_bandwidths):
            if not (bw > 0):
                raise ParameterError(f"pole bandwidth must be positive, got {bw}")
            if not (0 < f0 < self.fs / 2):
                raise ParameterError(f"pole frequency {f0} outside (0, Nyquist)")
            if np.exp(-np.pi * bw / self.fs) >= 1.0:
                raise ParameterError("pole radius must be inside the unit circle")


def loudspeaker_ir(model: LoudspeakerModel, length: int) -> np.ndarray:
    """Impulse response of the pole model, peak-normalized.

    The cascade of the resonators with the double difference has near-zero
    DC gain (the differencer annihilates constants) and a resonance near
    the second pole frequency.
    """
    if length < 1:
        raise ParameterError("length must be at least 1")
    x = np.zeros(length)
    x[0] = 1.0
    for f0, bw in zip(model.pole_freqs, model.pole_bandwidths):
        r = np.exp(-np.pi * bw / model.fs)
        th = 2.0 * np.pi * f0 / model.fs
        x = lfilter([1.0], [1.0, -2.0 * r * np.cos(th), r * r], x)
    for _ in range(model.diff_order):
        x = np.diff(x, prepend=0.0)
    return x / np.abs(x).max()


@dataclass(frozen=True)
class Nonlinearity:
    """Memoryless asymmetric saturation; alpha controls the asymmetry."""

    alpha: float = 0.3

    def __post_init__(self):
        if self.alpha < 0:
            raise ParameterError("alpha must be non-negative")


def apply_nonlinearity(x: np.ndarray, nl: Nonlinearity) -> np.ndarray:
    """Elementwise 2 / (1 + exp(-2 (x + alpha exp(x)))) - 1 - alpha.

    Saturates at 1 - alpha for x -> +inf and -1 - alpha for x -> -inf (the
    overflow of the inner exp reproduces the limits exactly).  Note the
    small-signal gain is not 1; the decomposition attributes that linear
    part to the linear component.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        u = x + nl.alpha * np.exp(x)
        return 2.0 / (1.0 + np.exp(-2.0 * u)) - 1.0 - nl.alpha


def add_noise(x: np.ndarray, level_db: float | None, seed: int,
              reference_rms: float | None = None) -> np.ndarray:
    """Add seeded white Gaussian noise at level_db relative to the
    reference RMS (default: the RMS of x itself).  ``None`` or -inf leaves
    the signal unchanged."""
    x = np.asarray(x, dtype=float)
    if level_db is None or level_db == -np.inf:
        return x.copy()
    if reference_rms is None:
        reference_rms = float(np.sqrt(np.mean(x ** 2)))
    rng = np.random.default_rng(seed)
    sigma = reference_rms * 10.0 ** (level_db / 20.0)
    return x + sigma * rng.standard_normal(len(x))


def convolve_ir(x: np.ndarray, ir: np.ndarray) -> np.ndarray:
    """FFT-based linear convolution with a system impulse response."""
    ir = np.asarray(ir, dtype=float)
    if ir.size == 0:
        raise ParameterError("impulse response is empty")
    return fftconvolve(np.asarray(x, dtype=float), ir, mode="full")


def levinson_durbin(r: np.ndarray, order: int):
    """Levinson-Durbin recursion on an autocorrelation sequence.

    Returns
    -------
    (a, err)
        Prediction-error polynomial a (a[0] = 1, length order + 1, minimum
        phase) and the final prediction error power.
    """
    r = np.asarray(r, dtype=float)
    if order < 1:
        raise ParameterError("order must be at least 1")
    if len(r) < order + 1:
        raise ParameterError("need order + 1 autocorrelation lags")
    if r[0] <= 0:
        raise NumericalError("autocorrelation is not positive definite")
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        if not np.isfinite(k) or abs(k) >= 1.0:
            raise NumericalError(f"recursion broke down at order {i} (|k| >= 1)")
        a[1:i + 1] = a[1:i + 1] + k * a[i - 1::-1][:i]
        err *= (1.0 - k * k)
        if err <= 0:
            raise NumericalError(f"prediction error vanished at order {i}")
    return a, float(err)


@dataclass(frozen=True)
class ShaperPair:
    """All-pole spectral shaper and its exact FIR inverse.

    ``shape`` filters through 1/A(z) (recursive), ``inverse`` through A(z)
    (non-recursive); the cascade cancels to the identity up to arithmetic.
    """

    order: int
    all_pole_coeffs: np.ndarray
    fir_inverse_coeffs: np.ndarray

    def shape(self, x: np.ndarray) -> np.ndarray:
        return lfilter([1.0], self.all_pole_coeffs, np.asarray(x, dtype=float))

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return lfilter(self.fir_inverse_coeffs, [1.0], np.asarray(x, dtype=float))


def design_pink_shaper(order: int = 44, fs: float = 44100.0,
                       corner_hz: float = 20.0) -> ShaperPair:
    """LPC design of an all-pole filter whose output spectrum falls as 1/f.

    The target power spectrum is 1/f above the corner and flat below it
    (avoiding the 1/f singularity keeps the autocorrelation positive
    definite); the autocorrelation is the inverse transform of the target
    and Levinson-Durbin yields the minimum-phase all-pole coefficients.
    """
    if order < 1:
        raise ParameterError("order must be at least 1")
    if not (0 < corner_hz < fs / 2):
        raise ParameterError("corner_hz must lie inside (0, Nyquist)")
    ngrid = 2 ** 18
    f = np.fft.rfftfreq(ngrid, 1.0 / fs)
    target = 1.0 / np.maximum(f, corner_hz)
    acorr = np.fft.irfft(target)
    a, _ = levinson_durbin(acorr[:order + 1], order)
    return ShaperPair(order=order, all_pole_coeffs=a, fir_inverse_coeffs=a.copy())


def simulate_measurement(plan: SequencePlan, model: LoudspeakerModel | None = None,
                         nl: Nonlinearity | None = None,
                         noise_db: float | None = None,
                         input_db: float = -25.0,
                         seed: int = 0,
                         shaper: ShaperPair | None = None,
                         reverb_ir: np.ndarray | None = None,
                         ir_length: float = 1.0) -> np.ndarray:
    """Virtual measurement: test signal -> attenuation -> nonlinearity ->
    loudspeaker IR -> optional reverberation -> additive noise.

    The test signal (optionally pink-shaped) is normalized to unit sample
    standard deviation over its active span, so ``input_db`` is the level
    feeding the nonlinearity in dBFS re that reference.  ``noise_db`` is
    relative to the RMS of the noiseless observed signal over the active
    span.  The leading guard of the plan stays signal-free for the
    preceding-noise estimate.
    """
    ts = assemble_test_signal(plan, norm="peak")
    x = ts.samples / ts.peak_norm  # raw sum; normalize explicitly below
    if shaper is not None:
        x = shaper.shape(x)
    active = slice(plan.lead_samples, plan.emission_end)
    std = float(np.std(x[active]))
    x = x / std * 10.0 ** (input_db / 20.0)
    if nl is not None:
        x = apply_nonlinearity(x, nl)
    if model is not None:
        ir = loudspeaker_ir(model, int(round(ir_length * model.fs)))
        x = convolve_ir(x, ir)
    if reverb_ir is not None:
        x = convolve_ir(x, reverb_ir)
    ref = float(np.sqrt(np.mean(x[active] ** 2)))
    return add_noise(x, noise_db, seed=seed, reference_rms=ref)
