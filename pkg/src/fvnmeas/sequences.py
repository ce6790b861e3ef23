"""Orthogonal FVN sequences and test-signal assembly.

A test signal is a sum of FVN pulse trains: sequence m repeats its own
unit FVN every n_o samples, sign-modulated by a binary weight row.  The
rows are mutually orthogonal, which is what later lets the recovery stage
cancel the cross-correlation between sequences exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fvnmeas.core import UnitFvn
from fvnmeas.errors import ParameterError

MODE_TWO = "two_seq"
MODE_FOUR_FULL = "four_seq_full"
MODE_FOUR_REDUCED = "four_seq_reduced"
MODES = (MODE_TWO, MODE_FOUR_FULL, MODE_FOUR_REDUCED)

MAX_TEST_SIGNAL_SAMPLES = 2 ** 27


@dataclass(frozen=True)
class WeightMatrix:
    """Binary (+/-1) weight rows; any two distinct rows are orthogonal."""

    rows: np.ndarray
    period: int

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2 or rows.shape[1] != self.period:
            raise ParameterError("rows must be a 2-D array with `period` columns")
        if not np.all(np.abs(rows) == 1):
            raise ParameterError("weight entries must be +1 or -1")
        gram = rows @ rows.T
        if not np.array_equal(gram, np.eye(len(rows)) * self.period):
            raise ParameterError("weight rows must be mutually orthogonal")


def weight_matrix(m_sequences: int) -> WeightMatrix:
    """Binary weight rows for 2 or 4 orthogonal sequences.

    For two sequences the second row flips polarity every repetition; for
    four sequences the rows are the four orthogonal rows of the 4 x 8
    matrix B4.
    """
    if m_sequences == 2:
        rows = np.array([[1, 1], [1, -1]], dtype=float)
        return WeightMatrix(rows=rows, period=2)
    if m_sequences == 4:
        rows = np.array([
            [1, 1, 1, 1, 1, 1, 1, 1],
            [1, -1, 1, -1, 1, -1, 1, -1],
            [1, 1, -1, -1, 1, 1, -1, -1],
            [1, 1, 1, 1, -1, -1, -1, -1],
        ], dtype=float)
        return WeightMatrix(rows=rows, period=8)
    raise ParameterError(f"unsupported sequence count {m_sequences} (use 2 or 4)")


@dataclass(frozen=True)
class SequencePlan:
    """Geometry and content of one test signal.

    Attributes
    ----------
    n_o : int
        Allocation interval between FVN repetitions, samples.
    k_reps : int
        Number of repetitions K per sequence.
    mode : str
        One of ``two_seq``, ``four_seq_full``, ``four_seq_reduced``.
        Reduced mode synthesizes sequences 1-3 only but analyzes with all
        four FVNs (the fourth is the null channel).
    fvns : tuple of UnitFvn
        One per analysis sequence (2 or 4), pairwise distinct seeds.
    weights : WeightMatrix
    """

    n_o: int
    k_reps: int
    mode: str
    fvns: tuple
    weights: WeightMatrix

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.n_o < 1:
            raise ParameterError("n_o must be at least 1")
        if self.k_reps < 2 * self.weights.period:
            raise ParameterError(
                f"k_reps must be at least two weight cycles ({2 * self.weights.period})"
            )
        n_seq = 2 if self.mode == MODE_TWO else 4
        if len(self.fvns) != n_seq:
            raise ParameterError(f"mode {self.mode} needs {n_seq} FVNs, got {len(self.fvns)}")
        if len(self.weights.rows) != n_seq:
            raise ParameterError("weight matrix row count must match FVN count")
        seeds = [f.params.seed for f in self.fvns]
        if len(set(seeds)) != len(seeds):
            raise ParameterError("FVN seeds must be pairwise distinct")
        fs = {f.params.sample_rate for f in self.fvns}
        nf = {f.params.fft_length for f in self.fvns}
        if len(fs) != 1 or len(nf) != 1:
            raise ParameterError("all FVNs must share sample_rate and fft_length")

    @property
    def period(self) -> int:
        return self.weights.period

    @property
    def sample_rate(self) -> int:
        return self.fvns[0].params.sample_rate

    @property
    def fft_length(self) -> int:
        return self.fvns[0].params.fft_length

    @property
    def lead_samples(self) -> int:
        """Silent guard before the first (and after the last) FVN buffer."""
        return self.period * self.n_o

    @property
    def synthesis_indices(self) -> tuple:
        if self.mode == MODE_FOUR_REDUCED:
            return (0, 1, 2)
        return tuple(range(len(self.fvns)))

    @property
    def emission_end(self) -> int:
        """End of the last FVN buffer (start of the tail guard)."""
        return self.lead_samples + (self.k_reps - 1) * self.n_o + self.fft_length

    @property
    def total_length(self) -> int:
        return self.emission_end + self.lead_samples

    @property
    def nominal_alignment(self) -> int:
        """Sample index where the pulse of repetition k=0 lands in a
        full-length matched-compression output (identity system)."""
        return self.lead_samples + self.fft_length - 1


@dataclass(frozen=True)
class TestSignal:
    """Assembled test signal.  ``peak_norm`` is the scale factor that was
    applied to the raw sum (samples = raw * peak_norm)."""

    samples: np.ndarray
    plan: SequencePlan
    peak_norm: float
    norm: str = "peak"


def build_sequence(fvn: UnitFvn, row: np.ndarray, n_o: int, k_reps: int,
                   length: int | None = None) -> np.ndarray:
    """One FVN pulse train: the waveform overlap-added every n_o samples,
    sign-modulated by the weight row cycled over repetitions.

    The buffer start (not the envelope center) of repetition k sits at
    k * n_o; recovery compensates the resulting fft_length - 1 compression
    delay through the plan geometry.
    """
    if n_o < 1:
        raise ParameterError("n_o must be at least 1")
    if k_reps < 1:
        raise ParameterError("k_reps must be at least 1")
    row = np.asarray(row, dtype=float)
    w = fvn.waveform
    need = (k_reps - 1) * n_o + len(w)
    if length is None:
        length = need
    elif length < need:
        raise ParameterError("length too short for the requested repetitions")
    out = np.zeros(length)
    for k in range(k_reps):
        out[k * n_o: k * n_o + len(w)] += w * row[k % len(row)]
    return out


def assemble_test_signal(plan: SequencePlan, norm: str = "peak") -> TestSignal:
    """Sum the per-sequence pulse trains and normalize.

    ``norm="peak"`` scales the peak magnitude to 1; ``norm="std"`` scales
    the sample standard deviation over the active span (first to last FVN
    buffer) to 1, in which case samples may exceed 1.  The applied factor
    is recorded in ``peak_norm`` either way.
    """
    if norm not in ("peak", "std"):
        raise ParameterError(f"unknown normalization {norm!r}")
    if plan.total_length > MAX_TEST_SIGNAL_SAMPLES:
        raise ParameterError(
            f"test signal would be {plan.total_length} samples "
            f"(limit {MAX_TEST_SIGNAL_SAMPLES})"
        )
    x = np.zeros(plan.total_length)
    lead = plan.lead_samples
    for m in plan.synthesis_indices:
        seq = build_sequence(plan.fvns[m], plan.weights.rows[m], plan.n_o, plan.k_reps)
        x[lead: lead + len(seq)] += seq
    if norm == "peak":
        ref = np.abs(x).max()
    else:
        ref = float(np.std(x[lead: plan.emission_end]))
    if ref == 0.0:
        raise ParameterError("assembled signal is identically zero")
    scale = 1.0 / ref
    return TestSignal(samples=x * scale, plan=plan, peak_norm=scale, norm=norm)
