"""Pulse compression, orthogonalization, synchronous averaging, expansion.

The observed signal is compressed with each time-reversed analysis FVN,
shift-averaged with the binary weight rows (which cancels cross-sequence
correlation exactly in the interior), and synchronously averaged over the
clean region.  Orthogonal-row algebra also yields a response of four times
the repetition interval from the reduced (three-sequence) test signal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from fvnmeas.core import matched_compress
from fvnmeas.errors import FvnError, ParameterError, RegionError, SyncError
from fvnmeas.sequences import MODE_FOUR_FULL, MODE_FOUR_REDUCED, MODE_TWO, SequencePlan

# Envelope level that defines the effective FVN extent for region guards.
# The -100 dB extent is not enough: cross-correlation tails are still above
# the -200 dB cancellation floor there (see README).
GUARD_FLOOR_DB = -180.0


@dataclass(frozen=True)
class CleanRegion:
    """Synchronous-averaging grid inside the cross-correlation-free span.

    ``pulse_indices`` are absolute sample positions of consecutive slice
    starts, spaced exactly ``period_stride`` = period * n_o apart.
    """

    pulse_indices: np.ndarray
    period_stride: int
    alignment: int
    n_o: int

    def __post_init__(self):
        idx = np.asarray(self.pulse_indices)
        if idx.size == 0:
            raise RegionError("clean region is empty")
        if idx.size > 1 and not np.all(np.diff(idx) == self.period_stride):
            raise ParameterError("pulse indices must be spaced by period_stride")

    def shifted(self, offset_samples: int) -> "CleanRegion":
        return replace(self, pulse_indices=self.pulse_indices + offset_samples)

    @property
    def first_slot(self) -> int:
        return int((self.pulse_indices[0] - self.alignment) // self.n_o)

    @property
    def last_slot_end(self) -> int:
        """One past the last repetition slot covered by the region."""
        period = self.period_stride // self.n_o
        return int((self.pulse_indices[-1] - self.alignment) // self.n_o) + period


@dataclass(frozen=True)
class RecoveredSet:
    """Per-sequence compressed (q) and orthogonalized (r_itr) signals."""

    q: list
    r_itr: list
    plan: SequencePlan
    alignment: int


@dataclass(frozen=True)
class AveragedResponse:
    """Synchronously averaged responses.

    ``r_per_seq`` holds one length-n_o response per analysis sequence,
    ``r_mean`` their combination (all four in full mode, the first three in
    reduced mode), and ``r_xpd`` the optional expanded response of length
    4 * n_o (reduced mode only).
    """

    r_per_seq: list
    r_mean: np.ndarray | None
    r_xpd: np.ndarray | None


def compress_all(observed: np.ndarray, plan: SequencePlan) -> list:
    """Convolve the observed signal with every time-reversed analysis FVN.

    Recovered pulses land on k * n_o + alignment where alignment is the
    plan's nominal alignment plus any system bulk delay.
    """
    observed = np.asarray(observed, dtype=float)
    if len(observed) < plan.emission_end:
        raise ParameterError(
            f"observed signal too short: {len(observed)} < {plan.emission_end}"
        )
    return [matched_compress(f, observed) for f in plan.fvns]


def detect_alignment(q1: np.ndarray, plan: SequencePlan, tol_fraction: float = 0.25) -> int:
    """Locate the recovered pulse grid from the peak of the first
    compressed signal, cross-checked against the plan geometry.

    The peak offset modulo n_o must stay within ``tol_fraction * n_o`` of
    the nominal grid (a causal system puts its response peak shortly after
    the grid position); a larger mismatch raises SyncError.  Returns the
    grid-snapped alignment of repetition k=0.
    """
    expected = plan.nominal_alignment
    peak = int(np.argmax(np.abs(q1)))
    offset = (peak - expected) % plan.n_o
    if offset > plan.n_o // 2:
        offset -= plan.n_o
    if abs(offset) > tol_fraction * plan.n_o:
        raise SyncError(
            f"pulse grid offset {offset} samples exceeds {tol_fraction} * n_o; "
            "recording does not match the plan geometry"
        )
    return expected


def orthogonalize(q_m: np.ndarray, row: np.ndarray, n_o: int) -> np.ndarray:
    """Cyclic-weight shift average: r[n] = (1/P) sum_k q[n - k*n_o] * row[k].

    Out-of-range samples are treated as zero; only the weight index is
    cyclic, the data is never indexed circularly.
    """
    if n_o < 1:
        raise ParameterError("n_o must be at least 1")
    q_m = np.asarray(q_m, dtype=float)
    row = np.asarray(row, dtype=float)
    period = len(row)
    if len(q_m) <= period * n_o:
        raise ParameterError("signal shorter than one weight cycle")
    out = row[0] * q_m.copy()
    for k in range(1, period):
        out[k * n_o:] += row[k] * q_m[:len(q_m) - k * n_o]
    return out / period


def orthogonalize_two_seq(q1: np.ndarray, q2: np.ndarray, n_o: int):
    """Two-sequence orthogonalization: the same-sign and flipped-sign
    two-term averages that cancel the mutual leakage."""
    r1 = orthogonalize(q1, np.array([1.0, 1.0]), n_o)
    r2 = orthogonalize(q2, np.array([1.0, -1.0]), n_o)
    return r1, r2


def extra_two_seq(q_x: np.ndarray, n_o: int) -> np.ndarray:
    """Cancel both two-sequence pulse trains from a third-FVN compression:
    r[n] = (1/4) sum_k b_k q_x[n - k*n_o] with b = (1, 1, -1, -1).

    For a linear time-invariant system the interior of the output carries
    no test-signal component at all.
    """
    q_x = np.asarray(q_x, dtype=float)
    weights = np.array([1.0, 1.0, -1.0, -1.0])
    out = weights[0] * q_x.copy()
    for k in range(1, 4):
        if k * n_o < len(q_x):
            out[k * n_o:] += weights[k] * q_x[:len(q_x) - k * n_o]
    return out / 4.0


def coherent_offset(row: np.ndarray) -> int:
    """Slot offset (0-based) at which the orthogonalized self-pattern of a
    weight row equals +1, i.e. where a synchronous-averaging slice starts
    on a positive unit pulse.

    The shift-sum of a row against its own pulse train produces the cyclic
    self-pattern (1/P) sum_k row[(j-k) mod P] * row[k] at slot j; each row
    of the four-sequence matrix has at least one +1 slot (0, 0, 1, 3).
    """
    row = np.asarray(row, dtype=float)
    period = len(row)
    for j in range(period):
        val = sum(row[(j - k) % period] * row[k] for k in range(period)) / period
        if val == 1.0:
            return j
    raise FvnError("weight row has no coherent slot")


def locate_clean_region(plan: SequencePlan, analyzed_len: int, alignment: int | None = None,
                        extra_tail_slots: int = 0) -> CleanRegion:
    """Find the synchronous-averaging grid inside the span where
    cross-correlation cancellation is complete.

    A slice window starting at repetition slot j0 uses shifted data from
    slots j0 - (period-1) .. j0 + (period-1), each smeared by the FVN
    envelope extent; the emission pattern must be fully periodic over that
    reach, which trims ``period + ceil(extent / n_o)`` slots from each end
    of the K repetitions.  The extent is measured at the -180 dB envelope
    level of the plan's FVNs.

    Raises RegionError with the minimum usable K when nothing remains.
    """
    if alignment is None:
        alignment = plan.nominal_alignment
    period = plan.period
    n_o = plan.n_o
    extent = max(f.envelope_extent(GUARD_FLOOR_DB) for f in plan.fvns)
    e_slots = int(np.ceil(extent / n_o))
    j_min = period + e_slots
    j_max = plan.k_reps - period - e_slots - extra_tail_slots
    k_min = 2 * (period + e_slots) + extra_tail_slots
    if j_min > j_max:
        raise RegionError(
            f"no clean region for K={plan.k_reps}; needs K >= {k_min} "
            f"(guards: {e_slots} envelope slots + {period} period slots per side)"
        )
    starts = []
    j = j_min
    stride = period * n_o
    while j <= j_max:
        pos = alignment + j * n_o
        if pos + stride + extent > analyzed_len:
            break
        starts.append(pos)
        j += period
    if not starts:
        raise RegionError(
            f"analyzed signal too short for the clean region (needs K >= {k_min})"
        )
    return CleanRegion(pulse_indices=np.asarray(starts, dtype=np.int64),
                       period_stride=stride, alignment=alignment, n_o=n_o)


def synchronous_average(r_itr_m: np.ndarray, region: CleanRegion, n_o: int) -> np.ndarray:
    """Average length-n_o slices of the orthogonalized signal over the
    region's pulse starts (fixed summation order)."""
    r_itr_m = np.asarray(r_itr_m, dtype=float)
    out = np.zeros(n_o)
    for start in region.pulse_indices:
        out += r_itr_m[start:start + n_o]
    return out / len(region.pulse_indices)


def combine_responses(r_per_seq, mode: str) -> np.ndarray:
    """Mean of the per-sequence responses: all four in full mode, the
    first three in reduced mode (the fourth is the null channel)."""
    if mode == MODE_FOUR_FULL:
        used = r_per_seq[:4]
    elif mode == MODE_FOUR_REDUCED:
        used = r_per_seq[:3]
    else:
        raise ParameterError(f"combine_responses is undefined for mode {mode!r}")
    return np.mean(used, axis=0)


def expansion_matrix() -> np.ndarray:
    """4 x 8 matrix of the cyclic self-convolutions of the four-sequence
    weight rows: a[m, j] = (1/8) sum_k b[k] * b[(j - k) mod 8] with 0-based
    cyclic indexing.

    Column j is the pulse amplitude that the orthogonalized m-th sequence
    shows at repetition slot j of its 8-slot cycle.
    """
    from fvnmeas.sequences import weight_matrix
    rows = weight_matrix(4).rows
    a = np.zeros((4, 8))
    for m in range(4):
        b = rows[m]
        for j in range(8):
            acc = 0.0
            for k in range(8):
                acc += b[k] * b[(j - k) % 8]
            a[m, j] = acc / 8.0
    return a


def expansion_coefficients():
    """Combination weights c1 = (1,-1,2,0)/4 and c2 = (1,-1,-2,0)/4 that
    collapse the orthogonalized signals to one unit pulse per 4 * n_o.

    Verifies that A^T c has period-4 structure with exactly one entry equal
    to 1 per period and zeros elsewhere.
    """
    c1 = np.array([1.0, -1.0, 2.0, 0.0]) / 4.0
    c2 = np.array([1.0, -1.0, -2.0, 0.0]) / 4.0
    a = expansion_matrix()
    for c in (c1, c2):
        v = a.T @ c
        for half in (v[:4], v[4:]):
            nz = np.nonzero(half != 0.0)[0]
            if len(nz) != 1 or half[nz[0]] != 1.0:
                raise FvnError("expansion coefficients failed verification")
        if not np.array_equal(v[:4], v[4:]):
            raise FvnError("expansion pattern is not period-4")
    return c1, c2


def _xpd_slot_phase() -> int:
    """Repetition-slot phase (mod 4) of the expanded-response pulses."""
    c1, _ = expansion_coefficients()
    v = expansion_matrix().T @ c1
    return int(np.nonzero(v != 0.0)[0][0])


def expand_response(r_itr, region: CleanRegion, n_o: int) -> np.ndarray:
    """Expanded response of length 4 * n_o from the reduced-mode
    orthogonalized signals.

    Combines r_itr 1..3 with the first expansion coefficient vector, then
    synchronously averages 4*n_o slices at the slots where the combined
    pulse pattern is a positive unit pulse (slot phase 1 mod 4).
    """
    if len(r_itr) < 3:
        raise ParameterError("expansion needs the first three orthogonalized signals")
    c1, _ = expansion_coefficients()
    r_xtmp = c1[0] * r_itr[0] + c1[1] * r_itr[1] + c1[2] * r_itr[2]
    phase = _xpd_slot_phase()
    first = region.first_slot
    last_end = region.last_slot_end
    start_slot = first + ((phase - first) % 4)
    starts = []
    s = start_slot
    while s + 4 <= last_end:
        starts.append(region.alignment + s * n_o)
        s += 4
    if not starts:
        raise RegionError("clean region too small for expansion slices")
    out = np.zeros(4 * n_o)
    for p in starts:
        out += r_xtmp[p:p + 4 * n_o]
    return out / len(starts)


def recover(observed: np.ndarray, plan: SequencePlan, alignment: int | None = None,
            expand: bool | None = None):
    """Full recovery pipeline: compress, orthogonalize, locate the clean
    region, synchronously average, and (reduced mode) expand.

    Parameters
    ----------
    observed : ndarray
        System output for the plan's test signal, sample-aligned with it.
    plan : SequencePlan
    alignment : int, optional
        Override the detected pulse alignment (needed for signals without
        a pulse train, e.g. noise-only calibration runs).
    expand : bool, optional
        Compute the expanded response (default: in reduced mode only).

    Returns
    -------
    (RecoveredSet, CleanRegion, AveragedResponse)
        The clean region is the base grid; per-sequence averages use the
        row-specific coherent slot offsets internally.
    """
    q = compress_all(observed, plan)
    if alignment is None:
        alignment = detect_alignment(q[0], plan)
    rows = plan.weights.rows
    r_itr = [orthogonalize(q[m], rows[m], plan.n_o) for m in range(len(q))]
    offsets = [coherent_offset(rows[m]) for m in range(len(rows))]
    region = locate_clean_region(plan, len(q[0]), alignment,
                                 extra_tail_slots=max(offsets))
    r_per_seq = [
        synchronous_average(r_itr[m], region.shifted(offsets[m] * plan.n_o), plan.n_o)
        for m in range(len(r_itr))
    ]
    r_mean = None
    if plan.mode in (MODE_FOUR_FULL, MODE_FOUR_REDUCED):
        r_mean = combine_responses(r_per_seq, plan.mode)
    if expand is None:
        expand = plan.mode == MODE_FOUR_REDUCED
    r_xpd = None
    if expand:
        if plan.mode != MODE_FOUR_REDUCED:
            raise ParameterError("expansion requires four_seq_reduced mode")
        r_xpd = expand_response(r_itr, region, plan.n_o)
    rec = RecoveredSet(q=q, r_itr=r_itr, plan=plan, alignment=alignment)
    return rec, region, AveragedResponse(r_per_seq=r_per_seq, r_mean=r_mean, r_xpd=r_xpd)
