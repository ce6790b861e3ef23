import numpy as np
import pytest

from fvnmeas.core import FvnParams, UnitFvn, unit_fvn
from fvnmeas.sequences import (
    MODE_FOUR_FULL,
    MODE_FOUR_REDUCED,
    MODE_TWO,
    SequencePlan,
    assemble_test_signal,
    weight_matrix,
)
from fvnmeas.recovery import recover

FS = 44100


def impulse_fvn(seed=0, fft_length=64, center=None):
    """Degenerate FVN whose waveform is a unit impulse (zero-length
    envelope); lets pulse-train geometry be checked exactly."""
    params = FvnParams(sample_rate=64, sigma_t=0.1, fft_length=fft_length, seed=seed)
    w = np.zeros(fft_length)
    c = fft_length // 2 if center is None else center
    w[c] = 1.0
    return UnitFvn(waveform=w, center_offset=c, params=params)


def impulse_plan(mode, n_o=4, k_reps=16, n_seq=4):
    fvns = tuple(impulse_fvn(seed=i) for i in range(n_seq))
    return SequencePlan(n_o=n_o, k_reps=k_reps, mode=mode, fvns=fvns,
                        weights=weight_matrix(n_seq))


@pytest.fixture(scope="session")
def bank_sigma01():
    """Four sigma_t=0.1 FVNs at 44.1 kHz (paper's main configuration)."""
    return tuple(unit_fvn(FvnParams(sample_rate=FS, sigma_t=0.1, seed=100 + i))
                 for i in range(4))


@pytest.fixture(scope="session")
def bank_sigma005():
    return tuple(unit_fvn(FvnParams(sample_rate=FS, sigma_t=0.05, seed=200 + i))
                 for i in range(4))


@pytest.fixture(scope="session")
def plan_full_44(bank_sigma01):
    return SequencePlan(n_o=8820, k_reps=44, mode=MODE_FOUR_FULL,
                        fvns=bank_sigma01, weights=weight_matrix(4))


@pytest.fixture(scope="session")
def plan_reduced_44(bank_sigma01):
    return SequencePlan(n_o=8820, k_reps=44, mode=MODE_FOUR_REDUCED,
                        fvns=bank_sigma01, weights=weight_matrix(4))


@pytest.fixture(scope="session")
def plan_reduced_small(bank_sigma005):
    """Faster reduced-mode plan for pipeline smoke tests."""
    return SequencePlan(n_o=8820, k_reps=32, mode=MODE_FOUR_REDUCED,
                        fvns=bank_sigma005, weights=weight_matrix(4))


@pytest.fixture(scope="session")
def identity_full_44(plan_full_44):
    """Recovery of the full four-sequence test signal through the identity
    system (paper's K=44, n_o=8820 example)."""
    ts = assemble_test_signal(plan_full_44)
    rec, region, avg = recover(ts.samples, plan_full_44)
    return ts, rec, region, avg


@pytest.fixture(scope="session")
def identity_reduced_44(plan_reduced_44):
    ts = assemble_test_signal(plan_reduced_44)
    rec, region, avg = recover(ts.samples, plan_reduced_44)
    return ts, rec, region, avg
