"""FVN-based acoustic measurement toolkit.

Generates unit FVNs (all-pass time-stretched pulses with randomized phase),
builds orthogonal FVN test sequences, and recovers the linear time-invariant
impulse response together with the nonlinear time-invariant residual and the
random/time-varying residual from a single measurement.
"""

from fvnmeas.core import (
    FvnParams,
    PhaseSpec,
    UnitFvn,
    cross_correlation_report,
    derive_seeds,
    design_phase,
    matched_compress,
    synthesize_unit_fvn,
    unit_fvn,
    window_value,
)
from fvnmeas.errors import (
    FvnError,
    NumericalError,
    ParameterError,
    RegionError,
    SyncError,
    WavFormatError,
)
from fvnmeas.sequences import (
    SequencePlan,
    TestSignal,
    WeightMatrix,
    assemble_test_signal,
    build_sequence,
    weight_matrix,
)
from fvnmeas.recovery import (
    AveragedResponse,
    CleanRegion,
    RecoveredSet,
    combine_responses,
    compress_all,
    detect_alignment,
    expand_response,
    expansion_coefficients,
    expansion_matrix,
    extra_two_seq,
    locate_clean_region,
    orthogonalize,
    orthogonalize_two_seq,
    recover,
    synchronous_average,
)
from fvnmeas.decompose import (
    DecompositionReport,
    NonlinearComponent,
    RandomComponent,
    decompose,
    nonlinear_component,
    per_sequence_response,
    power_spectrum,
    random_component,
    third_octave_smooth,
)
from fvnmeas.simsys import (
    LoudspeakerModel,
    Nonlinearity,
    ShaperPair,
    add_noise,
    apply_nonlinearity,
    convolve_ir,
    design_pink_shaper,
    levinson_durbin,
    loudspeaker_ir,
    simulate_measurement,
)

__version__ = "0.1.0"
