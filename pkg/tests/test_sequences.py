import numpy as np
import pytest

from conftest import impulse_fvn, impulse_plan
from fvnmeas.errors import ParameterError
from fvnmeas.sequences import (
    MODE_FOUR_FULL,
    MODE_FOUR_REDUCED,
    MODE_TWO,
    SequencePlan,
    assemble_test_signal,
    build_sequence,
    weight_matrix,
)


class TestWeightMatrix:
    def test_four_sequence_rows(self):
        wm = weight_matrix(4)
        assert wm.period == 8
        np.testing.assert_array_equal(wm.rows[0], np.ones(8))
        np.testing.assert_array_equal(wm.rows[1], [1, -1, 1, -1, 1, -1, 1, -1])
        np.testing.assert_array_equal(wm.rows[2], [1, 1, -1, -1, 1, 1, -1, -1])
        np.testing.assert_array_equal(wm.rows[3], [1, 1, 1, 1, -1, -1, -1, -1])

    def test_rows_3_4_orthogonal_by_direct_sum(self):
        wm = weight_matrix(4)
        s = sum(wm.rows[2][j] * wm.rows[3][j] for j in range(8))
        assert s == 0.0

    def test_all_pairs_orthogonal(self):
        wm = weight_matrix(4)
        gram = wm.rows @ wm.rows.T
        np.testing.assert_array_equal(gram, 8 * np.eye(4))

    def test_two_sequence_rows(self):
        wm = weight_matrix(2)
        np.testing.assert_array_equal(wm.rows, [[1, 1], [1, -1]])
        assert wm.rows[0] @ wm.rows[1] == 0.0

    def test_unsupported_count(self):
        with pytest.raises(ParameterError):
            weight_matrix(3)


class TestBuildSequence:
    def test_impulse_fvn_constant_row(self):
        fvn = impulse_fvn(fft_length=64)
        s = build_sequence(fvn, np.ones(8), n_o=4, k_reps=16)
        c = fvn.center_offset
        pulses = s[c::4][:16]
        np.testing.assert_array_equal(pulses, np.ones(16))
        assert np.count_nonzero(s) == 16

    def test_impulse_fvn_alternating_row(self):
        fvn = impulse_fvn(fft_length=64)
        s = build_sequence(fvn, np.array([1.0, -1.0]), n_o=4, k_reps=16)
        c = fvn.center_offset
        np.testing.assert_array_equal(s[c::4][:16], [(-1.0) ** k for k in range(16)])

    def test_paper_configuration_geometry(self, plan_full_44):
        # K=44, n_o=8820 at 44.1 kHz (0.2 s spacing)
        s = build_sequence(plan_full_44.fvns[0], np.ones(8), n_o=8820, k_reps=44)
        assert len(s) == 43 * 8820 + plan_full_44.fft_length

    def test_rejects_bad_args(self):
        fvn = impulse_fvn()
        with pytest.raises(ParameterError):
            build_sequence(fvn, np.ones(8), n_o=0, k_reps=4)
        with pytest.raises(ParameterError):
            build_sequence(fvn, np.ones(8), n_o=4, k_reps=0)


class TestSequencePlan:
    def test_length_invariant(self, plan_full_44):
        p = plan_full_44
        assert p.total_length == (p.k_reps + 2 * p.period - 1) * p.n_o + p.fft_length

    def test_rejects_duplicate_seeds(self):
        fvns = tuple(impulse_fvn(seed=0) for _ in range(4))
        with pytest.raises(ParameterError):
            SequencePlan(n_o=4, k_reps=16, mode=MODE_FOUR_FULL, fvns=fvns,
                         weights=weight_matrix(4))

    def test_rejects_short_k(self):
        fvns = tuple(impulse_fvn(seed=i) for i in range(4))
        with pytest.raises(ParameterError):
            SequencePlan(n_o=4, k_reps=15, mode=MODE_FOUR_FULL, fvns=fvns,
                         weights=weight_matrix(4))

    def test_reduced_synthesis_indices(self):
        plan = impulse_plan(MODE_FOUR_REDUCED)
        assert plan.synthesis_indices == (0, 1, 2)
        assert len(plan.fvns) == 4


class TestAssemble:
    def test_peak_normalization(self, identity_full_44):
        ts, _, _, _ = identity_full_44
        assert np.abs(ts.samples).max() == pytest.approx(1.0)
        assert ts.peak_norm > 0

    def test_linearity_of_assembly(self):
        plan = impulse_plan(MODE_FOUR_FULL)
        ts = assemble_test_signal(plan)
        manual = np.zeros(plan.total_length)
        lead = plan.lead_samples
        for m in range(4):
            s = build_sequence(plan.fvns[m], plan.weights.rows[m], plan.n_o, plan.k_reps)
            manual[lead:lead + len(s)] += s
        np.testing.assert_allclose(ts.samples, manual * ts.peak_norm, rtol=0, atol=0)

    def test_reduced_excludes_fourth_sequence(self):
        plan_r = impulse_plan(MODE_FOUR_REDUCED)
        ts_r = assemble_test_signal(plan_r)
        manual = np.zeros(plan_r.total_length)
        lead = plan_r.lead_samples
        for m in range(3):
            s = build_sequence(plan_r.fvns[m], plan_r.weights.rows[m], plan_r.n_o, plan_r.k_reps)
            manual[lead:lead + len(s)] += s
        np.testing.assert_array_equal(ts_r.samples, manual * ts_r.peak_norm)

    def test_same_fvn_row_sum_oracle(self):
        # two orthogonal rows on the same impulse FVN add elementwise
        fvn = impulse_fvn(fft_length=64)
        wm = weight_matrix(2)
        s1 = build_sequence(fvn, wm.rows[0], n_o=4, k_reps=8)
        s2 = build_sequence(fvn, wm.rows[1], n_o=4, k_reps=8)
        total = s1 + s2
        c = fvn.center_offset
        expected = np.array([wm.rows[0][k % 2] + wm.rows[1][k % 2] for k in range(8)])
        np.testing.assert_array_equal(total[c::4][:8], expected)

    def test_weight_cycle_periodicity(self):
        plan = impulse_plan(MODE_FOUR_FULL, n_o=4, k_reps=24)
        for row in plan.weights.rows:
            for k in range(24 - 8):
                assert row[k % 8] == row[(k + 8) % 8]

    def test_std_normalization(self):
        plan = impulse_plan(MODE_FOUR_FULL, n_o=4, k_reps=16)
        ts = assemble_test_signal(plan, norm="std")
        active = ts.samples[plan.lead_samples:plan.emission_end]
        assert np.std(active) == pytest.approx(1.0)
        assert ts.norm == "std"

    def test_unknown_norm_rejected(self):
        with pytest.raises(ParameterError):
            assemble_test_signal(impulse_plan(MODE_FOUR_FULL), norm="rms")
