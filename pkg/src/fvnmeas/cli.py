"""Command-line surface: gen, simulate, analyze, expand, selftest.

All errors from the toolkit are reported as one JSON object on stderr and
a nonzero exit code, so scripted callers can parse failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from fvnmeas import __version__
from fvnmeas.core import FvnParams, derive_seeds, matched_compress, unit_fvn
from fvnmeas.decompose import NONLINEAR_VARIANCE_PREFACTOR, decompose, power_spectrum, third_octave_smooth
from fvnmeas.errors import FvnError, ParameterError
from fvnmeas.fileio import (
    PlanSidecar,
    csv_export,
    make_sidecar,
    report_to_dict,
    sha256_file,
    wav_read,
    wav_write,
)
from fvnmeas.recovery import extra_two_seq, recover
from fvnmeas.sequences import (
    MODE_FOUR_FULL,
    MODE_FOUR_REDUCED,
    MODE_TWO,
    SequencePlan,
    TestSignal,
    assemble_test_signal,
    weight_matrix,
)
from fvnmeas.selftest import run_selftest
from fvnmeas.simsys import (
    LoudspeakerModel,
    Nonlinearity,
    design_pink_shaper,
    simulate_measurement,
)

_MODE_NAMES = {"two": MODE_TWO, "four": MODE_FOUR_FULL, "fourR": MODE_FOUR_REDUCED}

OUT_DIR_ENV = "FVNMEAS_OUT_DIR"


def _out_dir(args) -> str:
    d = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(d, exist_ok=True)
    return d


def _build_plan_from_args(args) -> tuple:
    mode = _MODE_NAMES[args.mode]
    n_o = int(round(args.fs * args.n_o_ms / 1000.0))
    n_analysis = 2 if mode == MODE_TWO else 4
    # two-sequence plans carry one extra seed for the extra-response analyzer
    n_seeds = 3 if mode == MODE_TWO else 4
    seeds = derive_seeds(args.seed, n_seeds)
    fvns = tuple(
        unit_fvn(FvnParams(sample_rate=args.fs, sigma_t=args.sigma_t, seed=s))
        for s in seeds[:n_analysis]
    )
    plan = SequencePlan(n_o=n_o, k_reps=args.reps, mode=mode, fvns=fvns,
                        weights=weight_matrix(n_analysis))
    return plan, seeds


def _render(plan: SequencePlan, norm: str, pink: bool, shaper_order: int,
            shaper_corner: float) -> TestSignal:
    ts = assemble_test_signal(plan, norm="peak")
    if not pink:
        if norm == "peak":
            return ts
        return assemble_test_signal(plan, norm=norm)
    shaper = design_pink_shaper(shaper_order, plan.sample_rate, shaper_corner)
    raw = shaper.shape(ts.samples / ts.peak_norm)
    if norm == "peak":
        ref = np.abs(raw).max()
    else:
        ref = float(np.std(raw[plan.lead_samples:plan.emission_end]))
    scale = 1.0 / ref
    return TestSignal(samples=raw * scale, plan=plan, peak_norm=scale, norm=norm)


def _cmd_gen(args) -> int:
    plan, seeds = _build_plan_from_args(args)
    ts = _render(plan, args.norm, args.pink, 44, 20.0)
    sc = make_sidecar(ts, seeds, shaper_enabled=args.pink)
    d = _out_dir(args)
    wav_path = os.path.join(d, args.name + ".wav")
    sc_path = os.path.join(d, args.name + ".plan.json")
    wav_write(wav_path, ts.samples, plan.sample_rate, args.bits)
    with open(sc_path, "w", encoding="utf-8") as fh:
        fh.write(sc.to_json())
    print(wav_path)
    print(sc_path)
    return 0


def _load_sidecar(path) -> PlanSidecar:
    if not os.path.exists(path):
        raise ParameterError(f"sidecar not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return PlanSidecar.from_json(fh.read())


def _cmd_simulate(args) -> int:
    sc = _load_sidecar(args.sidecar)
    plan = sc.build_plan()
    model = None if args.no_speaker else LoudspeakerModel(fs=sc.sample_rate)
    nl = None if args.linear else Nonlinearity(alpha=args.alpha)
    noise_db = None if args.noise_db is None else args.noise_db
    shaper = (design_pink_shaper(sc.shaper_order, sc.sample_rate, sc.shaper_corner_hz)
              if sc.shaper_enabled else None)
    reverb = None
    if args.ir:
        reverb, ir_fs = wav_read(args.ir, channel=args.ir_channel)
        if ir_fs != sc.sample_rate:
            raise ParameterError(
                f"reverberation IR rate {ir_fs} != plan rate {sc.sample_rate}")
    observed = simulate_measurement(
        plan, model=model, nl=nl, noise_db=noise_db, input_db=args.input_db,
        seed=args.seed, shaper=shaper, reverb_ir=reverb,
    )
    d = _out_dir(args)
    out = os.path.join(d, args.name + ".wav")
    wav_write(out, observed, sc.sample_rate, args.bits)
    print(out)
    return 0


def _spectrum_db(x, fs):
    f, p = power_spectrum(x, fs)
    fg, ps = third_octave_smooth(f, p)
    return fg, 10.0 * np.log10(np.maximum(ps, 1e-40))


def _analyze_two_seq(args, sc: PlanSidecar, observed, d: str) -> int:
    plan = sc.build_plan()
    rec, region, avg = recover(observed, plan)
    fs = sc.sample_rate
    result = {
        "schema_version": 1,
        "mode": sc.mode,
        "sample_rate": fs,
        "alignment": rec.alignment,
    }
    paths = []
    for m, r in enumerate(avg.r_per_seq):
        p = os.path.join(d, f"{args.name}.ir{m + 1}.wav")
        wav_write(p, r, fs, "float32")
        paths.append(p)
        fg, db = _spectrum_db(r, fs)
        result[f"path{m + 1}_level_dbfs"] = float(10 * np.log10(np.mean(r ** 2) + 1e-40))
        if m == 0:
            result["frequency_hz"] = [float(v) for v in fg]
        result[f"path{m + 1}_db"] = [float(v) for v in db]
    if len(sc.seeds) >= 3:
        extra_fvn = unit_fvn(FvnParams(
            sample_rate=fs, sigma_t=sc.sigma_t, phi_max=sc.phi_max,
            c_mag=sc.c_mag, fft_length=sc.fft_length, seed=sc.seeds[2]))
        q_x = matched_compress(extra_fvn, observed)
        r_x = extra_two_seq(q_x, plan.n_o)
        sl = [r_x[s:s + plan.n_o] for s in region.pulse_indices]
        extra = np.mean(sl, axis=0)
        result["extra_level_dbfs"] = float(10 * np.log10(np.mean(extra ** 2) + 1e-40))
    result["provenance"] = _provenance(args)
    rp = os.path.join(d, args.name + ".report.json")
    with open(rp, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    print(rp)
    for p in paths:
        print(p)
    return 0


def _provenance(args) -> dict:
    return {
        "tool_version": __version__,
        "input_sha256": sha256_file(args.wav),
        "plan_sha256": sha256_file(args.sidecar),
    }


def _cmd_analyze(args, force_expand: bool = False) -> int:
    sc = _load_sidecar(args.sidecar)
    observed, fs = wav_read(args.wav, channel=args.channel)
    if fs != sc.sample_rate:
        raise ParameterError(f"recording rate {fs} != plan rate {sc.sample_rate}")
    d = _out_dir(args)
    if sc.shaper_enabled:
        shaper = design_pink_shaper(sc.shaper_order, sc.sample_rate, sc.shaper_corner_hz)
        observed = shaper.inverse(observed)
    if sc.mode == MODE_TWO:
        if force_expand:
            raise ParameterError("expansion requires a four-sequence reduced plan")
        return _analyze_two_seq(args, sc, observed, d)
    if sc.mode == MODE_FOUR_FULL:
        plan = sc.build_plan()
        rec, region, avg = recover(observed, plan)
        p = os.path.join(d, args.name + ".ir.wav")
        wav_write(p, avg.r_mean, sc.sample_rate, "float32")
        print(p)
        return 0

    plan = sc.build_plan()
    expand = force_expand or args.expand
    report = decompose(observed, plan, expand=expand,
                       nl_prefactor=args.nl_prefactor)
    prov = _provenance(args)
    if args.spl_offset:
        prov["spl_offset_db"] = args.spl_offset
        report = _offset_report(report, args.spl_offset)
    rp = os.path.join(d, args.name + ".report.json")
    from fvnmeas.fileio import write_report_json
    write_report_json(report, rp, provenance=prov)
    cp = os.path.join(d, args.name + ".report.csv")
    csv_export(report, cp)
    ip = os.path.join(d, args.name + ".ir.wav")
    wav_write(ip, report.linear_ir, sc.sample_rate, "float32")
    print(rp)
    print(cp)
    print(ip)
    if report.r_xpd is not None:
        xp = os.path.join(d, args.name + ".ir_xpd.wav")
        wav_write(xp, report.r_xpd, sc.sample_rate, "float32")
        print(xp)
    return 0


def _offset_report(report, offset_db):
    from dataclasses import replace
    pre = report.preceding_spectrum_db
    return replace(
        report,
        linear_spectrum_db=report.linear_spectrum_db + offset_db,
        nonlinear_spectrum_db=report.nonlinear_spectrum_db + offset_db,
        random_spectrum_db=report.random_spectrum_db + offset_db,
        preceding_spectrum_db=None if pre is None else pre + offset_db,
        component_levels={k: v + offset_db for k, v in report.component_levels.items()},
    )


def _add_common_out(p):
    p.add_argument("--out-dir", default=None,
                   help=f"output directory (default: ${OUT_DIR_ENV} or .)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fvnmeas",
                                 description="FVN test signals and response decomposition")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="emit a test WAV plus its plan sidecar")
    g.add_argument("--mode", choices=sorted(_MODE_NAMES), default="fourR")
    g.add_argument("--sigma-t", type=float, default=0.1, dest="sigma_t")
    g.add_argument("--n-o-ms", type=float, default=200.0, dest="n_o_ms",
                   help="allocation interval in milliseconds")
    g.add_argument("--reps", type=int, default=44)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--fs", type=int, default=44100)
    g.add_argument("--norm", choices=("peak", "std"), default="peak")
    g.add_argument("--pink", action="store_true",
                   help="shape the test signal to a pink spectrum")
    g.add_argument("--bits", choices=("float32", "pcm24", "pcm16"), default="float32")
    g.add_argument("--name", default="fvn_test")
    _add_common_out(g)
    g.set_defaults(fn=_cmd_gen)

    s = sub.add_parser("simulate", help="virtual measurement -> observed WAV")
    s.add_argument("--sidecar", required=True)
    s.add_argument("--input-db", type=float, default=-25.0, dest="input_db")
    s.add_argument("--noise-db", type=float, default=None, dest="noise_db",
                   help="noise level re the observed signal RMS (omit for none)")
    s.add_argument("--alpha", type=float, default=0.3)
    s.add_argument("--linear", action="store_true", help="bypass the nonlinearity")
    s.add_argument("--no-speaker", action="store_true", help="bypass the speaker model")
    s.add_argument("--ir", default=None, help="reverberation IR WAV to convolve")
    s.add_argument("--ir-channel", type=int, default=None, dest="ir_channel")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--bits", choices=("float32", "pcm24", "pcm16"), default="float32")
    s.add_argument("--name", default="observed")
    _add_common_out(s)
    s.set_defaults(fn=_cmd_simulate)

    def add_analyze(name, help_text, force_expand):
        a = sub.add_parser(name, help=help_text)
        a.add_argument("--wav", required=True)
        a.add_argument("--sidecar", required=True)
        a.add_argument("--channel", type=int, default=None)
        a.add_argument("--expand", action="store_true")
        a.add_argument("--spl-offset", type=float, default=0.0, dest="spl_offset",
                       help="scalar dB offset for calibrated displays")
        a.add_argument("--nl-prefactor", type=float,
                       default=NONLINEAR_VARIANCE_PREFACTOR, dest="nl_prefactor")
        a.add_argument("--name", default="analysis")
        _add_common_out(a)
        a.set_defaults(fn=lambda args: _cmd_analyze(args, force_expand=force_expand))

    add_analyze("analyze", "WAV + sidecar -> report JSON/CSV + IR WAVs", False)
    add_analyze("expand", "analyze with the expanded-response path forced", True)

    t = sub.add_parser("selftest", help="run the built-in invariant suite")
    t.set_defaults(fn=lambda args: run_selftest())
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FvnError as exc:
        sys.stderr.write(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
        }) + "\n")
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
        }) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
