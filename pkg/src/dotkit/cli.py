"""Command-line interface: one subcommand per analysis step plus synthetic
generators, dossier assembly and the built-in selftest.

Exit codes: 0 success, 2 usage errors, 3 data-format errors, 4 fit
non-convergence. Randomized subcommands either take ``--seed`` or draw one
and record it in the output metadata. File outputs are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import json
import secrets
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import device_metrics as dm
from . import farfield as ff
from . import imaging as im
from . import localization as loc
from . import photon_stats as ps
from . import selftest
from .report import SCHEMA_VERSION, assemble_dossier, write_json_atomic

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FIT = 4


class DataFormatError(Exception):
    pass


def _resolve_seed(args) -> tuple[int, bool]:
    if args.seed is not None:
        return args.seed, False
    return secrets.randbits(32), True


def _load_params_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _write_csv_atomic(path, header: list[str], rows) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    tmp.replace(path)


# --------------------------------------------------------------------------
# synthetic generators


def cmd_synth_field(args) -> int:
    seed, auto = _resolve_seed(args)
    truth, widths = im.random_scene(args.emitters, seed=seed,
                                    snr_mean=args.snr_mean,
                                    field_size_um=args.field_um)
    noise = im.NoiseModel(seed=seed + 1)
    geometry = im.FieldGeometry()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        image = im.synthesize_field(
            truth, im.PsfModel(broadening=im.DEFAULT_BROADENING), noise,
            geometry, broadening_per_emitter=widths)
    out = Path(args.out)
    if out.suffix == ".pgm":
        im.write_pgm(out, image)
    else:
        im.write_image_csv(out, image)
    truth_path = args.truth or out.with_suffix(".truth.json")
    im.write_ground_truth(truth_path, truth)
    if auto:
        meta = json.loads(Path(out).with_suffix(".json").read_text())
        meta["auto_seed"] = seed
        write_json_atomic(Path(out).with_suffix(".json"), meta)
    print(f"wrote {out} and {truth_path} (seed {seed})")
    return 0


def cmd_synth_hist(args) -> int:
    seed, auto = _resolve_seed(args)
    payload = _load_params_json(args.params)
    kind = args.model
    try:
        if kind.startswith("hom"):
            params = ps.HomFitParams(**payload)
        else:
            params = ps.G2FitParams(**payload)
        hist = ps.synth_histogram(kind, params, args.total, args.bin_ps,
                                  seed=seed, span_ns=args.span_ns)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{args.params}: {exc}") from exc
    ps.write_histogram(args.out, hist)
    if auto:
        sidecar = Path(args.out).with_suffix(".json")
        meta = json.loads(sidecar.read_text())
        meta["auto_seed"] = seed
        write_json_atomic(sidecar, meta)
    print(f"wrote {args.out} ({hist.counts.sum():.0f} counts, seed {seed})")
    return 0


# --------------------------------------------------------------------------
# localization


def _read_image_any(path) -> im.PixelImage:
    path = Path(path)
    try:
        if path.suffix == ".pgm":
            return im.read_pgm(path)
        return im.read_image_csv(path)
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _localize_one(task):
    path, field_um, dc_um = task
    image = _read_image_any(path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        records = loc.localize_field(image, field_um,
                                     alignment_sigma_um=dc_um,
                                     field_id=Path(path).stem)
    return Path(path).stem, records


def cmd_localize(args) -> int:
    field_um, dc_um = args.field_um, args.dc_nm * 1e-3
    if args.meta:
        meta = _load_params_json(args.meta)
        try:
            field_um = float(meta["F_um"])
            dc_um = float(meta["dC_nm"]) * 1e-3
        except KeyError as exc:
            raise DataFormatError(f"{args.meta}: missing field {exc}") from exc
    tasks = [(p, field_um, dc_um) for p in args.images]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_localize_one, tasks))
    else:
        results = [_localize_one(t) for t in tasks]
    results.sort(key=lambda fr: fr[0])
    all_records = []
    rows = []
    for _field, records in results:
        all_records.extend(records)
        for r in records:
            rows.append([r.field_id, f"{r.q_h_um:.4f}", f"{r.q_v_um:.4f}",
                         f"{r.dq_h_um * 1e3:.1f}", f"{r.dq_v_um * 1e3:.1f}",
                         f"{r.dq_um * 1e3:.1f}", f"{r.dr_um * 1e3:.1f}",
                         f"{r.snr_h:.2f}", f"{r.snr_v:.2f}",
                         f"{r.fwhm_h_um:.3f}", f"{r.fwhm_v_um:.3f}"])
    _write_csv_atomic(args.out, ["field", "x_um", "y_um", "dQh_nm", "dQv_nm",
                                 "dQ_nm", "dR_nm", "snr_h", "snr_v",
                                 "fwhm_h_um", "fwhm_v_um"], rows)
    summary = {"schema_version": SCHEMA_VERSION,
               "localization": loc.summarize_records(all_records)}
    write_json_atomic(args.summary, summary)
    print(f"wrote {args.out} ({len(rows)} records) and {args.summary}")
    return 0


# --------------------------------------------------------------------------
# photon statistics


def _read_histogram_checked(path) -> ps.CoincidenceHistogram:
    try:
        return ps.read_histogram(path)
    except (OSError, ValueError, KeyError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _g2_report(report: ps.G2FitReport, quasi: bool) -> dict:
    p, e = report.params, report.errors
    body = {
        "decay_ps": [p.decay_ps, e.decay_ps],
        "period_ns": [p.period_ns, e.period_ns],
        "g2_zero_fit": [report.g2_zero, report.g2_zero_err],
        "mean_fit_residual": report.mean_fit_residual,
    }
    if quasi:
        body["scale"] = [p.scale, e.scale]
    else:
        body.update({
            "background": [p.background, e.background],
            "center_amplitude": [p.center_amplitude, e.center_amplitude],
            "side_height": [p.side_height, e.side_height],
            "capture_ps": [p.capture_ps, e.capture_ps],
        })
    return body


def cmd_fit_g2(args) -> int:
    hist = _read_histogram_checked(args.histogram)
    quasi = hist.excitation == "quasi-resonant"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            report = (ps.fit_g2_quasires(hist) if quasi
                      else ps.fit_g2_offres(hist))
            raw = None
            if quasi:
                raw = ps.g2_zero_raw(hist, window_ns=args.raw_window_ns)
    except RuntimeError as exc:
        print(f"error: {args.histogram}: {exc}", file=sys.stderr)
        return EXIT_FIT
    if not report.fit.converged:
        print(f"error: {args.histogram}: fit did not converge",
              file=sys.stderr)
        return EXIT_FIT
    body = _g2_report(report, quasi)
    if raw is not None:
        body["g2_zero_raw"] = list(raw)
    payload = {"schema_version": SCHEMA_VERSION, "purity": body}
    write_json_atomic(args.out, payload)
    print(f"g2(0)_fit = {report.g2_zero:.4g} +- {report.g2_zero_err:.2g}"
          + (f", g2(0)_raw = {raw[0]:.4g} +- {raw[1]:.2g}" if raw else ""))
    return 0


def cmd_fit_hom(args) -> int:
    co = _read_histogram_checked(args.co)
    cross = _read_histogram_checked(args.cross)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit, visibility, sigma = ps.fit_hom_pair(co, cross)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc
    a1 = fit.center_areas[0]
    payload = {"schema_version": SCHEMA_VERSION, "indistinguishability": {
        "visibility": [visibility, sigma],
        "postselected_visibility": [fit.postselected_visibility,
                                    fit.postselected_visibility_err],
        "coherence_ps": [fit.coherence_ps, fit.coherence_err_ps],
        "lifetime_ps": [fit.lifetime_ps, fit.lifetime_err_ps],
        "center_areas": list(fit.center_areas / a1),
        "outer_areas": list(fit.outer_areas / a1),
        "cross_center_area": [fit.cross_center_area,
                              fit.cross_center_area_err],
        "side_peak_visibility": ps.hom_sidepeak_visibility(fit),
        "mean_fit_residual_co": ps.hom_mean_fit_residual(co, fit, "co"),
    }}
    write_json_atomic(args.out, payload)
    print(f"V = {visibility * 100:.1f} +- {sigma * 100:.1f} %, "
          f"V_PS = {fit.postselected_visibility * 100:.1f} %, "
          f"T2 = {fit.coherence_ps:.0f} ps")
    return 0


def cmd_lifetime(args) -> int:
    try:
        data = np.loadtxt(args.trace, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError("expected two columns (t_ps, counts)")
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{args.trace}: {exc}") from exc
    try:
        fit = ps.fit_lifetime(data[:, 0], data[:, 1],
                              start_offset_ps=args.start_offset_ps)
    except RuntimeError as exc:
        print(f"error: {args.trace}: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        raise DataFormatError(f"{args.trace}: {exc}") from exc
    payload = {"schema_version": SCHEMA_VERSION, "lifetime": {
        "tau_ps": [fit.tau_ps, fit.tau_err_ps],
        "background": fit.background,
    }}
    write_json_atomic(args.out, payload)
    print(f"tau = {fit.tau_ps / 1e3:.3f} +- {fit.tau_err_ps / 1e3:.3f} ns")
    return 0


# --------------------------------------------------------------------------
# device metrics


def _read_chain_csv(path) -> dm.TransmissionChain:
    elements = []
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "element":
                    continue
                if len(row) != 3:
                    raise ValueError(f"row {row}: expected element,T,dT")
                elements.append((row[0], float(row[1]), float(row[2])))
        return dm.TransmissionChain(elements)
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def cmd_efficiency(args) -> int:
    if args.chain:
        setup = dm.chain_efficiency(_read_chain_csv(args.chain))
    elif args.setup_eta is not None:
        setup = (args.setup_eta, args.setup_deta)
    else:
        setup = dm.chain_efficiency(selftest.reference_chain())
    result = dm.extraction_efficiency(args.n_qd, args.f_rep, setup,
                                      g2_zero=args.g2zero,
                                      count_rate_sigma_cps=args.dn_qd)
    payload = {"schema_version": SCHEMA_VERSION, "efficiency": {
        "extraction": [result.efficiency, result.sigma],
        "setup": [result.setup_efficiency, result.setup_sigma],
        "count_rate_cps": [result.count_rate_cps, result.count_rate_sigma_cps],
        "repetition_rate_hz": result.repetition_rate_hz,
        "g2_correction": result.g2_correction,
        "assumes_unity_internal_quantum_efficiency": True,
    }}
    write_json_atomic(args.out, payload)
    print(f"eta = {result.efficiency * 100:.2f} +- {result.sigma * 100:.2f} % "
          f"(setup {result.setup_efficiency * 100:.3f} %, lower limit at "
          f"unity internal quantum efficiency)")
    return 0


def cmd_purcell(args) -> int:
    fp, sigma = dm.purcell_from_lifetimes(tuple(args.tau_cav),
                                          tuple(args.tau_ref))
    payload = {"schema_version": SCHEMA_VERSION,
               "purcell": {"factor": [fp, sigma],
                           "tau_cavity_ns": list(args.tau_cav),
                           "tau_reference_ns": list(args.tau_ref)}}
    write_json_atomic(args.out, payload)
    print(f"F_P = {fp:.2f} +- {sigma:.2f}")
    return 0


def cmd_modeq(args) -> int:
    try:
        data = np.loadtxt(args.spectrum, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError("expected two columns (wavelength_nm, intensity)")
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{args.spectrum}: {exc}") from exc
    try:
        fit = dm.fit_lorentzian(data[:, 0], data[:, 1])
    except RuntimeError as exc:
        print(f"error: {args.spectrum}: {exc}", file=sys.stderr)
        return EXIT_FIT
    payload = {"schema_version": SCHEMA_VERSION, "cavity_mode": {
        "center_nm": [fit.center_nm, fit.center_err_nm],
        "fwhm_nm": [fit.fwhm_nm, fit.fwhm_err_nm],
        "quality_factor": [fit.quality, fit.quality_err],
    }}
    write_json_atomic(args.out, payload)
    print(f"Q = {fit.quality:.1f} +- {fit.quality_err:.1f} "
          f"(center {fit.center_nm:.2f} nm, width {fit.fwhm_nm:.3f} nm)")
    return 0


def cmd_arrhenius(args) -> int:
    try:
        data = np.loadtxt(args.data, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError("expected two columns (T_K, intensity)")
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{args.data}: {exc}") from exc
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = dm.fit_arrhenius(data[:, 0], data[:, 1])
    except RuntimeError as exc:
        print(f"error: {args.data}: {exc}", file=sys.stderr)
        return EXIT_FIT
    payload = {"schema_version": SCHEMA_VERSION, "thermal_quenching": {
        "activation_mev": [[fit.activation_1_mev, fit.activation_1_err_mev],
                           [fit.activation_2_mev, fit.activation_2_err_mev]],
        "rates": [[fit.rate_1, fit.rate_1_err], [fit.rate_2, fit.rate_2_err]],
        "single_process": fit.single_process,
    }}
    write_json_atomic(args.out, payload)
    print(f"E_a1 = {fit.activation_1_mev:.1f} +- {fit.activation_1_err_mev:.1f} meV, "
          f"E_a2 = {fit.activation_2_mev:.1f} +- {fit.activation_2_err_mev:.1f} meV")
    return 0


def cmd_yield(args) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        y = dm.random_yield(args.nf, args.mesa_um, args.field_um)
    print(f"{y * 100:.2f}%")
    return 0


# --------------------------------------------------------------------------
# far field


def _read_farfield_checked(path) -> ff.FarFieldGrid:
    try:
        return ff.read_farfield(path)
    except (OSError, ValueError, KeyError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def cmd_farfield(args) -> int:
    if args.sweep_dir:
        root = Path(args.sweep_dir)
        r_files = sorted(root.glob("*_r.csv"))
        if not r_files:
            raise DataFormatError(f"{root}: no '*_r.csv' far-field tables")
        rows = []
        for r_file in r_files:
            phi_file = r_file.with_name(r_file.name[:-6] + "_phi.csv")
            if not phi_file.exists():
                raise DataFormatError(f"{phi_file}: missing phi-dipole table")
            g_r = _read_farfield_checked(r_file)
            g_phi = _read_farfield_checked(phi_file)
            rows.append((g_r.displacement_um, g_r, g_phi))
        rows.sort(key=lambda t: t[0])
        sweep = ff.displacement_sweep(rows, args.na, args.bulk_power)
        _write_csv_atomic(args.out, ["rho_um", "purcell", "extraction"],
                          [[f"{r.displacement_um:.4f}", f"{r.purcell:.6g}",
                            f"{r.extraction:.6g}"] for r in sweep.rows])
        print(f"wrote {args.out}; half-enhancement displacement: "
              + (f"{sweep.half_displacement_um * 1e3:.0f} nm"
                 if sweep.half_displacement_um is not None else "not reached"))
        return 0
    g_r = _read_farfield_checked(args.r_csv)
    g_phi = _read_farfield_checked(args.phi_csv)
    eta = ff.trion_extraction(g_r, g_phi, args.na)
    payload = {"schema_version": SCHEMA_VERSION, "farfield": {
        "numerical_aperture": args.na,
        "extraction": eta,
        "lens_power_r": ff.lens_power(g_r, args.na),
        "lens_power_phi": ff.lens_power(g_phi, args.na),
        "emitted_power": ff.trion_power(g_r.total_power, g_phi.total_power),
    }}
    write_json_atomic(args.out, payload)
    print(f"extraction into NA {args.na}: {eta * 100:.2f} %")
    return 0


# --------------------------------------------------------------------------
# dossier and selftest


def cmd_report(args) -> int:
    try:
        dossier = assemble_dossier(args.fragments, device=args.device)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc
    write_json_atomic(args.out, dossier)
    print(f"wrote {args.out} ({len(dossier) - 1} sections)")
    return 0


def cmd_selftest(args) -> int:
    checks = selftest.run_reference_checks()
    if args.full or args.quick:
        checks += selftest.run_statistical_checks(quick=args.quick,
                                                  seed=args.seed or 0)
    print(selftest.render_checks(checks))
    hard_failures = [c for c in checks if not c.passed
                     and not c.known_inconsistent]
    return 1 if hard_failures else 0


# --------------------------------------------------------------------------
# parser


def _pair(text: str) -> list[float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected 'value,sigma'")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dotkit",
        description="Quantum-dot single-photon source analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-field", help="render a synthetic emitter map")
    p.add_argument("--seed", type=int)
    p.add_argument("--emitters", type=int, default=7)
    p.add_argument("--snr-mean", type=float, default=im.CAMPAIGN_SNR_MEAN)
    p.add_argument("--field-um", type=float, default=50.0)
    p.add_argument("--out", required=True, help=".pgm or .csv image path")
    p.add_argument("--truth", help="ground-truth JSON path")
    p.set_defaults(func=cmd_synth_field)

    p = sub.add_parser("localize", help="localize emitters in maps")
    p.add_argument("images", nargs="+")
    p.add_argument("--field-um", type=float, default=50.0)
    p.add_argument("--dc-nm", type=float, default=40.0)
    p.add_argument("--meta", help="JSON with {F_um, dC_nm} overriding flags")
    p.add_argument("--out", default="localization.csv")
    p.add_argument("--summary", default="localization_summary.json")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("synth-hist", help="generate a coincidence histogram")
    p.add_argument("--model", required=True,
                   choices=sorted(ps._MODEL_TAGS))
    p.add_argument("--params", required=True, help="JSON parameter file")
    p.add_argument("--total", type=float, default=1e6)
    p.add_argument("--bin-ps", type=float, default=50.0)
    p.add_argument("--span-ns", type=float, default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_hist)

    p = sub.add_parser("fit-g2", help="fit an autocorrelation histogram")
    p.add_argument("histogram")
    p.add_argument("--raw-window-ns", type=float, default=6.0)
    p.add_argument("--out", default="g2_fit.json")
    p.set_defaults(func=cmd_fit_g2)

    p = sub.add_parser("fit-hom", help="fit a co/cross interference pair")
    p.add_argument("--co", required=True)
    p.add_argument("--cross", required=True)
    p.add_argument("--out", default="hom_fit.json")
    p.set_defaults(func=cmd_fit_hom)

    p = sub.add_parser("lifetime", help="fit a time-resolved decay trace")
    p.add_argument("trace", help="CSV with columns t_ps, counts")
    p.add_argument("--start-offset-ps", type=float, default=0.0)
    p.add_argument("--out", default="lifetime.json")
    p.set_defaults(func=cmd_lifetime)

    p = sub.add_parser("efficiency", help="calibrated extraction efficiency")
    p.add_argument("--n-qd", dest="n_qd", type=float, required=True)
    p.add_argument("--f-rep", dest="f_rep", type=float, default=80e6)
    p.add_argument("--dn-qd", dest="dn_qd", type=float, default=1000.0)
    p.add_argument("--chain", help="CSV of element,T,dT rows")
    p.add_argument("--setup-eta", type=float)
    p.add_argument("--setup-deta", type=float, default=0.0)
    p.add_argument("--g2zero", type=float)
    p.add_argument("--out", default="efficiency.json")
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("purcell", help="emission-rate enhancement")
    p.add_argument("--tau-cav", type=_pair, required=True,
                   metavar="NS,SIGMA")
    p.add_argument("--tau-ref", type=_pair, required=True,
                   metavar="NS,SIGMA")
    p.add_argument("--out", default="purcell.json")
    p.set_defaults(func=cmd_purcell)

    p = sub.add_parser("modeq", help="cavity-mode quality factor")
    p.add_argument("spectrum", help="CSV with columns wavelength_nm, intensity")
    p.add_argument("--out", default="mode.json")
    p.set_defaults(func=cmd_modeq)

    p = sub.add_parser("arrhenius", help="thermally activated quenching fit")
    p.add_argument("data", help="CSV with columns T_K, intensity")
    p.add_argument("--out", default="arrhenius.json")
    p.set_defaults(func=cmd_arrhenius)

    p = sub.add_parser("yield", help="random-placement yield estimate")
    p.add_argument("--nf", type=float, required=True)
    p.add_argument("--mesa-um", type=float, required=True)
    p.add_argument("--field-um", type=float, required=True)
    p.set_defaults(func=cmd_yield)

    p = sub.add_parser("farfield", help="lens-collection from far-field tables")
    p.add_argument("--na", type=float, required=True)
    p.add_argument("--sweep-dir", help="directory of *_r.csv / *_phi.csv pairs")
    p.add_argument("--bulk-power", type=float, default=1.0)
    p.add_argument("--r-csv")
    p.add_argument("--phi-csv")
    p.add_argument("--out", default="farfield.csv")
    p.set_defaults(func=cmd_farfield)

    p = sub.add_parser("report", help="merge JSON fragments into a dossier")
    p.add_argument("fragments", nargs="+")
    p.add_argument("--device", default="")
    p.add_argument("--out", default="dossier.json")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="run the built-in reproduction checks")
    p.add_argument("--full", action="store_true",
                   help="include the Monte Carlo studies (minutes)")
    p.add_argument("--quick", action="store_true",
                   help="small Monte Carlo studies (tens of seconds)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "farfield" and not args.sweep_dir \
            and not (args.r_csv and args.phi_csv):
        parser.error("farfield needs --sweep-dir or both --r-csv and --phi-csv")
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
