"""Command-line front end.

Subcommands mirror the validation ladder: check-gates, ed, itebd,
correlate, sweep, reproduce.  Every run that writes artifacts puts them
in one directory with exactly one manifest.json listing each emitted
file and its checksum.  CSV bytes depend only on config + seed; wall
times live in the manifest, never in a CSV.

Exit codes: 0 ok, 1 compute failure (a FAILED.txt marker is left next
to any partial artifacts), 2 config or usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys
import time

from .config import RunConfig, build_manifest, parse_config, write_manifest
from .ed import ground_state_ed, ground_state_grand
from .errors import ConfigError, Ghm1dError
from .gatechecks import render_table, run_gate_checks
from .itebd import ground_state_itebd
from .model import ModelParams
from .mps import load_state, save_state
from .observables import (correlation_set, default_k_grid, detect_peaks,
                          format_float, fourier_transform,
                          write_correlation_csv, write_spectrum_csv)
from .trap import lda_sweep, tune_to_filling

OUT_ROOT_ENV = "GHM1D_OUT_ROOT"

FIG1_GRID = [(-8.0, 0.0), (-8.0, -0.5), (-8.0, 1.0),
             (-2.0, 0.0), (-2.0, -0.5), (-2.0, 1.0)]
FIG1_FILLING = 1.0
FIG1_POLARIZATION = 0.4

FIG2_BASE = {"t": 1.0, "delta_g": 0.0, "delta_t": 0.0, "U": -8.0}
FIG2_DELTA_MU = (2.4, 2.5, 3.0)
FIG2_MU_LIST = (-4.0, -4.3, -4.4)

FIG3_BASE = {"t": 1.0, "delta_g": 1.0, "delta_t": -2.0, "U": -2.0}
FIG3_DELTA_MU = (1.2, 2.4)
FIG3_MU_LIST = (-1.0, -2.5, -3.3)


def _num_tag(x: float) -> str:
    return "%g" % float(x)


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)


def _resolve_out_dir(args, config: RunConfig, default_name: str) -> str:
    if args.out:
        return args.out
    if config.out_dir:
        return config.out_dir
    root = os.environ.get(OUT_ROOT_ENV, os.path.join(".", "runs"))
    return os.path.join(root, default_name)


def _worker_count(threads: int, n_tasks: int) -> int:
    if threads < 0:
        raise ConfigError(f"--threads must be >= 0, got {threads}")
    if threads == 0:
        threads = os.cpu_count() or 1
    return max(1, min(threads, n_tasks))


def _run_tasks(worker, payloads, threads: int):
    """Run worker over payloads, in order, optionally in a process pool."""
    n = _worker_count(threads, len(payloads))
    if n <= 1:
        return [worker(p) for p in payloads]
    with concurrent.futures.ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(worker, payloads))


def _report_headers(report) -> dict:
    """Deterministic convergence fields safe for CSV headers."""
    return {
        "final_energy_per_site": format_float(report.final_energy_per_site),
        "converged": report.converged,
        "total_steps": report.total_steps,
        "chi_max": report.chi_max,
        "cutoff": format_float(report.cutoff),
        "seed": report.seed,
    }


def _spectra_columns(cset, k_grid) -> dict:
    """Displayed spectrum columns: S is the z spin component."""
    return {
        "S": fourier_transform(cset.s_z, k_grid, channel="S"),
        "D": fourier_transform(cset.density, k_grid, channel="D"),
        "P": fourier_transform(cset.pair, k_grid, channel="P"),
    }


def _sanitize(text: str) -> str:
    return text.replace(",", ";").replace("\n", " ")


# ---------------------------------------------------------------- sweeps

def _write_sweep_csv(path: str, records, extra: dict) -> None:
    columns = ["mu", "delta_mu", "n", "p", "energy_per_site", "phase",
               "ambiguous", "converged", "warm_started", "failed",
               "S_peak_k", "S_peak_prom", "D_peak_k", "D_peak_prom",
               "P_peak_k", "P_peak_prom", "point_ref", "error"]
    lines = [f"# {key} = {value}" for key, value in extra.items()]
    lines.append(",".join(columns))
    for rec in records:
        peak_cells = []
        for tag in ("S", "D", "P"):
            peaks = rec.top_peaks.get(tag, [])
            if peaks:
                peak_cells += [format_float(peaks[0].location),
                               format_float(peaks[0].prominence)]
            else:
                peak_cells += ["nan", "nan"]
        ambiguous = rec.label.ambiguous if rec.label is not None else False
        lines.append(",".join([
            format_float(rec.mu), format_float(rec.delta_mu),
            format_float(rec.n), format_float(rec.p),
            format_float(rec.energy_per_site), rec.phase_name,
            str(ambiguous), str(rec.converged), str(rec.warm_started),
            str(rec.failed), *peak_cells, rec.manifest_ref or "",
            _sanitize(rec.error or "")]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _run_one_sweep(config: RunConfig, base: dict, delta_mu: float,
                   mu_list, out_dir: str, prefix: str):
    """lda_sweep plus per-point CSV persistence; returns (files, summary)."""
    k_grid = default_k_grid(config.k_points)
    files: dict = {}
    index_of = {float(mu): i for i, mu in enumerate(mu_list)}

    def on_point(record, state, cset, spectra):
        idx = index_of[record.mu]
        point_params = ModelParams.from_mu(mu=record.mu,
                                           delta_mu=record.delta_mu, **base)
        corr_name = f"{prefix}correlations_{idx:03d}.csv"
        spec_name = f"{prefix}spectra_{idx:03d}.csv"
        extra = {"phase": record.phase_name, "spin_component": "z"}
        write_correlation_csv(os.path.join(out_dir, corr_name), cset,
                              point_params, {"phase": record.phase_name})
        write_spectrum_csv(os.path.join(out_dir, spec_name), spectra,
                           point_params, extra)
        files[corr_name] = os.path.join(out_dir, corr_name)
        files[spec_name] = os.path.join(out_dir, spec_name)
        record.manifest_ref = f"{idx:03d}"

    base_params = ModelParams.from_mu(mu=0.0, delta_mu=0.0, **base)
    records = lda_sweep(base_params, delta_mu, mu_list,
                        schedule=config.schedule(), chi_max=config.chi,
                        cutoff=config.cutoff, m=config.m, k_grid=k_grid,
                        thresholds=config.thresholds, seed=config.seed,
                        on_point=on_point)
    sweep_name = f"{prefix}sweep.csv"
    _write_sweep_csv(os.path.join(out_dir, sweep_name), records, {
        "delta_mu": format_float(delta_mu),
        "U": format_float(base["U"]),
        "delta_g": format_float(base["delta_g"]),
        "delta_t": format_float(base["delta_t"]),
        "chi": config.chi, "m": config.m, "seed": config.seed,
        "thresholds": config.thresholds.as_dict(),
    })
    files[sweep_name] = os.path.join(out_dir, sweep_name)
    summary = [{"mu": rec.mu, "n": rec.n, "p": rec.p,
                "phase": rec.phase_name, "converged": rec.converged,
                "failed": rec.failed, "error": rec.error}
               for rec in records]
    return files, summary


def _sweep_worker(payload):
    config, base, delta_mu, mu_list, out_dir, prefix = payload
    start = time.perf_counter()
    files, summary = _run_one_sweep(config, base, delta_mu, mu_list,
                                    out_dir, prefix)
    return prefix or "sweep", files, summary, time.perf_counter() - start


# ------------------------------------------------------------ fig1 curves

def _fig1_worker(payload):
    config, u, dg, out_dir = payload
    start = time.perf_counter()
    base = ModelParams.from_mu(t=1.0, delta_g=dg, delta_t=-2.0 * dg, U=u,
                               mu=u / 2.0, delta_mu=0.0)
    tuned = tune_to_filling(base, FIG1_FILLING, FIG1_POLARIZATION,
                            schedule=config.schedule(),
                            chi_max=min(config.chi, 32),
                            cutoff=config.cutoff, seed=config.seed)
    params = ModelParams.from_mu(t=1.0, delta_g=dg, delta_t=-2.0 * dg, U=u,
                                 mu=tuned.mu, delta_mu=tuned.delta_mu)
    state, report = ground_state_itebd(params, schedule=config.schedule(),
                                       chi_max=config.chi,
                                       cutoff=config.cutoff,
                                       seed=config.seed)
    cset = correlation_set(state, config.m)
    k_grid = default_k_grid(config.k_points)
    tag = f"U{_num_tag(u)}_dg{_num_tag(dg)}"
    files = {}
    corr_name = f"correlations_{tag}.csv"
    write_correlation_csv(os.path.join(out_dir, corr_name), cset, params,
                          _report_headers(report))
    files[corr_name] = os.path.join(out_dir, corr_name)
    channel_series = {"Sx": cset.s_x, "Sz": cset.s_z,
                      "D": cset.density, "P": cset.pair}
    for channel, series in channel_series.items():
        name = f"spectrum_{tag}_{channel}.csv"
        spectrum = fourier_transform(series, k_grid, channel=channel)
        write_spectrum_csv(os.path.join(out_dir, name), {channel: spectrum},
                           params, _report_headers(report))
        files[name] = os.path.join(out_dir, name)
    conv = {"tune": {"mu": tuned.mu, "delta_mu": tuned.delta_mu,
                     "n": tuned.n, "p": tuned.p,
                     "evaluations": tuned.evaluations},
            "itebd": report.as_dict(),
            "n": cset.filling, "p": cset.p}
    return tag, files, conv, time.perf_counter() - start


# ------------------------------------------------------------ subcommands

def _cmd_check_gates(args, config: RunConfig) -> int:
    results = run_gate_checks()
    print(render_table(results))
    return 0 if all(r.passed for r in results) else 1


def _cmd_ed(args, config: RunConfig) -> int:
    out_dir = args.resolved_out
    files: dict = {}
    start = time.perf_counter()
    if args.sector:
        parts = args.sector.split(",")
        if len(parts) != 2:
            raise ConfigError(f"--sector must be 'n_up,n_down', "
                              f"got {args.sector!r}")
        sector = (int(parts[0]), int(parts[1]))
        result = ground_state_ed(config.model, args.length, sector,
                                 boundary=args.boundary)
        grand_info = None
    else:
        grand = ground_state_grand(config.model, args.length,
                                   boundary=args.boundary)
        result = grand.best
        grand_info = {
            "scanned_sectors": len(grand.energies),
            "degenerate_sectors": [list(s) for s in
                                   grand.degenerate_sectors],
        }
    cset = result.correlations(averaging=args.averaging,
                               resolve_degeneracy=True)
    k_grid = default_k_grid(config.k_points)
    header = {"energy": format_float(result.energy),
              "sector": f"({result.sector[0]};{result.sector[1]})",
              "boundary": result.boundary, "length": result.length}
    write_correlation_csv(os.path.join(out_dir, "correlations.csv"), cset,
                          config.model, header)
    files["correlations.csv"] = os.path.join(out_dir, "correlations.csv")
    spectra = _spectra_columns(cset, k_grid)
    write_spectrum_csv(os.path.join(out_dir, "spectra.csv"), spectra,
                       config.model, dict(header, spin_component="z"))
    files["spectra.csv"] = os.path.join(out_dir, "spectra.csv")
    conv = {"ed": {
        "energy": result.energy, "sector": list(result.sector),
        "boundary": result.boundary, "length": result.length,
        "dimension": result.dimension, "residual": result.residual,
        "degenerate": result.degenerate,
        "multiplicity": result.multiplicity,
        "tie_break": cset.meta.get("degeneracy_tie_break"),
        "grand_scan": grand_info,
    }}
    manifest = build_manifest(config, args.command_line, files, conv,
                              {"total": time.perf_counter() - start})
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"ed: E = {format_float(result.energy)} in sector "
          f"{result.sector}, artifacts in {out_dir}")
    return 0


def _cmd_itebd(args, config: RunConfig) -> int:
    out_dir = args.resolved_out
    files: dict = {}
    start = time.perf_counter()
    state, report = ground_state_itebd(config.model,
                                       schedule=config.schedule(),
                                       chi_max=config.chi,
                                       cutoff=config.cutoff,
                                       seed=config.seed)
    cset = correlation_set(state, config.m)
    state_path = os.path.join(out_dir, "state.npz")
    save_state(state_path, state,
               {"model": dataclasses.asdict(config.model),
                "chi": config.chi, "seed": config.seed})
    files["state.npz"] = state_path
    header = _report_headers(report)
    write_correlation_csv(os.path.join(out_dir, "correlations.csv"), cset,
                          config.model, header)
    files["correlations.csv"] = os.path.join(out_dir, "correlations.csv")
    spectra = _spectra_columns(cset, default_k_grid(config.k_points))
    write_spectrum_csv(os.path.join(out_dir, "spectra.csv"), spectra,
                       config.model, dict(header, spin_component="z"))
    files["spectra.csv"] = os.path.join(out_dir, "spectra.csv")
    conv = {"itebd": report.as_dict(),
            "n": cset.filling, "p": cset.p}
    manifest = build_manifest(config, args.command_line, files, conv,
                              {"total": time.perf_counter() - start})
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"itebd: e = {format_float(report.final_energy_per_site)} "
          f"per site, n = {cset.filling:.6f}, p = {cset.p:+.6f}, "
          f"artifacts in {out_dir}")
    return 0


def _cmd_correlate(args, config: RunConfig) -> int:
    out_dir = args.resolved_out
    files: dict = {}
    start = time.perf_counter()
    if not os.path.isfile(args.state):
        raise ConfigError(f"state file not found: {args.state}")
    state, meta = load_state(args.state)
    params = None
    if isinstance(meta.get("model"), dict):
        params = ModelParams(**meta["model"])
    cset = correlation_set(state, config.m)
    write_correlation_csv(os.path.join(out_dir, "correlations.csv"), cset,
                          params, {"source_state": args.state})
    files["correlations.csv"] = os.path.join(out_dir, "correlations.csv")
    spectra = _spectra_columns(cset, default_k_grid(config.k_points))
    write_spectrum_csv(os.path.join(out_dir, "spectra.csv"), spectra,
                       params, {"source_state": args.state,
                                "spin_component": "z"})
    files["spectra.csv"] = os.path.join(out_dir, "spectra.csv")
    conv = {"source_state_meta": meta,
            "n": cset.filling, "p": cset.p}
    manifest = build_manifest(config, args.command_line, files, conv,
                              {"total": time.perf_counter() - start})
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"correlate: n = {cset.filling:.6f}, p = {cset.p:+.6f}, "
          f"artifacts in {out_dir}")
    return 0


def _parse_mu_list(raw: str):
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--mu-list: {exc}") from exc
    if not values:
        raise ConfigError("--mu-list needs at least one value")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"--mu-list must be strictly descending, "
                          f"got {raw!r}")
    return values


def _cmd_sweep(args, config: RunConfig) -> int:
    out_dir = args.resolved_out
    mu_list = _parse_mu_list(args.mu_list)
    base = {"t": config.model.t, "delta_g": config.model.delta_g,
            "delta_t": config.model.delta_t, "U": config.model.U}
    start = time.perf_counter()
    files, summary = _run_one_sweep(config, base, args.delta_mu, mu_list,
                                    out_dir, prefix="")
    conv = {"sweep": {"delta_mu": args.delta_mu, "points": summary}}
    manifest = build_manifest(config, args.command_line, files, conv,
                              {"total": time.perf_counter() - start})
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    n_failed = sum(1 for point in summary if point["failed"])
    for point in summary:
        print(f"mu = {point['mu']:+.4f}: n = {point['n']:.4f}, "
              f"p = {point['p']:+.4f}, {point['phase']}")
    print(f"sweep: {len(summary) - n_failed}/{len(summary)} points "
          f"converged, artifacts in {out_dir}")
    return 1 if n_failed else 0


def _cmd_reproduce(args, config: RunConfig) -> int:
    out_dir = args.resolved_out
    start = time.perf_counter()
    files: dict = {}
    conv: dict = {}
    walls: dict = {}
    if args.figure == "fig1":
        payloads = [(config, u, dg, out_dir) for u, dg in FIG1_GRID]
        for tag, curve_files, curve_conv, wall in _run_tasks(
                _fig1_worker, payloads, args.threads):
            files.update(curve_files)
            conv[tag] = curve_conv
            walls[tag] = wall
    else:
        if args.figure == "fig2":
            base, dmu_values, mu_list = FIG2_BASE, FIG2_DELTA_MU, FIG2_MU_LIST
        else:
            base, dmu_values, mu_list = FIG3_BASE, FIG3_DELTA_MU, FIG3_MU_LIST
        payloads = [(config, base, dmu, mu_list, out_dir,
                     f"dmu{_num_tag(dmu)}_") for dmu in dmu_values]
        for tag, sweep_files, summary, wall in _run_tasks(
                _sweep_worker, payloads, args.threads):
            files.update(sweep_files)
            conv[tag] = summary
            walls[tag] = wall
    walls["total"] = time.perf_counter() - start
    manifest = build_manifest(config, args.command_line, files, conv, walls)
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"reproduce {args.figure}: {len(files)} artifact files "
          f"in {out_dir}")
    return 0


# ------------------------------------------------------------------ main

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="INI-style run configuration file")
    common.add_argument("--out", metavar="DIR",
                        help="artifact directory (default: "
                             f"${OUT_ROOT_ENV} or ./runs, per-command "
                             "subdirectory)")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the engine seed")
    common.add_argument("--chi", type=int, metavar="N",
                        help="override the bond-dimension cap")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker processes for independent points "
                             "(0 = auto)")

    parser = argparse.ArgumentParser(
        prog="ghm1d",
        description="Ground states, correlation spectra, and trap sweeps "
                    "for the 1D Hubbard chain with correlated hopping.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("check-gates", parents=[common],
                   help="run the local-algebra self-check table")

    p_ed = sub.add_parser("ed", parents=[common],
                          help="exact diagonalization on a short chain")
    p_ed.add_argument("--length", type=int, default=6,
                      help="chain length (even, <= 12)")
    p_ed.add_argument("--boundary", choices=("open", "periodic"),
                      default="open")
    p_ed.add_argument("--sector", metavar="NUP,NDOWN",
                      help="fix the particle-number sector "
                           "(default: scan all sectors)")
    p_ed.add_argument("--averaging", choices=("central-site", "all-site"),
                      default="central-site")

    sub.add_parser("itebd", parents=[common],
                   help="infinite-chain ground state, correlations, spectra")

    p_corr = sub.add_parser("correlate", parents=[common],
                            help="correlations and spectra from a saved "
                                 "state checkpoint")
    p_corr.add_argument("--state", required=True, metavar="PATH",
                        help="state.npz checkpoint from an itebd run")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="chemical-potential sweep with phase "
                                  "classification")
    p_sweep.add_argument("--delta-mu", type=float, required=True,
                         dest="delta_mu")
    p_sweep.add_argument("--mu-list", required=True, dest="mu_list",
                         metavar="MU1,MU2,...",
                         help="strictly descending mean chemical potentials")

    p_rep = sub.add_parser("reproduce", parents=[common],
                           help="run a full published-figure parameter grid")
    p_rep.add_argument("figure", choices=("fig1", "fig2", "fig3"))
    return parser


_HANDLERS = {
    "check-gates": _cmd_check_gates,
    "ed": _cmd_ed,
    "itebd": _cmd_itebd,
    "correlate": _cmd_correlate,
    "sweep": _cmd_sweep,
    "reproduce": _cmd_reproduce,
}

_DIRLESS = {"check-gates"}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    args.command_line = "ghm1d " + " ".join(sys.argv[1:] if argv is None
                                            else argv)
    out_dir = None
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config = config.replace(seed=args.seed)
        if args.chi is not None:
            if args.chi < 1:
                raise ConfigError(f"--chi must be >= 1, got {args.chi}")
            config = config.replace(chi=args.chi)
        if args.command not in _DIRLESS:
            name = args.command
            if args.command == "reproduce":
                name = f"reproduce-{args.figure}"
            out_dir = _resolve_out_dir(args, config, name)
            os.makedirs(out_dir, exist_ok=True)
            args.resolved_out = out_dir
        return _HANDLERS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Ghm1dError as exc:
        print(f"compute failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        if out_dir is not None:
            marker = os.path.join(out_dir, "FAILED.txt")
            with open(marker, "w", encoding="utf-8") as fh:
                fh.write(f"{type(exc).__name__}: {exc}\n")
            partial = {name: os.path.join(out_dir, name)
                       for name in sorted(os.listdir(out_dir))
                       if name != "manifest.json"
                       and os.path.isfile(os.path.join(out_dir, name))}
            manifest = build_manifest(config, args.command_line, partial,
                                      {"failed":
                                       f"{type(exc).__name__}: {exc}"}, {})
            write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
        return 1


if __name__ == "__main__":
    sys.exit(main())
