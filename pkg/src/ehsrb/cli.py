"""Command-line harness: reproducible experiment runs with manifests.

Subcommands: simulate, eht-density, decompose, srb, oracle-check, tail-fit,
verify-conditions.  Every run writes its artifacts plus a manifest recording
the effective config, seed, command line, and output digests; identical
(config, seed) reproduce byte-identical outputs.

Exit codes: 2 unknown subcommand / bad usage, 3 malformed config,
4 unwritable output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, config_from_dict, default_config, load_config
from .errors import ConfigurationError, EhsrbError, StatisticsError
from .manifest import RunManifest, Timer, check_resume

EXIT_BAD_USAGE = 2
EXIT_BAD_CONFIG = 3
EXIT_BAD_OUTDIR = 4


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(
                [
                    repr(float(v)) if isinstance(v, (float, np.floating)) else v
                    for v in row
                ]
            )


def _build(cfg: RunConfig, which: str):
    from .systems import build_local_system, build_system

    if which == "local":
        return build_local_system(cfg.system, cfg.integrator)
    if which == "base":
        return build_system(cfg.system, cfg.integrator, slowed=False)
    return build_system(cfg.system, cfg.integrator, slowed=True)


def _seed_state(system, rng):
    from .systems import sample_states

    return sample_states(system, 1, rng, outside_z=True)[0]


# -- subcommand bodies -------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig, outdir: Path, rng) -> list[Path]:
    from .eht import orbit_log

    system = _build(cfg, args.system)
    x0 = _seed_state(system, rng)
    log = orbit_log(system, x0, args.n, cone_cfg=cfg.cones)
    path = outdir / "orbit.csv"
    d = system.dim
    header = [f"x{i+1}" for i in range(d)] + [
        "lambda_u", "lambda_s", "defect", "lambda", "theta",
    ]
    _write_csv(path, header, log.to_rows())
    return [path]


def cmd_eht_density(args, cfg: RunConfig, outdir: Path, rng) -> list[Path]:
    from .eht import eh_statistics, orbit_log

    system = _build(cfg, args.system)
    q_list = list(range(0, args.q + 1, max(args.q // 4, 1))) if args.q else [0]
    theta_grid = list(cfg.eht.theta_bar_grid)
    if args.theta_bar is not None:
        theta_grid = sorted(set(theta_grid + [args.theta_bar]), reverse=True)

    def one(i):
        r = np.random.default_rng(np.random.SeedSequence([args.seed, i]))
        x0 = _seed_state(system, r)
        log = orbit_log(system, x0, args.n, cone_cfg=cfg.cones)
        return eh_statistics(
            log, cfg.eht.lambda_bar, cfg.eht.big_c, q_list, theta_grid,
            cfg=cfg.eht, cone_cfg=cfg.cones,
        )

    stats = _pmap(one, range(args.orbits), args.threads)
    per_q = []
    for j, q in enumerate(q_list):
        per_q.append(
            {
                "q": int(q),
                "density_lower": float(
                    np.mean([s["eh1_prime"][j]["density_lower"] for s in stats])
                ),
                "density_upper": float(
                    np.mean([s["eh1_prime"][j]["density_upper"] for s in stats])
                ),
            }
        )
    eh2 = []
    for j, tb in enumerate(theta_grid):
        eh2.append(
            {
                "theta_bar": float(tb),
                "freq": float(np.mean([s["eh2"][j]["freq"] for s in stats])),
            }
        )
    report = {
        "lambda_bar": cfg.eht.lambda_bar,
        "q": per_q[-1]["q"],
        "density_lower": per_q[-1]["density_lower"],
        "density_upper": per_q[-1]["density_upper"],
        "per_q": per_q,
        "eh2": eh2,
        "eh1_final_mean": float(np.mean([s["eh1_final_mean"] for s in stats])),
        "n_orbits": int(args.orbits),
        "orbit_length": int(args.n),
    }
    path = outdir / "eht.json"
    _write_json(path, report)
    return [path]


def cmd_decompose(args, cfg: RunConfig, outdir: Path, rng) -> list[Path]:
    from .decompose import local_tail_times, tail_histogram
    from .tailfit import return_time_tail_fit

    system = _build(cfg, "local")
    tau = local_tail_times(
        system, args.n, half_width=args.half_width, tau_cap=cfg.curves.tau_cap * 5
    )
    ts, counts, mass = tail_histogram(tau, point_mass=2 * args.half_width / args.n)
    hist_path = outdir / "tail_histogram.csv"
    _write_csv(
        hist_path,
        ["t", "count", "mass"],
        [(int(t), int(c), float(m)) for t, c, m in zip(ts, counts, mass)],
    )
    out = [hist_path]
    pieces_path = outdir / "pieces.json"
    from .decompose import decomposition_with_report

    ccfg = replace(cfg.curves, tau_cap=min(cfg.curves.tau_cap, 120))
    seed_curve = _entry_curve(system, cfg)
    pieces, dec_report = decomposition_with_report(system, seed_curve, ccfg)
    _write_json(
        pieces_path,
        {"pieces": [p.to_dict() for p in pieces], "report": dec_report},
    )
    out.append(pieces_path)
    fit_path = outdir / "tail_fit.json"
    try:
        fit = return_time_tail_fit(ts, counts.astype(float))
        _write_json(fit_path, fit.to_dict())
    except StatisticsError as exc:
        _write_json(fit_path, {"error": str(exc)})
    out.append(fit_path)
    return out


def _entry_curve(system, cfg: RunConfig):
    from .curves import straight_seed

    height = system.R_Z + 0.04
    center = np.array([0.0, height]) if system.is_local else None
    if center is None:
        center = np.array([1.5, 0.3, 0.0])
    return straight_seed(
        system, center, 2 * cfg.curves.epsilon, 201, cfg=cfg.curves
    )


def cmd_srb(args, cfg: RunConfig, outdir: Path, rng) -> list[Path]:
    from .curves import straight_seed
    from .measures import cesaro_measure, ks_to_uniform, lyapunov_exponents

    system = _build(cfg, args.system)
    srb_cfg = replace(cfg.srb, grid_n=args.grid) if args.grid else cfg.srb
    if system.is_local:
        center = np.array([0.0, system.R_Z + 0.04])
    else:
        center = np.array([1.5, 0.3, 0.0])
    curve = straight_seed(system, center, 2 * cfg.curves.epsilon, 401, cfg=cfg.curves)
    meas = cesaro_measure(system, curve, args.n, cfg=srb_cfg)
    hist = meas.histogram()
    nz = np.flatnonzero(hist)
    hist_path = outdir / "measure_boxes.csv"
    _write_csv(
        hist_path, ["box_index", "mass"], [(int(i), float(hist[i])) for i in nz]
    )
    sidecar = {
        "grid": {"n": meas.grid.n, "lo": list(meas.grid.lo), "hi": list(meas.grid.hi)},
        "mass": meas.mass,
        "provenance": {
            "system": args.system,
            "n_cesaro": int(args.n),
            "curve_samples": int(curve.n),
            "seed": int(args.seed),
        },
    }
    side_path = outdir / "measure_meta.json"
    _write_json(side_path, sidecar)
    edges, marg = meas.fine_marginal
    marg_path = outdir / "marginal.csv"
    _write_csv(
        marg_path,
        ["bin_lo", "bin_hi", "mass"],
        [
            (float(edges[i]), float(edges[i + 1]), float(marg[i]))
            for i in range(marg.size)
        ],
    )
    x0 = _seed_state(system, rng)
    lyap = lyapunov_exponents(system, x0, min(args.n * 4, 20000))
    lyap["ks_marginal_to_uniform"] = ks_to_uniform(edges, marg)
    lyap_path = outdir / "lyapunov.json"
    _write_json(lyap_path, lyap)
    return [hist_path, side_path, marg_path, lyap_path]


def cmd_oracle_check(args, cfg: RunConfig, outdir: Path, rng) -> list[Path]:
    from .oracles import run_oracle_suite

    system = _build(cfg, "local")
    report = run_oracle_suite(
        system, cfg.oracles, n_traces=args.n, seed=args.seed, threads=args.threads
    )
    path = outdir / "oracle.json"
    _write_json(path, report)
    if args.dump_traces:
        from .flow import full_passage

        tr = full_passage(system, 10.0, tan_rho0=0.1)
        trace_path = outdir / "trace.csv"
        tr.to_csv(trace_path)
        return [path, trace_path]
    return [path]


def cmd_tail_fit(args, cfg: RunConfig, outdir: Path, rng) -> list[Path]:
    from .tailfit import return_time_tail_fit

    ts, counts = [], []
    with open(args.histogram) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ts.append(float(row["t"]))
            counts.append(float(row.get("count", row.get("mass"))))
    fit = return_time_tail_fit(np.array(ts), np.array(counts))
    path = outdir / "tail_fit.json"
    _write_json(path, fit.to_dict())
    return [path]


def cmd_verify_conditions(args, cfg: RunConfig, outdir: Path, rng) -> list[Path]:
    from .conditions import verify_conditions

    report = verify_conditions(cfg, n_c1=args.n, seed=args.seed)
    path = outdir / "conditions.json"
    _write_json(path, report)
    return [path]


# -- wiring ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ehsrb",
        description="slowed-solenoid SRB estimation and passage-law checks",
    )
    p.add_argument("--config", type=str, default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=20260810)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=str, default="runs/out")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--alpha", type=float, default=None, help="override alpha")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="orbit with per-step rate records")
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--system", choices=["slowed", "base", "local"], default="slowed")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("eht-density", help="effective-hyperbolicity statistics")
    s.add_argument("--n", type=int, default=800)
    s.add_argument("--orbits", type=int, default=8)
    s.add_argument("--q", type=int, default=20)
    s.add_argument("--theta-bar", type=float, default=None)
    s.add_argument("--system", choices=["slowed", "base"], default="slowed")
    s.set_defaults(func=cmd_eht_density)

    s = sub.add_parser("decompose", help="pieces, tail histogram, tail fit")
    s.add_argument("--n", type=int, default=200_000)
    s.add_argument("--half-width", type=float, default=0.02)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("srb", help="Cesaro measure, marginals, Lyapunov spectrum")
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--grid", type=int, default=None)
    s.add_argument("--system", choices=["slowed", "base", "local"], default="base")
    s.set_defaults(func=cmd_srb)

    s = sub.add_parser("oracle-check", help="verify all passage laws")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--dump-traces", action="store_true")
    s.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("tail-fit", help="fit an existing histogram CSV")
    s.add_argument("histogram", type=str)
    s.set_defaults(func=cmd_tail_fit)

    s = sub.add_parser("verify-conditions", help="cone/decomposition certificates")
    s.add_argument("--n", type=int, default=300)
    s.set_defaults(func=cmd_verify_conditions)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.alpha is not None:
            cfg = RunConfig(
                system=replace(cfg.system, alpha=args.alpha),
                integrator=cfg.integrator,
                cones=cfg.cones,
                eht=cfg.eht,
                curves=cfg.curves,
                srb=cfg.srb,
                oracles=cfg.oracles,
            )
        cfg.system.validate()
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    outdir = Path(args.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"output dir not writable: {exc}", file=sys.stderr)
        return EXIT_BAD_OUTDIR

    flags = {
        k: v
        for k, v in vars(args).items()
        if k not in {"func", "command"} and not callable(v)
    }
    manifest = RunManifest(
        command=args.command,
        flags={k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        seed=args.seed,
        config=cfg.to_dict(),
        version=__version__,
    )
    if args.resume:
        try:
            check_resume(outdir, manifest)
        except RuntimeError as exc:
            print(str(exc), file=sys.stderr)
            return 1

    rng = np.random.default_rng(args.seed)
    try:
        with Timer() as timer:
            outputs = args.func(args, cfg, outdir, rng)
    except EhsrbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest.wall_time = timer.elapsed
    for path in outputs:
        manifest.register(path)
    manifest.write(outdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
