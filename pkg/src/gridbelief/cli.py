"""Command-line entry point: ``gridbelief build-map|localize|simulate|eval|synth``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from gridbelief import io, sim
from gridbelief.grid import GridGeometry, merge_stats
from gridbelief.likelihood import LikelihoodMode, MapLikelihood
from gridbelief.localization import ZeroMassError, run_mcl
from gridbelief.mapping import ModelKind, PriorParams, build_stats, fit_prior
from gridbelief.metrics import evaluate, paired_modes

DEFAULT_EDGE = 0.5


def _triple(text: str, kind=float):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three values, got {text!r}")
    return tuple(kind(p) for p in parts)


def _int_list(text: str):
    return [int(p) for p in text.replace(",", " ").split() if p]


def parse_prior(text: str, model: ModelKind, grid=None) -> PriorParams:
    """``uniform``, ``uninformative``, ``moment-matched`` or ``fixed=alpha,beta``."""
    model = ModelKind(model)
    if text == "uniform":
        if model is not ModelKind.REFLECTION:
            raise ValueError("the uniform prior applies to reflection maps")
        return PriorParams.uniform()
    if text == "uninformative":
        if model is not ModelKind.DECAY:
            raise ValueError("the uninformative prior applies to decay maps")
        return PriorParams.uninformative()
    if text == "moment-matched":
        if grid is None:
            raise ValueError("moment matching needs a map")
        return fit_prior(grid, model)
    if text.startswith("fixed="):
        a, b = (float(x) for x in text[len("fixed="):].split(","))
        return PriorParams(model, a, b)
    raise ValueError(f"unknown prior {text!r}")


def _write_csv(rows: list[dict], output: Optional[str]) -> None:
    if not rows:
        return
    fh = open(output, "w", newline="") if output else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    finally:
        if output:
            fh.close()


def _log_stats(records, geometry: GridGeometry):
    origins, dirs, radii, status = [], [], [], []
    for rec in records:
        s = rec.scan
        origins.append(np.tile(rec.pose.position, (len(s), 1)))
        dirs.append(s.directions @ rec.pose.rotation().T)
        radii.append(s.radii)
        status.append(s.status)
    if not origins:
        return build_stats(geometry, np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))
    return build_stats(geometry, np.concatenate(origins), np.concatenate(dirs),
                       np.concatenate(radii), np.concatenate(status))


def cmd_build_map(args) -> int:
    model = ModelKind(args.model)
    geom = GridGeometry(args.dims, args.voxel_size, args.origin)
    grid = None
    used = 0
    for log in args.log:
        g, u = _log_stats(io.read_scan_log(log), geom)
        grid = g if grid is None else merge_stats(grid, g)
        used += u
    prior_text = args.prior or "moment-matched"
    try:
        prior = parse_prior(prior_text, model, grid)
    except ValueError as err:
        if args.prior:
            raise
        prior = PriorParams.uniform() if model is ModelKind.REFLECTION else PriorParams.uninformative()
        print(f"moment matching failed ({err}); storing {prior}", file=sys.stderr)
    io.write_map(args.output, io.MapFile(model, grid, prior))
    _, H, M, R = grid.to_arrays()
    print(f"beams used: {used}")
    print(f"voxels observed: {len(grid)} of {geom.size} ({100.0 * len(grid) / geom.size:.2f}%)")
    print(f"hits: {int(H.sum())}  misses: {int(M.sum())}  distance: {float(R.sum()):.3f} m")
    print(f"prior ({prior_text}): alpha={prior.alpha:.6g} beta={prior.beta:.6g}")
    return 0


def _mode_for(mf: io.MapFile, args) -> LikelihoodMode:
    prior = parse_prior(args.prior, mf.model, mf.grid) if args.prior else mf.prior
    mlm, fmp = paired_modes(mf.grid, prior, args.floor)
    return mlm if args.mode == "mlm" else fmp


def cmd_localize(args) -> int:
    mf = io.read_map(args.map, args.model)
    records = list(io.read_scan_log(args.log))
    if not records:
        raise ValueError("scan log is empty")
    model = MapLikelihood(mf.grid, _mode_for(mf, args))
    poses = [r.pose for r in records]
    scans = [r.scan.subsample(args.beam_step) for r in records]
    try:
        init = (args.init_sigma_trans, args.init_sigma_rot)
        motion = (init[0] if args.motion_sigma_trans is None else args.motion_sigma_trans,
                  init[1] if args.motion_sigma_rot is None else args.motion_sigma_rot)
        res = run_mcl(model, poses, scans, args.particles, init, motion, args.seed)
    except ZeroMassError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    rows = []
    for rec, est, err in zip(records, res.estimates, res.errors):
        yaw, pitch, roll = est.euler_zyx()
        x, y, z = est.position
        rows.append({"t": rec.timestamp, "x": x, "y": y, "z": z, "yaw": yaw, "pitch": pitch,
                     "roll": roll, "error": err})
    _write_csv(rows, args.output)
    return 0


def cmd_simulate(args) -> int:
    models = [ModelKind(args.model)] if args.model else list(ModelKind)
    rows = []
    for model in models:
        rows += sim.sweep_rows(model, args.n_list, args.runs, args.seed, length=args.length,
                               iterations=args.iterations, decay_mapping=args.decay_mapping)
    _write_csv(rows, args.output)
    return 0


def cmd_eval(args) -> int:
    mf = io.read_map(args.map, args.model)
    records = list(io.read_scan_log(args.log))
    if not records:
        raise ValueError("scan log is empty; nothing to evaluate")
    prior = parse_prior(args.prior, mf.model, mf.grid) if args.prior else mf.prior
    rep = evaluate(mf.grid, [(r.pose, r.scan) for r in records], prior, args.sigma, args.samples)
    rows = rep.as_rows()
    for r in rows:
        print(f"{r['metric']}: {r['value']}")
    if args.output:
        _write_csv(rows, args.output)
    return 0


def cmd_synth(args) -> int:
    """Write mapping and held-out scan logs for a synthetic world."""
    from gridbelief.world import make_scenario

    sc = make_scenario(args.model or "decay", args.seed, dims=args.dims, edge=args.voxel_size,
                       map_poses=args.map_scans, test_poses=args.test_scans)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    io.write_scan_log(out / "mapping.log", [io.ScanRecord(float(t), p, s)
                                            for t, (p, s) in enumerate(zip(sc.map_poses, sc.map_scans))])
    io.write_scan_log(out / "test.log", [io.ScanRecord(float(t), p, s)
                                         for t, (p, s) in enumerate(zip(sc.test_poses, sc.test_scans))])
    g = sc.world.geometry
    print(f"--dims {','.join(map(str, g.dims))} --voxel-size {g.edge} --origin {','.join(map(str, g.origin))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridbelief", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def geometry(sp):
        sp.add_argument("--dims", type=lambda s: _triple(s, int), required=True, help="voxels per axis, e.g. 40,40,8")
        sp.add_argument("--voxel-size", type=float, default=DEFAULT_EDGE, help="voxel edge in meters")
        sp.add_argument("--origin", type=_triple, default=(0.0, 0.0, 0.0), help="world position of the grid corner")

    def model(sp, required=False):
        sp.add_argument("--model", choices=[m.value for m in ModelKind], required=required)

    prior_help = "uniform, uninformative, moment-matched or fixed=ALPHA,BETA"

    b = sub.add_parser("build-map", help="accumulate voxel statistics from scan logs")
    b.add_argument("log", nargs="+", help="scan log(s); several logs are merged")
    model(b, required=True)
    geometry(b)
    b.add_argument("--prior", help=prior_help + " (stored in the map; default moment-matched)")
    b.add_argument("--output", "-o", required=True)
    b.set_defaults(func=cmd_build_map)

    def likelihood_flags(sp):
        sp.add_argument("--mode", choices=["mlm", "fmp"], default="fmp")
        sp.add_argument("--prior", help=prior_help + " (default: the map's stored prior)")
        sp.add_argument("--floor", type=float, default=None, help="lower bound on each beam's log-likelihood")

    lo = sub.add_parser("localize", help="particle-filter localization along a scan log")
    lo.add_argument("map")
    lo.add_argument("log")
    model(lo)
    likelihood_flags(lo)
    lo.add_argument("--particles", type=int, default=3000)
    lo.add_argument("--init-sigma-trans", type=float, default=0.1)
    lo.add_argument("--init-sigma-rot", type=float, default=0.1)
    lo.add_argument("--motion-sigma-trans", type=float, help="default: --init-sigma-trans")
    lo.add_argument("--motion-sigma-rot", type=float, help="default: --init-sigma-rot")
    lo.add_argument("--beam-step", type=int, default=1, help="use every k-th beam")
    lo.add_argument("--seed", type=int, default=0)
    lo.add_argument("--output", "-o")
    lo.set_defaults(func=cmd_localize)

    s = sub.add_parser("simulate", help="corridor experiment sweep")
    model(s)
    s.add_argument("--n-list", type=_int_list, default=list(sim.DEFAULT_N_LIST))
    s.add_argument("--runs", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--length", type=int, default=100)
    s.add_argument("--iterations", type=int, default=100)
    s.add_argument("--decay-mapping", choices=[d.value for d in sim.DecayMapping], default="direct")
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="log-likelihood and KL ratios at ground-truth poses")
    e.add_argument("map")
    e.add_argument("log")
    model(e)
    e.add_argument("--prior", help=prior_help + " (default: the map's stored prior)")
    e.add_argument("--sigma", type=float, default=0.05)
    e.add_argument("--samples", type=int, default=441)
    e.add_argument("--output", "-o")
    e.set_defaults(func=cmd_eval)

    y = sub.add_parser("synth", help="write scan logs for a synthetic world")
    model(y)
    y.add_argument("--dims", type=lambda s: _triple(s, int), default=(24, 24, 5))
    y.add_argument("--voxel-size", type=float, default=DEFAULT_EDGE)
    y.add_argument("--map-scans", type=int, default=40)
    y.add_argument("--test-scans", type=int, default=30)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--output", "-o", required=True, help="output directory")
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
