"""Command-line interface.

Exit codes: 0 success, 1 validation error (bad input, config or files),
2 numerical failure at runtime.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .character import CameraModel, CharacterModel, ConfigError, load_character, reference_human
from .control import OverdampedGainsWarning
from .dynamics import PoseState, contact_points, forward_dynamics, forward_kinematics, integrate
from .io import MotionFormatError, MotionSequence, read_contacts, read_motion, write_contacts, write_motion
from .metrics import MetricReport, e_smooth, penetration_metrics, position_accuracy, reprojection_error
from .pipeline import Pipeline, PipelineConfig, SimulationDiverged, auto_label, joint_positions, write_diagnostics
from .synthetic import SyntheticMotionSpec, generate_synthetic

log = logging.getLogger("physmotion")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2
_CONFIG_KEYS = {"character", "pipeline", "synthetic"}
_GAIN_BLOCKS = ("joint", "root_angular", "root_linear")


class NumericalFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# config


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        cfg = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{args.config}: parse error at line {e.lineno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{args.config}: top level must be an object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        msg = f"{args.config}: unknown section(s) {sorted(unknown)}"
        if args.strict:
            raise ConfigError(msg)
        log.warning(msg)
    return cfg


def _model(args, cfg) -> CharacterModel:
    src = args.character or cfg.get("character")
    if src is None:
        return reference_human()
    return load_character(src, strict=args.strict)


def _pipeline_config(args, cfg) -> PipelineConfig:
    d = dict(cfg.get("pipeline", {}))
    if getattr(args, "no_balance_correction", False):
        d["balance_correction"] = False
    gains = dict(d.get("gains", {}))
    for spec in getattr(args, "gain", None) or []:
        block, _, vals = spec.partition("=")
        if block not in _GAIN_BLOCKS:
            raise ConfigError(f"--gain block must be one of {_GAIN_BLOCKS}, got {block!r}")
        try:
            kp, kd = (float(v) for v in vals.split(","))
        except ValueError:
            raise ConfigError(f"--gain expects BLOCK=KP,KD, got {spec!r}") from None
        gains[f"{block}_kp"], gains[f"{block}_kd"] = kp, kd
    if gains:
        d["gains"] = gains
    try:
        return PipelineConfig.from_dict(d)
    except TypeError as e:
        raise ConfigError(str(e)) from None


# --------------------------------------------------------------------------
# subcommands


def _filter_one(model_src, strict, cfg_dict, inp, contacts, out, diag):
    # top level so it pickles for the process pool
    model = reference_human() if model_src is None else load_character(model_src, strict=strict)
    config = PipelineConfig.from_dict(cfg_dict)
    motion = read_motion(inp, model)
    labels = None if contacts == "auto" else read_contacts(contacts)
    _, results = _run_filter(model, config, motion, labels, out)
    if diag:
        write_diagnostics(model, results, diag)
    return out


def _run_filter(model, config, motion, labels, out):
    pipe = Pipeline(model, config, motion.fps)
    filtered, results = pipe.process_sequence(motion, labels)
    if not np.all(np.isfinite(filtered.q)):
        raise NumericalFailure("filter produced non-finite poses")
    filtered.positions = joint_positions(model, filtered.q)
    write_motion(filtered, out)
    warn = pipe.state.solver.warnings if pipe.state else 0
    if warn:
        log.warning("%s: %d torque QP fallback(s)", out, warn)
    return filtered, results


def cmd_filter(args, cfg) -> int:
    model = _model(args, cfg)
    config = _pipeline_config(args, cfg)
    inputs = args.input
    if len(inputs) == 1:
        outs = [args.output]
    else:
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        outs = [str(outdir / Path(p).name) for p in inputs]
        if args.contacts != "auto":
            raise ConfigError("batch mode only supports --contacts auto")
        if args.diagnostics:
            raise ConfigError("--diagnostics needs a single input")
    if len(inputs) == 1:
        motion = read_motion(inputs[0], model)
        labels = None if args.contacts == "auto" else read_contacts(args.contacts)
        _, results = _run_filter(model, config, motion, labels, outs[0])
        if args.diagnostics:
            write_diagnostics(model, results, args.diagnostics)
        return EXIT_OK
    model_src = args.character or cfg.get("character")
    jobs = [(model_src, args.strict, config.to_dict(), i, "auto", o, None) for i, o in zip(inputs, outs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            list(ex.map(_filter_one, *zip(*jobs)))
    else:
        for j in jobs:
            _filter_one(*j)
    return EXIT_OK


def cmd_label(args, cfg) -> int:
    model = _model(args, cfg)
    motion = read_motion(args.input, model)
    th = _pipeline_config(args, cfg).thresholds
    write_contacts(auto_label(model, motion, th), args.output)
    return EXIT_OK


def _positions(model, seq: MotionSequence) -> np.ndarray:
    if seq.positions is not None:
        return seq.positions
    return joint_positions(model, seq.q)


def _foot_positions(model, seq: MotionSequence) -> np.ndarray:
    return np.array([contact_points(model, forward_kinematics(model, q)) for q in seq.q])


def _load_camera(path) -> CameraModel:
    try:
        return CameraModel.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: invalid camera file ({e})") from None


def cmd_evaluate(args, cfg) -> int:
    model = _model(args, cfg)
    pred = read_motion(args.pred, model)
    gt = read_motion(args.gt, model)
    if len(pred) != len(gt):
        raise ConfigError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    P, G = _positions(model, pred), _positions(model, gt)
    acc = position_accuracy(P, G, args.mode)
    rep = MetricReport(mpjpe=acc.mpjpe, pck=acc.pck, auc=acc.auc)
    if len(pred) >= 2:
        rep.e_smooth, rep.e_smooth_std = e_smooth(P, G)
    if args.contacts:
        labels = np.array([s.contact for s in read_contacts(args.contacts)])
        pen = penetration_metrics(_foot_positions(model, pred), labels, model.floor)
        rep.mpe, rep.mpe_std, rep.pnp = pen.mpe, pen.mpe_std, pen.pnp
    cams = {}
    if args.camera:
        cams["input"] = _load_camera(args.camera)
    elif model.camera is not None:
        cams["input"] = model.camera
    if args.side_camera:
        cams["side"] = _load_camera(args.side_camera)
    for name, cam in cams.items():
        gt2d = gt.keypoints.get(name)
        if gt2d is None:
            gt2d = cam.project(G)[0]
        r = reprojection_error(P, gt2d, cam, cams.get("input") if name == "side" else None)
        setattr(rep, f"e2d_{name}", r.mean)
        setattr(rep, f"e2d_{name}_std", r.std)
    print(rep.table())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            d = rep.as_dict()
            w.writerow(d.keys())
            w.writerow(d.values())
    return EXIT_OK


def _read_torques(path, model) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != model.dof_names:
        raise MotionFormatError(f"{path}: header must list the model's {model.dof_count} DoF names")
    try:
        tau = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, model.dof_count)
    except ValueError as e:
        raise MotionFormatError(f"{path}: {e}") from None
    return tau


def cmd_simulate(args, cfg) -> int:
    """Free-flight forward simulation under per-frame generalized forces."""
    model = _model(args, cfg)
    init = read_motion(args.input, model)
    if len(init) == 0:
        raise ConfigError("initial motion has no frames")
    tau = _read_torques(args.torques, model)
    fps = init.fps
    phi = 1.0 / (fps * args.substeps)
    q0 = init.q[0]
    qd0 = (init.q[1] - init.q[0]) * fps if len(init) > 1 else np.zeros_like(q0)
    state = PoseState(q0, qd0)
    out = [state.q.copy()]
    for t in tau[:-1] if len(tau) else []:
        for _ in range(args.substeps):
            qdd = forward_dynamics(model, state.q, state.qdot, t, args.gravity)
            state = integrate(model, state, qdd, phi)
        if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.qdot))):
            raise NumericalFailure(f"simulation diverged at frame {len(out)}")
        out.append(state.q.copy())
    write_motion(MotionSequence.from_model(model, np.array(out), fps), args.output)
    return EXIT_OK


_GEN_FIELDS = ("kind", "frames", "fps", "amplitude", "frequency", "step_length", "cycle_time",
               "step_height", "base", "angle_noise", "position_noise", "depth")


def cmd_gen(args, cfg) -> int:
    model = _model(args, cfg)
    d = dict(cfg.get("synthetic", {}))
    d.update({k: getattr(args, k) for k in _GEN_FIELDS if getattr(args, k) is not None})
    if args.seed is not None:
        d["seed"] = args.seed
    spec = SyntheticMotionSpec.from_dict(d)
    syn = generate_synthetic(spec, model)
    seq = syn.corrupted
    seq.positions = joint_positions(model, seq.q)
    write_motion(seq, args.output)
    if args.clean:
        clean = syn.clean
        clean.positions = joint_positions(model, clean.q)
        write_motion(clean, args.clean)
    if args.contacts:
        write_contacts(syn.contacts, args.contacts)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with optional 'character', 'pipeline', "
                                         "'synthetic' sections")
    common.add_argument("--character", help="character document (JSON); default: reference human")
    common.add_argument("--seed", type=int, default=None, help="seed for synthetic generators")
    common.add_argument("--strict", action="store_true", help="reject unknown fields")
    common.add_argument("--diagnostics", metavar="CSV", help="per-iteration QP dump (filter)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="physmotion", parents=[common],
                                description="Physics-based filtering of captured human motion.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("filter", parents=[common], help="filter motion file(s)")
    f.add_argument("--input", nargs="+", required=True)
    f.add_argument("--contacts", default="auto", help="'auto' or a contact CSV")
    f.add_argument("--output", required=True, help="output file, or directory for several inputs")
    f.add_argument("--no-balance-correction", action="store_true")
    f.add_argument("--gain", action="append", metavar="BLOCK=KP,KD",
                   help=f"override a gain block ({', '.join(_GAIN_BLOCKS)})")
    f.add_argument("--jobs", type=int, default=1, help="parallel workers in batch mode")
    f.set_defaults(func=cmd_filter)

    lc = sub.add_parser("label-contacts", parents=[common], help="write a contact CSV")
    lc.add_argument("--input", required=True)
    lc.add_argument("--output", required=True)
    lc.set_defaults(func=cmd_label)

    e = sub.add_parser("evaluate", parents=[common], help="compare two motion files")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--contacts", help="ground-truth contact CSV for MPE/PNP")
    e.add_argument("--camera", help="input camera JSON")
    e.add_argument("--side-camera", help="side camera JSON")
    e.add_argument("--mode", default="raw", choices=("raw", "procrustes", "global_root"))
    e.add_argument("--csv", help="also write the table as CSV")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", parents=[common], help="forward-simulate under given forces")
    s.add_argument("--input", required=True, help="motion whose first frame(s) set the initial state")
    s.add_argument("--torques", required=True, help="CSV, header = DoF names, one row per frame")
    s.add_argument("--output", required=True)
    s.add_argument("--substeps", type=int, default=4)
    s.add_argument("--gravity", type=float, default=None)
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic fixture")
    g.add_argument("--kind", default=None)
    g.add_argument("--output", required=True, help="corrupted (input) motion")
    g.add_argument("--clean", help="also write the clean reference")
    g.add_argument("--contacts", help="also write the exact contact labels")
    for k, typ in (("frames", int), ("fps", float), ("amplitude", float), ("frequency", float),
                   ("step_length", float), ("cycle_time", float), ("step_height", float),
                   ("angle_noise", float), ("position_noise", float), ("depth", float)):
        g.add_argument(f"--{k.replace('_', '-')}", dest=k, type=typ, default=None)
    g.add_argument("--base", default=None)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    # the default root-linear gains are overdamped by design
    warnings.simplefilter("once" if args.verbose else "ignore", OverdampedGainsWarning)
    try:
        cfg = _load_config(args)
        return args.func(args, cfg)
    except (NumericalFailure, SimulationDiverged, FloatingPointError, np.linalg.LinAlgError) as e:
        # LinAlgError subclasses ValueError, so it must be caught first
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
