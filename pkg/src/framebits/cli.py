"""Frame-level bit prediction and simulated two-pass rate control.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 data-invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .complexity import analyze_sequence, read_features_csv, write_features_csv
from .dataset import (
    FRAME_TYPES,
    OracleCoeffs,
    SyntheticOracleParams,
    ingest_log,
    load_corpus,
    stack_corpus,
    sweep_encode,
    write_log,
)
from .errors import FramebitsError, InvalidConfig
from .gop import GopConfig, classify_frames, roles_to_csv
from .media_io import open_sequence, write_sequence
from .metrics import bd_rate, combined_yuv_psnr, mape, r2
from .models import ForestParams, importance, load_model, save_model
from .ratecontrol import (
    OracleBackend,
    RcConstants,
    ReplayBackend,
    c_high_for_height,
    calibrate_c_low,
    simulate_session,
)
from .synthvideo import generate_sequence, synthetic_corpus
from .training import cross_validate, fit_model, format_table, model_comparison

log = logging.getLogger("framebits")


# ------------------------------------------------------------------ helpers

def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _override(section, **values) -> None:
    for name, value in values.items():
        if value is not None:
            setattr(section, name, value)


def _snapshot(cfg: cfgmod.RunConfig, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "resolved_config.json").write_text(cfg.to_json() + "\n")


def _gop(cfg) -> GopConfig:
    return GopConfig(cfg.gop.gop_size, cfg.gop.intra_period)


def _forest_params(cfg) -> ForestParams:
    f = cfg.forest
    return ForestParams(f.n_estimators, f.max_depth, f.min_samples_split,
                        f.min_samples_leaf, f.max_features)


def _oracle_params(cfg) -> SyntheticOracleParams:
    s = cfg.synth
    base = SyntheticOracleParams(epsilon=s.epsilon, seed=s.seed)
    coeffs = dict(base.coeffs)
    for t, c in s.coeffs.items():
        coeffs[t] = OracleCoeffs(**c)
    return SyntheticOracleParams(coeffs=coeffs, epsilon=s.epsilon, seed=s.seed)


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _qp_range(args, cfg) -> tuple[int, int]:
    if args.qp_range:
        if len(args.qp_range) != 2:
            raise InvalidConfig("--qp-range takes MIN,MAX")
        return tuple(args.qp_range)
    return min(cfg.synth.base_qps), max(cfg.synth.base_qps)


def _load_models(path) -> dict:
    path = Path(path)
    if path.is_file():
        m = load_model(path)
        return {m.frame_type: m}
    models = {}
    for t in FRAME_TYPES:
        p = path / f"{t}.json"
        if p.exists():
            models[t] = load_model(p)
    if not models:
        raise FileNotFoundError(f"no model files (I.json, P.json, B.json) in {path}")
    return models


# ----------------------------------------------------------------- commands

def cmd_analyze(args, cfg) -> int:
    _override(cfg.geometry, width=args.width, height=args.height, frame_rate=args.frame_rate)
    _override(cfg.analysis, gaps=args.gaps, block_size=args.block_size, weight=args.weight)
    g, a = cfg.geometry, cfg.analysis
    start = time.perf_counter()
    with open_sequence(args.input, g.width, g.height, g.bit_depth, g.frame_rate) as seq:
        records = analyze_sequence(seq, a.gaps, a.block_size, cfg.threads, a.weight)
    elapsed = time.perf_counter() - start
    if args.output == "-":
        write_features_csv(records, sys.stdout)
    else:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        write_features_csv(records, args.output)
        _snapshot(cfg, Path(args.output).parent)
    log.info("analyzed %d frames in %.2fs (%.1f fps)", len(records), elapsed,
             len(records) / max(elapsed, 1e-9))
    return 0


def cmd_gop_dump(args, cfg) -> int:
    _override(cfg.gop, gop_size=args.gop_size, intra_period=args.intra_period)
    text = roles_to_csv(classify_frames(args.frames, _gop(cfg)))
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return 0


def cmd_synth(args, cfg) -> int:
    s = cfg.synth
    _override(s, sequences=args.sequences, frames=args.frames, width=args.width,
              height=args.height, seed=args.seed, epsilon=args.epsilon,
              base_qps=args.base_qps)
    out = Path(args.out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    params = _oracle_params(cfg)
    gop = _gop(cfg)
    records = []
    if args.features:
        for path in args.features:
            features = read_features_csv(path)
            roles = classify_frames(len(features), gop)
            sid = Path(path).stem
            write_features_csv(features, out / "features" / f"{sid}.csv")
            records += sweep_encode(features, roles, params, s.base_qps,
                                    cfg.gop.level_offsets, sid)
    else:
        if args.write_yuv:
            (out / "yuv").mkdir(exist_ok=True)
        for i in range(s.sequences):
            sid = f"syn{i:03d}"
            seq = generate_sequence(s.seed * 100_003 + i, s.width, s.height, s.frames)
            features = analyze_sequence(seq, cfg.analysis.gaps, cfg.analysis.block_size,
                                        cfg.threads, cfg.analysis.weight)
            roles = classify_frames(s.frames, gop)
            write_features_csv(features, out / "features" / f"{sid}.csv")
            if args.write_yuv:
                write_sequence(out / "yuv" / f"{sid}.yuv", seq)
            records += sweep_encode(features, roles, params, s.base_qps,
                                    cfg.gop.level_offsets, sid)
    write_log(records, out / "log.csv")
    _write_json(params.to_dict(), out / "oracle.json")
    _snapshot(cfg, out)
    log.info("wrote %d log rows to %s", len(records), out / "log.csv")
    return 0


def cmd_train(args, cfg) -> int:
    t = cfg.train
    _override(t, model=args.model, folds=args.folds, seed=args.seed)
    if args.no_chroma:
        t.use_chroma = False
    if args.log_target:
        t.log_target = True
    corpus = load_corpus(Path(args.data) / "features", Path(args.data) / "log.csv", _gop(cfg))
    types = [args.frame_type] if args.frame_type else list(FRAME_TYPES)
    out = Path(args.out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    fp = _forest_params(cfg)
    reports = []
    for ftype in types:
        if t.folds >= 2:
            rep = cross_validate(corpus, ftype, t.model, t.use_chroma, t.folds, t.seed,
                                 fp, cfg.threads, t.log_target)
            reports.append(rep)
        X, y, _ = stack_corpus(corpus, ftype, t.use_chroma)
        if len(y) == 0:
            log.warning("no %s-frame rows; no model written", ftype)
            continue
        model = fit_model(t.model, X, y, ftype, t.use_chroma, t.seed, fp, cfg.threads,
                          t.log_target)
        save_model(model, out / "models" / f"{ftype}.json")
    if reports:
        summary = {
            "folds": t.folds,
            "reports": [r.as_dict() for r in reports],
            "summary": {r.frame_type: {"mape": r.mape, "r2": r.r2} for r in reports},
        }
        _write_json(summary, out / "cv_report.json")
        print(format_table(reports))
    _snapshot(cfg, out)
    return 0


def cmd_predict(args, cfg) -> int:
    models = _load_models(args.models)
    corpus = load_corpus(Path(args.data) / "features", Path(args.data) / "log.csv", _gop(cfg))
    rows = []
    for seq in corpus:
        for ftype, model in models.items():
            use_chroma = "E_U" in model.feature_names
            truth = [r for r in seq.truth if r.frame_type == ftype]
            X, y, _ = stack_corpus([type(seq)(seq.sequence_id, seq.features, seq.roles, truth)],
                                   ftype, use_chroma)
            if len(y) == 0:
                continue
            pred = model.predict(X)
            for rec, p in zip(truth, pred):
                rows.append([rec.sequence_id, rec.frame_index, ftype, rec.q,
                             repr(float(rec.bits)), repr(float(p))])
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence_id", "frame_index", "frame_type", "q", "bits", "predicted"])
        w.writerows(rows)
    _snapshot(cfg, out.parent)
    return 0


def _read_rd_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        points = []
        for row in reader:
            if "quality" in row:
                q = float(row["quality"])
            else:
                q = combined_yuv_psnr(float(row["psnr_y"]), float(row["psnr_u"]),
                                      float(row["psnr_v"]))
            points.append((float(row["rate"]), q))
    return points


def cmd_evaluate(args, cfg) -> int:
    by_type: dict[str, tuple[list, list]] = {}
    with open(args.predictions, newline="") as fh:
        for row in csv.DictReader(fh):
            t, p = by_type.setdefault(row["frame_type"], ([], []))
            t.append(float(row["bits"]))
            p.append(float(row["predicted"]))
    result = {"schema_version": 1, "frame_types": {}}
    for ftype in FRAME_TYPES:
        if ftype in by_type:
            t, p = by_type[ftype]
            entry = {"n": len(t), "mape": mape(t, p)}
            entry["r2"] = r2(t, p) if len(t) >= 2 and np.var(t) > 0 else None
            result["frame_types"][ftype] = entry
    if args.anchor_rd and args.test_rd:
        result["bd_rate_percent"] = bd_rate(_read_rd_csv(args.anchor_rd),
                                            _read_rd_csv(args.test_rd), args.bd_method)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
        _snapshot(cfg, Path(args.output).parent)
    return 0


def cmd_importance(args, cfg) -> int:
    model = load_model(args.model)
    X = y = None
    if args.method == "permutation":
        if not args.data:
            raise InvalidConfig("permutation importance needs --data")
        corpus = load_corpus(Path(args.data) / "features", Path(args.data) / "log.csv",
                             _gop(cfg))
        X, y, _ = stack_corpus(corpus, model.frame_type, "E_U" in model.feature_names)
    report = importance(model, X, y, args.method, seed=args.seed)
    out = {**report.as_dict(), "ranking": report.ranking(), "frame_type": model.frame_type}
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    return 0


def cmd_simulate_rc(args, cfg) -> int:
    rc = cfg.rate_control
    _override(rc, target_bitrate=args.target_bitrate, c_low=args.c_low, c_high=args.c_high,
              q_start=args.q_start, base_qp=args.base_qp)
    _override(cfg.geometry, height=args.height, frame_rate=args.frame_rate)
    if args.per_frame:
        rc.per_frame = True
    if rc.target_bitrate is None:
        raise InvalidConfig("--target-bitrate is required")
    if rc.c_high is None:
        if cfg.geometry.height is None:
            raise InvalidConfig("give --c-high or --height to derive it")
        rc.c_high = c_high_for_height(cfg.geometry.height)
    features = read_features_csv(args.features)
    roles = classify_frames(len(features), _gop(cfg))
    models = _load_models(args.models)
    sid = args.sequence_id or Path(args.features).stem
    if args.backend == "oracle":
        params = (SyntheticOracleParams.from_dict(json.loads(Path(args.oracle).read_text()))
                  if args.oracle else _oracle_params(cfg))
        backend = OracleBackend(features, roles, params, sid)
    else:
        if not args.log:
            raise InvalidConfig("--backend replay needs --log")
        records = ingest_log(args.log)
        if args.calibrate:
            rc.c_low = calibrate_c_low(records)
        backend = ReplayBackend(records, sid)
    constants = RcConstants(rc.c_low, rc.c_high, rc.q_start)
    report = simulate_session(features, roles, models, rc.target_bitrate,
                              cfg.geometry.frame_rate, constants, backend,
                              cfg.gop.level_offsets, rc.base_qp, rc.strength, rc.per_frame,
                              _qp_range(args, cfg))
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(report.to_json() + "\n")
    _snapshot(cfg, Path(args.report).parent)
    print(f"target {report.total_target_bits:.0f} bits, achieved "
          f"{report.total_achieved_bits:.0f} bits, deviation "
          f"{report.deviation_percent:+.3f}%")
    return 0


def cmd_demo(args, cfg) -> int:
    s = cfg.synth
    _override(s, sequences=args.sequences, frames=args.frames, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = _oracle_params(cfg)
    fp = _forest_params(cfg)
    print(f"generating {s.sequences} synthetic sequences of {s.frames} frames "
          f"({s.width}x{s.height})")
    corpus = synthetic_corpus(s.sequences, params, s.frames, s.width, s.height, s.seed,
                              _gop(cfg), s.base_qps, cfg.gop.level_offsets,
                              cfg.analysis.gaps, cfg.analysis.block_size, cfg.threads)
    reports = model_comparison(corpus, cfg.train.folds, cfg.train.seed, fp, cfg.threads)
    print("\nFrame-level bit prediction, %d-fold cross-validation" % cfg.train.folds)
    print(format_table(reports))

    models, ranking = {}, {}
    for ftype in FRAME_TYPES:
        X, y, _ = stack_corpus(corpus, ftype, True)
        models[ftype] = fit_model("forest", X, y, ftype, True, cfg.train.seed, fp, cfg.threads)
        ranking[ftype] = importance(models[ftype]).ranking()
    print("\nImpurity importance ranking (top 3)")
    for ftype, names in ranking.items():
        print(f"  {ftype}: {', '.join(names[:3])}")

    rc_frames = 10 * cfg.gop.gop_size + 1
    seq = generate_sequence(s.seed * 100_003 + 99_991, s.width, s.height, rc_frames)
    features = analyze_sequence(seq, cfg.analysis.gaps, cfg.analysis.block_size, cfg.threads)
    roles = classify_frames(rc_frames, _gop(cfg))
    c_low = calibrate_c_low([r for seqd in corpus for r in seqd.truth])
    constants = RcConstants(c_low, c_high_for_height(s.height), cfg.rate_control.q_start)
    anchor = sweep_encode(features, roles, params, [32], cfg.gop.level_offsets, "rc")
    fps = cfg.geometry.frame_rate
    target = sum(r.bits for r in anchor) * fps / rc_frames
    print(f"\nRate control on a {rc_frames}-frame clip (c_low={c_low:.3f}, "
          f"c_high={constants.c_high:.3f})")
    print(f"{'mode':<22}| deviation from target [%]")
    result = {}
    for label, per_frame in (("GOP compensation", False), ("per-frame compensation", True)):
        backend = OracleBackend(features, roles, params, "rc")
        rep = simulate_session(features, roles, models, target, fps, constants, backend,
                               cfg.gop.level_offsets, None, 1.0, per_frame,
                               (min(s.base_qps), max(s.base_qps)))
        result[label] = rep.to_dict()
        print(f"{label:<22}| {rep.abs_deviation_percent:.3f}")
    _write_json({"model_comparison": [r.as_dict() for r in reports],
                 "importance_ranking": ranking, "rate_control": result},
                out / "demo_report.json")
    _snapshot(cfg, out)
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="framebits", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--threads", type=int, help="worker thread cap")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="complexity features of a raw YUV420p file")
    a.add_argument("input")
    a.add_argument("--width", type=int, required=True)
    a.add_argument("--height", type=int, required=True)
    a.add_argument("--frame-rate", type=float)
    a.add_argument("--gaps", type=_int_list)
    a.add_argument("--block-size", type=int)
    a.add_argument("--weight", choices=["exp2", "uniform"])
    a.add_argument("-o", "--output", default="-")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("gop", help="GOP structure tools")
    gsub = g.add_subparsers(dest="gop_command", required=True)
    gd = gsub.add_parser("dump", help="print frame roles as CSV")
    gd.add_argument("--frames", type=int, required=True)
    gd.add_argument("--gop-size", type=int)
    gd.add_argument("--intra-period", type=int)
    gd.add_argument("-o", "--output")
    gd.set_defaults(func=cmd_gop_dump)

    s = sub.add_parser("synth", help="label sequences with the synthetic encoder")
    s.add_argument("--out", required=True)
    s.add_argument("--features", nargs="*", help="existing feature CSVs to label")
    s.add_argument("--sequences", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--width", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--base-qps", type=_int_list)
    s.add_argument("--write-yuv", action="store_true")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="cross-validate and fit bit predictors")
    t.add_argument("--data", required=True, help="directory with features/ and log.csv")
    t.add_argument("--out", required=True)
    t.add_argument("--frame-type", choices=FRAME_TYPES)
    t.add_argument("--model", choices=["linear", "forest"])
    t.add_argument("--no-chroma", action="store_true")
    t.add_argument("--log-target", action="store_true")
    t.add_argument("--folds", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict frame bits for a dataset")
    pr.add_argument("--models", required=True, help="model file or directory")
    pr.add_argument("--data", required=True)
    pr.add_argument("-o", "--output", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="MAPE/R2 per frame type, optional BD-rate")
    e.add_argument("--predictions", required=True)
    e.add_argument("--anchor-rd")
    e.add_argument("--test-rd")
    e.add_argument("--bd-method", choices=["pchip", "cubic"], default="pchip")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_evaluate)

    im = sub.add_parser("importance", help="feature importance of a forest model")
    im.add_argument("--model", required=True)
    im.add_argument("--method", choices=["impurity", "permutation"], default="impurity")
    im.add_argument("--data")
    im.add_argument("--seed", type=int, default=0)
    im.add_argument("-o", "--output")
    im.set_defaults(func=cmd_importance)

    r = sub.add_parser("simulate-rc", help="simulate two-pass rate control")
    r.add_argument("--features", required=True)
    r.add_argument("--models", required=True)
    r.add_argument("--target-bitrate", type=float)
    r.add_argument("--frame-rate", type=float)
    r.add_argument("--c-low", type=float)
    r.add_argument("--c-high", type=float)
    r.add_argument("--height", type=int)
    r.add_argument("--q-start", type=int)
    r.add_argument("--base-qp", type=int)
    r.add_argument("--per-frame", action="store_true")
    r.add_argument("--qp-range", type=_int_list,
                   help="base QP search range MIN,MAX (default: the synth sweep range)")
    r.add_argument("--backend", choices=["oracle", "replay"], default="oracle")
    r.add_argument("--oracle", help="oracle parameter JSON (from synth)")
    r.add_argument("--log", help="encoder log for the replay backend")
    r.add_argument("--calibrate", action="store_true", help="fit c_low from --log")
    r.add_argument("--sequence-id")
    r.add_argument("--report", required=True)
    r.set_defaults(func=cmd_simulate_rc)

    d = sub.add_parser("demo", help="synthetic end-to-end run with summary tables")
    d.add_argument("--out", default="demo_out")
    d.add_argument("--sequences", type=int)
    d.add_argument("--frames", type=int)
    d.add_argument("--seed", type=int)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load_config(args.config) if args.config else cfgmod.RunConfig()
        if args.threads is not None:
            cfg.threads = args.threads
        return args.func(args, cfg)
    except FramebitsError as exc:
        print(f"framebits: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"framebits: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
