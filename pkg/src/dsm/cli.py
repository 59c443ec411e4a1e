"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

import argparse
import os
import sys
import warnings
from collections import OrderedDict

from . import deterministic as det
from . import modelio
from . import speakerid as sid
from . import vocoder
from .audio import DataError, read_csv_rows, read_wav, write_csv, write_wav
from .config import ConfigError, RunConfig, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

MANIFEST_COLUMNS = ("speaker_id", "session_id", "wav_path", "split")
SPLITS = ("train", "test")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# manifests and configuration
# ---------------------------------------------------------------------------


def read_manifest(path, split=None):
    """Rows of a manifest CSV as dicts with ``wav_path`` made absolute.

    With ``split`` given, only rows of that split are kept, unless the
    manifest has none of them, in which case every row is used.
    """
    try:
        rows = read_csv_rows(path)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"manifest {path} is not UTF-8") from exc
    if not rows:
        raise DataError(f"manifest {path} has no entries")
    missing = [c for c in MANIFEST_COLUMNS if c not in rows[0]]
    if missing:
        raise DataError(f"manifest {path} lacks column(s): {', '.join(missing)}")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for i, row in enumerate(rows, 2):
        row = {k: (v or "").strip() for k, v in row.items() if k is not None}
        if not row["speaker_id"]:
            raise DataError(f"{path}:{i}: empty speaker_id")
        if row["split"] not in SPLITS:
            raise DataError(f"{path}:{i}: split must be train or test, got {row['split']!r}")
        wav = row["wav_path"]
        if not os.path.isabs(wav):
            wav = os.path.join(base, wav)
        if not os.path.isfile(wav):
            raise DataError(f"{path}:{i}: WAV file not found: {row['wav_path']}")
        row["wav_path"] = wav
        out.append(row)
    if split is not None:
        chosen = [r for r in out if r["split"] == split]
        out = chosen or out
    return out


def load_signals(rows):
    signals = [read_wav(r["wav_path"]) for r in rows]
    rates = {s.sample_rate for s in signals}
    if len(rates) > 1:
        raise DataError(f"manifest mixes sample rates: {sorted(rates)}")
    return signals


def by_speaker(rows):
    groups = OrderedDict()
    for r in rows:
        groups.setdefault(r["speaker_id"], []).append(r)
    return groups


def build_config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config, cfg)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
    return cfg.updated(f0_star=args.f0_star, fm=args.fm, f0_min=args.f0_min,
                       f0_max=args.f0_max, lp_order=args.lp_order,
                       noise_order=args.noise_order, k_det=args.k_det,
                       min_frames=args.min_frames, rng_seed=args.seed,
                       gci_polarity=args.gci_polarity)


def _echo(cfg, **extra):
    d = cfg.as_dict()
    d.update(extra)
    return d


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args, cfg):
    rows = read_manifest(args.manifest, "train")
    signals = load_signals(rows)
    cfg.check(signals[0].sample_rate)
    ids = [f"{r['speaker_id']}/{r['session_id']}" for r in rows]
    model, report = vocoder.train_model(signals, cfg, ids)
    modelio.save_model(args.out, model)
    echo = _echo(cfg)
    if args.report:
        items = [
            ("n_signals", report.n_signals), ("n_gcis", report.n_gcis),
            ("n_frames", report.n_frames), ("n_dropped_edges", report.n_dropped_edges),
            ("n_skipped_no_period", report.n_skipped_no_period), ("m", model.m),
            ("constraint_bound_hz", _fmt(report.constraint_bound)),
            ("constraint_ok", int(report.constraint_ok)),
            ("crd_1", _fmt(report.crd[0])),
            ("highband_fraction", _fmt(report.highband_fraction)),
            ("warning", " | ".join(report.warnings)),
        ]
        write_csv(args.report, ["key", "value"], items, echo)
    if args.crd:
        write_csv(args.crd, ["k", "crd"],
                  [(k + 1, _fmt(c)) for k, c in enumerate(report.crd)], echo)
    if args.frames_csv:
        frames = sid.corpus_frames(signals, cfg, ids)
        write_frames_csv(args.frames_csv, frames, echo)
    print(f"trained on {report.n_frames} frames from {report.n_signals} file(s); "
          f"CRD(1) = {report.crd[0]:.3f}; model written to {args.out}")
    return EXIT_OK


def write_frames_csv(path, frames, echo):
    n = frames.n_frames
    sources = frames.source_ids or [""] * n
    t0 = frames.t0 if frames.t0 is not None else [0] * n
    header = ["source", "t0"] + [f"x{i}" for i in range(frames.m)]
    rows = ([src, int(t)] + [_fmt(v) for v in f]
            for src, t, f in zip(sources, t0, frames.frames))
    write_csv(path, header, rows, echo)


def cmd_copysynth(args, cfg):
    signal = read_wav(args.input)
    model = None
    if args.model:
        model = modelio.load_model(args.model)
        if model.sample_rate != signal.sample_rate:
            raise DataError(f"model sample rate {model.sample_rate} Hz does not match "
                            f"input {signal.sample_rate} Hz")
        cfg = cfg.updated(f0_star=model.f0_star, fm=model.fm)
    if args.pitch_scale <= 0:
        raise UsageError("--pitch-scale must be positive")
    out, metrics = vocoder.copy_synthesis(signal, cfg, model, args.pitch_scale,
                                          args.deterministic_only)
    write_wav(args.output, out)
    rows = [(k, _fmt(v)) for k, v in metrics.items()]
    echo = _echo(cfg, pitch_scale=args.pitch_scale, deterministic_only=args.deterministic_only)
    if args.metrics:
        write_csv(args.metrics, ["metric", "value"], rows, echo)
    for k, v in rows:
        print(f"{k},{v}")
    return EXIT_OK


def signatures_for(rows, cfg):
    out = []
    for spk, group in by_speaker(rows).items():
        signals = load_signals(group)
        cfg.check(signals[0].sample_rate)
        out.append(sid.extract_signature(signals, cfg, spk))
    return out


def write_matrix_csv(path, d, echo):
    header = ["train\\test"] + list(d.test_labels)
    rows = ([lab] + [_fmt(v) for v in d.values[i]] for i, lab in enumerate(d.train_labels))
    write_csv(path, header, rows, echo)


def cmd_identify(args, cfg):
    train = signatures_for(read_manifest(args.train, "train"), cfg)
    test = signatures_for(read_manifest(args.test, "test"), cfg)
    channels = sid.CHANNELS if args.channel == "both" else (args.channel,)
    mats = {c: sid.distance_matrix(train, test, c) for c in channels}
    if args.channel == "both":
        final = sid.fuse(mats, args.fusion, args.alpha, args.beta)
        mats["fused"] = final
    else:
        final = mats[args.channel]
    echo = _echo(cfg, channel=args.channel, fusion=args.fusion, alpha=args.alpha,
                 beta=args.beta)
    results = {name: sid.identify(d) for name, d in mats.items()}
    os.makedirs(args.out_dir, exist_ok=True)
    for name, d in mats.items():
        write_matrix_csv(os.path.join(args.out_dir, f"matrix_{name}.csv"), d, echo)
    result = sid.identify(final)
    rank_rows = [(lab, result.labels[j], int(result.ranks[j]), int(result.labels[j] == lab))
                 for j, lab in enumerate(final.test_labels)]
    write_csv(os.path.join(args.out_dir, "ranks.csv"),
              ["speaker_id", "predicted", "rank", "correct"], rank_rows, echo)
    write_csv(os.path.join(args.out_dir, "accuracy.csv"), ["channel", "accuracy"],
              [(name, _fmt(r.accuracy)) for name, r in results.items()], echo)
    for name, r in results.items():
        print(f"accuracy[{name}] = {r.accuracy:.4f}")
    return EXIT_OK


def cmd_signature(args, cfg):
    rows = read_manifest(args.manifest, args.split)
    os.makedirs(args.out_dir, exist_ok=True)
    for sig in signatures_for(rows, cfg):
        path = os.path.join(args.out_dir, f"{_safe(sig.label)}.dsm")
        modelio.save_signature(path, sig)
        if args.json:
            modelio.export_json(path[:-4] + ".json", sig)
        print(f"{sig.label}: {sig.n_frames_used} frames -> {path}")
    return EXIT_OK


def _safe(label):
    keep = "".join(c if c.isalnum() or c in "-_." else "_" for c in label)
    return keep or "speaker"


def cmd_convergence(args, cfg):
    rows = read_manifest(args.manifest, args.split)
    groups = by_speaker(rows)
    spk = args.speaker or next(iter(groups))
    if spk not in groups:
        raise DataError(f"speaker {spk!r} not in manifest")
    signals = load_signals(groups[spk])
    frames = sid.corpus_frames(signals, cfg)
    if args.reference:
        reference = modelio.load_signature(args.reference, spk)
    else:
        reference = sid.signature_from_frames(frames, label=spk)
    sizes = [n for n in args.sizes if n <= frames.n_frames]
    skipped = [n for n in args.sizes if n > frames.n_frames]
    if skipped:
        print(f"warning: only {frames.n_frames} frames; skipping sizes {skipped}",
              file=sys.stderr)
    if not sizes:
        raise DataError(f"no requested size fits the {frames.n_frames} available frames")
    curve = sid.convergence_curve(frames, reference, sizes)
    write_csv(args.out, ["n_frames", "rtse_eigen", "rtse_envelope"],
              [(n, _fmt(a), _fmt(b)) for n, a, b in curve], _echo(cfg, speaker=spk))
    for n, a, b in curve:
        print(f"{n},{a:.6g},{b:.6g}")
    return EXIT_OK


def cmd_phoneclass(args, cfg):
    rows = read_manifest(args.manifest, args.split)
    column = args.class_column
    if column not in rows[0]:
        raise DataError(f"manifest lacks class column {column!r}")
    signals = load_signals(rows)
    cfg.check(signals[0].sample_rate)
    report = sid.phonetic_report(signals, [r[column] for r in rows], cfg)
    write_csv(args.out, ["class", "n_frames", "rtse_eigen", "rtse_envelope"],
              [(lab, n, _fmt(a), _fmt(b)) for lab, n, a, b in report], _echo(cfg))
    for lab, n, a, b in report:
        print(f"{lab},{n},{a:.6g},{b:.6g}")
    return EXIT_OK


def cmd_export(args, cfg):
    modelio.export_json(args.out, args.model)
    if args.envelope_csv or args.eigen_csv:
        sig = modelio.load_signature(args.model)
        if args.envelope_csv:
            if sig.energy_envelope is None:
                raise DataError(f"{args.model} holds no energy envelope")
            write_csv(args.envelope_csv, ["n", "envelope"],
                      [(i, _fmt(v)) for i, v in enumerate(sig.energy_envelope)], _echo(cfg))
        if args.eigen_csv:
            write_csv(args.eigen_csv, ["n", "eigenresidual"],
                      [(i, _fmt(v)) for i, v in enumerate(sig.eigenresidual)], _echo(cfg))
    return EXIT_OK


def cmd_crd(args, cfg):
    model = modelio.load_model(args.model)
    curve = det.crd_curve(model.basis)
    write_csv(args.out, ["k", "crd"], [(k + 1, _fmt(c)) for k, c in enumerate(curve)],
              _echo(cfg))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _sizes(text):
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}")
    if not out or min(out) < 2:
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--config", help="key=value configuration file")
    g.add_argument("--seed", type=_u64)
    g.add_argument("--f0-star", type=float)
    g.add_argument("--fm", type=float)
    g.add_argument("--f0-min", type=float)
    g.add_argument("--f0-max", type=float)
    g.add_argument("--lp-order", type=int)
    g.add_argument("--noise-order", type=int)
    g.add_argument("--k-det", type=int)
    g.add_argument("--min-frames", type=int)
    g.add_argument("--gci-polarity", choices=("negative", "positive", "auto"))

    p = _Parser(prog="dsm", description="Deterministic plus stochastic residual model tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train", parents=[common], help="train a speaker model")
    s.add_argument("manifest")
    s.add_argument("-o", "--out", required=True, help="model file to write")
    s.add_argument("--report", help="training report CSV")
    s.add_argument("--crd", help="CRD curve CSV")
    s.add_argument("--frames-csv", help="dump normalized residual frames")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("copysynth", parents=[common], help="analyze and resynthesize a WAV")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--model", help="trained model (default: train on the input itself)")
    s.add_argument("--pitch-scale", type=float, default=1.0)
    s.add_argument("--deterministic-only", action="store_true")
    s.add_argument("--metrics", help="metrics CSV")
    s.set_defaults(func=cmd_copysynth)

    s = sub.add_parser("identify", parents=[common], help="speaker identification run")
    s.add_argument("train")
    s.add_argument("test")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--channel", choices=("eigen", "envelope", "both"), default="both")
    s.add_argument("--fusion", choices=("mul", "add"), default="mul")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--beta", type=float, default=0.5)
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("signature", parents=[common], help="extract per-speaker signatures")
    s.add_argument("manifest")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--split", choices=SPLITS)
    s.add_argument("--json", action="store_true", help="also write a JSON dump")
    s.set_defaults(func=cmd_signature)

    s = sub.add_parser("convergence", parents=[common], help="signature error vs frame count")
    s.add_argument("manifest")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--speaker")
    s.add_argument("--split", choices=SPLITS)
    s.add_argument("--sizes", type=_sizes, default=[50, 200, 1000, 5000])
    s.add_argument("--reference", help="reference signature file (default: all frames)")
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("phoneclass", parents=[common], help="per-class vs pooled signatures")
    s.add_argument("manifest")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--split", choices=SPLITS)
    s.add_argument("--class-column", default="phone_class")
    s.set_defaults(func=cmd_phoneclass)

    s = sub.add_parser("export", parents=[common], help="JSON dump of a model or signature")
    s.add_argument("model")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--envelope-csv")
    s.add_argument("--eigen-csv")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("crd", parents=[common], help="CRD curve of a model as CSV")
    s.add_argument("model")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_crd)
    return p


def _check_weights(args):
    for name in ("alpha", "beta"):
        v = getattr(args, name, None)
        if v is not None and not 0.0 <= v <= 1.0:
            raise UsageError(f"--{name} must lie in [0, 1], got {v}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            _check_weights(args)
            cfg = build_config(args)
            code = args.func(args, cfg)
        except (UsageError, ConfigError) as exc:
            print(f"dsm: error: {exc}", file=sys.stderr)
            code = EXIT_USAGE
        except DataError as exc:
            print(f"dsm: data error: {exc}", file=sys.stderr)
            code = EXIT_DATA
        except OSError as exc:
            print(f"dsm: data error: {exc}", file=sys.stderr)
            code = EXIT_DATA
    for w in caught:
        print(f"dsm: warning: {w.message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
