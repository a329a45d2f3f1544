"""Command-line entry point: simulate, featurize, train, evaluate, sweep, stream.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from spkcount.config import ExperimentConfig
from spkcount.corpus import CorpusError, DatasetManifest, ManifestEntry, build_split, render_entry
from spkcount.dsp import (
    ArchiveError,
    AudioFormatError,
    InsufficientSamplesError,
    extract_lmfb,
    load_lmfb,
    read_wav,
    save_lmfb,
    samples_for_frames,
    write_wav,
)
from spkcount.evaluation import duration_sweep, evaluate_model, format_report, report_csv
from spkcount.nn import CheckpointError, NumericalError, SpeakerCounter, load_checkpoint, save_checkpoint, train
from spkcount.nn.train import write_history_csv
from spkcount.stream import iter_wav_chunks, open_input, stream_predict

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ERRORS = (CorpusError, AudioFormatError, ArchiveError, CheckpointError, InsufficientSamplesError,
               FileNotFoundError, IsADirectoryError, ValueError)

log = logging.getLogger("spkcount")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ----------------------------------------------------------------- helpers


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=args.out_dir)
    return cfg


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _keyed_path(text: str) -> tuple[int, str]:
    key, sep, path = text.partition("=")
    if not sep or not key.strip().isdigit():
        raise argparse.ArgumentTypeError(f"expected FRAMES=PATH, got {text!r}")
    return int(key), path


def _entry_audio(entry: ManifestEntry, base: Path, dsp):
    """Samples for an entry: its WAV when recorded in the manifest, else rendered from its mixing recipe."""
    if entry.audio:
        return read_wav(base / entry.audio).samples
    return render_entry(entry, dsp)[0].samples


def _manifest_features(manifest_path, cfg: ExperimentConfig, features_dir=None):
    """(features, labels) for a manifest, from LMFB archives when a directory is given."""
    path = Path(manifest_path)
    manifest = DatasetManifest.load(path)
    if len(manifest) == 0:
        raise CorpusError(f"{path}: manifest is empty")
    feats = []
    for e in manifest:
        if features_dir is not None:
            feats.append(load_lmfb(Path(features_dir) / f"{e.id}.lmfb"))
        else:
            feats.append(extract_lmfb(_entry_audio(e, path.parent, cfg.dsp), cfg.dsp))
    return np.stack(feats), manifest.labels


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    ds = cfg.dataset
    changes = {}
    if args.classes is not None:
        changes["classes"] = args.classes
    if args.per_class is not None:
        changes.update(train_per_class=args.per_class, cv_per_class=args.per_class, test_per_class=args.per_class)
    if args.frames is not None:
        changes["segment_frames"] = args.frames
    if args.source_dir is not None:
        changes["source_dir"] = args.source_dir
    ds = replace(ds, **changes)
    splits = args.splits

    print(f"{'split':<6} " + " ".join(f"class{c:>2}" for c in ds.classes))
    if args.dry_run:
        for split in splits:
            print(f"{split:<6} " + " ".join(f"{ds.per_class(split):>7}" for _ in ds.classes))
        return EXIT_OK

    out = Path(cfg.out_dir)
    (out / "manifests").mkdir(parents=True, exist_ok=True)
    for split in splits:
        manifest = build_split(ds, split, cfg.dsp)
        if args.write_audio:
            audio_dir = out / "audio" / split
            audio_dir.mkdir(parents=True, exist_ok=True)
            entries = []
            for e in manifest:
                write_wav(audio_dir / f"{e.id}.wav", render_entry(e, cfg.dsp)[0])
                entries.append(replace(e, audio=f"../audio/{split}/{e.id}.wav"))
            manifest = DatasetManifest(split, entries)
        path = out / "manifests" / f"{split}.jsonl"
        manifest.save(path)
        counts = manifest.counts
        print(f"{split:<6} " + " ".join(f"{counts[c]:>7}" for c in ds.classes))
        log.info("%s: %d entries, sha256 %s", path, len(manifest), manifest.checksum())
    return EXIT_OK


def cmd_featurize(args) -> int:
    cfg = _load_config(args)
    path = Path(args.manifest)
    manifest = DatasetManifest.load(path)
    out = Path(args.out) if args.out else Path(cfg.out_dir) / "features" / manifest.split
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for e in manifest:
        try:
            save_lmfb(out / f"{e.id}.lmfb", extract_lmfb(_entry_audio(e, path.parent, cfg.dsp), cfg.dsp))
        except (OSError, AudioFormatError, InsufficientSamplesError) as exc:
            failed += 1
            print(f"{e.id}: {exc}", file=sys.stderr)
    print(f"featurized {len(manifest) - failed}/{len(manifest)} entries into {out}")
    return EXIT_DATA if failed else EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    model_cfg = cfg.model if args.aggregation is None else replace(cfg.model, aggregation=args.aggregation)
    tcfg = cfg.train
    if args.epochs is not None:
        tcfg = replace(tcfg, max_epochs=args.epochs)
    if args.batch_size is not None:
        tcfg = replace(tcfg, batch_size=args.batch_size)
    if args.lr is not None:
        tcfg = replace(tcfg, lr=args.lr)

    x, y = _manifest_features(args.train_manifest, cfg, args.train_features)
    cv_x = cv_y = None
    if args.cv_manifest:
        cv_x, cv_y = _manifest_features(args.cv_manifest, cfg, args.cv_features)
    model = SpeakerCounter(model_cfg, seed=cfg.seed)
    result = train(model, x, y, cv_x, cv_y, tcfg)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / f"model-{model_cfg.aggregation}.ckpt"
    save_checkpoint(model, ckpt, result.scheduler, extra={"best_epoch": result.best_epoch,
                                                          "stop_reason": result.stop_reason})
    hist = ckpt.with_suffix(".history.csv")
    write_history_csv(hist, result.history)
    last = result.history[-1]
    print(f"{len(result.history)} epochs ({result.stop_reason}), best epoch {result.best_epoch}, "
          f"final train loss {last.train_loss:.4f} acc {last.train_acc:.4f}")
    print(f"checkpoint {ckpt}\nhistory {hist}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    x, y = _manifest_features(args.manifest, cfg, args.features)
    report, _ = evaluate_model(model, x, y, args.frames)
    print(format_report(report, title=f"{args.checkpoint} on {args.manifest}"), end="")
    if args.csv:
        Path(args.csv).write_text(report_csv(report))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    tests = dict(args.test)
    models = []
    for pairs in (args.a, args.b):
        pairs = dict(pairs)
        models.append({n: load_checkpoint(p) for n, p in pairs.items()})
    frames = sorted(tests)
    for m in models:
        missing = [n for n in frames if n not in m]
        if missing:
            raise ValueError(f"no checkpoint given for frame counts {missing}")
    sets = {n: _manifest_features(tests[n], cfg) for n in frames}
    table = duration_sweep(models[0], models[1], sets, frames, methods=(args.name_a, args.name_b))
    print(table.to_text(), end="")
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    return EXIT_OK


def cmd_stream(args) -> int:
    cfg = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    f = open_input(args.input)
    emitted = 0
    try:
        chunks = iter_wav_chunks(f, args.chunk_samples)
        for res in stream_predict(chunks, model, args.window_frames, args.hop_frames, cfg.dsp):
            print(res.to_line(), flush=True)
            emitted += 1
    finally:
        if f is not sys.stdin.buffer:
            f.close()
    if emitted == 0:
        need = samples_for_frames(args.window_frames, cfg.dsp)
        print(f"warning: input shorter than one {args.window_frames}-frame window ({need} samples); "
              "no predictions", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spkcount", description="Attention-guided speaker counting.")
    p.add_argument("--config", help="experiment INI file (defaults to the published recipe)")
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument("--out-dir", help="output directory (default from config: runs)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate balanced mixture manifests")
    s.add_argument("--classes", type=_int_list, help="comma-separated class ids (default 0,1,2,3)")
    s.add_argument("--per-class", type=int, help="segments per class in every split")
    s.add_argument("--frames", type=int, help="segment length in frames")
    s.add_argument("--source-dir", help="directory of 16 kHz mono WAV utterances (default: synthetic voices)")
    s.add_argument("--splits", type=lambda t: tuple(t.split(",")), default=("train", "cv", "test"))
    s.add_argument("--write-audio", action="store_true", help="also write one WAV per entry")
    s.add_argument("--dry-run", action="store_true", help="print planned counts without generating")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("featurize", help="write an LMFB archive per manifest entry")
    s.add_argument("manifest")
    s.add_argument("--out", help="archive directory (default OUT_DIR/features/SPLIT)")
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("train", help="train a model and write a checkpoint + history CSV")
    s.add_argument("train_manifest")
    s.add_argument("--cv-manifest")
    s.add_argument("--train-features", help="LMFB archive directory for the training manifest")
    s.add_argument("--cv-features", help="LMFB archive directory for the CV manifest")
    s.add_argument("--aggregation", choices=("attention", "avgpool"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--checkpoint", help="output path (default OUT_DIR/model-AGG.ckpt)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="metrics report for a checkpoint on a test manifest")
    s.add_argument("checkpoint")
    s.add_argument("manifest")
    s.add_argument("--features", help="LMFB archive directory for the manifest")
    s.add_argument("--frames", type=int, help="expected segment length")
    s.add_argument("--csv", help="also write per-class metrics CSV here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="weighted accuracy of two model sets per duration")
    s.add_argument("--test", type=_keyed_path, action="append", required=True, metavar="FRAMES=MANIFEST")
    s.add_argument("--a", type=_keyed_path, action="append", required=True, metavar="FRAMES=CKPT")
    s.add_argument("--b", type=_keyed_path, action="append", required=True, metavar="FRAMES=CKPT")
    s.add_argument("--name-a", default="attention")
    s.add_argument("--name-b", default="avgpool")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("stream", help="windowed predictions over a WAV file or stdin")
    s.add_argument("checkpoint")
    s.add_argument("input", nargs="?", default="-", help="WAV or raw s16le path, '-' for stdin")
    s.add_argument("--window-frames", type=int, default=20)
    s.add_argument("--hop-frames", type=int, help="window step (default: window length)")
    s.add_argument("--chunk-samples", type=int, default=1600)
    s.set_defaults(func=cmd_stream)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NumericalError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
