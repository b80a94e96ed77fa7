"""Command-line entry points.

    paratalk chat     interactive half-duplex REPL (one text query per line)
    paratalk eval     fc | rejection | qa | wer | emotion | winrate
    paratalk bench    latency
    paratalk frames   pack | unpack (framed binary token grids)
    paratalk serve    --listen host:port
    paratalk vocab    init

Exit status is 0 on success and 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import plotting
from .config import load_config
from .conversation import ConversationState, commit_response, serialize_prompt
from .decoder import DecodeSession, collect, decode_stream
from .errors import ConfigError, DataError, DomainError, ParseError, ShapeError
from .eval import metrics, records, tables
from .framing import DelayPattern, ParallelSequence, apply_delay, read_grid, remove_delay, write_grid
from .vocab import ByteTextCodec, VocabSpec, emotion_token

INPUT_ERRORS = (ConfigError, DataError, DomainError, ParseError, ShapeError, OSError, ValueError, KeyError)

log = logging.getLogger("paratalk")


def _outputs(report_path: Path, report: dict, table: str, plot, no_figure: bool) -> None:
    report_path.parent.mkdir(parents=True, exist_ok=True)
    records.write_report(report_path, report)
    report_path.with_suffix(".txt").write_text(table, encoding="utf-8")
    if not no_figure:
        plot(report, report_path.with_suffix(".png"))
    sys.stdout.write(table)


# ------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    kind = args.kind
    if kind == "fc":
        rep = metrics.fc_metrics(records.load_fc(args.input))
        table, plot = tables.fc_table(rep, args.label), plotting.plot_fc
    elif kind == "rejection":
        rep = metrics.rejection_metrics(records.load_rejection(args.input))
        table, plot = tables.rejection_table(rep, args.label), plotting.plot_rejection
    elif kind == "qa":
        items = records.load_qa(args.input)
        rep = {"presence_rate": metrics.presence_rate(items), "n": len(items),
               "hits": sum(metrics.presence_hit(i.answers, i.response) for i in items)}
        table, plot = tables.qa_table(rep, args.label), plotting.plot_qa
    elif kind == "wer":
        rep = metrics.corpus_error_rate(records.load_wer(args.input), unit=args.unit)
        table, plot = tables.wer_table(rep, args.label), plotting.plot_wer
    elif kind == "emotion":
        mapping = json.loads(args.mapping) if args.mapping else None
        rep = metrics.emotion_accuracy(records.load_emotion(args.input), mapping=mapping)
        table, plot = tables.emotion_table(rep, args.label), plotting.plot_emotion
    elif kind == "winrate":
        verdicts = records.load_verdicts(args.input)
        rep = {"win_rate": metrics.win_rate(verdicts, ties=args.ties), "n": len(verdicts),
               "counts": dict(Counter(v.winner for v in verdicts)), "ties": args.ties}
        table, plot = tables.winrate_table(rep, args.label), plotting.plot_winrate
    else:  # argparse restricts choices
        raise AssertionError(kind)
    rep = {"metric": kind, **rep}
    _outputs(Path(args.report), rep, table, plot, args.no_figure)
    return 0


# ------------------------------------------------------------------ bench


def cmd_bench(args) -> int:
    from .serve.latency import LoopbackScenario, SimulatedScenario, default_messages, measure_latency

    cfg = load_config(args.config)
    msgs = default_messages()
    if args.mode == "simulated":
        scenario = SimulatedScenario(cfg, msgs, prefill_s=args.prefill, step_s=args.step_cost,
                                     uplink_s=args.uplink, downlink_s=args.downlink)
    else:
        scenario = LoopbackScenario(cfg, msgs)
    rep = measure_latency(args.runs, scenario)
    d = rep.to_dict(with_stamps=True)
    d["mode"] = args.mode
    table = tables.latency_table(d, args.label)
    if args.report:
        _outputs(Path(args.report), d, table, plotting.plot_latency, args.no_figure)
    else:
        sys.stdout.write(table)
    return 0 if not rep.partial else 2


# ----------------------------------------------------------------- frames


def cmd_frames(args) -> int:
    if args.action == "pack":
        doc = json.loads(Path(args.input).read_text())
        rows = doc["frames"] if isinstance(doc, dict) else doc
        seq = ParallelSequence.from_array(rows) if rows else ParallelSequence()
        if args.delay:
            layers = len(rows[0]) if rows else 8
            pat = DelayPattern.parse(args.delay, layers)
            seq = apply_delay(seq, pat, args.pad_text, args.pad_audio)
        with open(args.output, "wb") as fp:
            write_grid(fp, seq.to_array(len(rows[0]) if rows else 0))
    else:
        with open(args.input, "rb") as fp:
            version, arr = read_grid(fp)
        if version != 1:
            raise ShapeError("file holds float features; only token grids unpack to JSON")
        seq = ParallelSequence.from_array(arr)
        if args.delay:
            seq = remove_delay(seq, DelayPattern.parse(args.delay, arr.shape[1]))
        out = json.dumps({"frames": [list(f.tokens()) for f in seq]}, separators=(",", ":")) + "\n"
        Path(args.output).write_text(out)
    return 0


# ------------------------------------------------------------------- chat


def cmd_chat(args) -> int:
    cfg = load_config(args.config).with_overrides(
        speaker=args.speaker,
        chunk_frames=args.chunk_frames,
        predictor=args.predictor,
    )
    emotion = None if args.emotion in (None, "auto") else args.emotion
    if emotion is not None:
        emotion_token(cfg.vocab, emotion)
    codec = ByteTextCodec(cfg.vocab)
    state = ConversationState(cfg.vocab, active_speaker=cfg.speaker)
    interactive = sys.stdin.isatty()
    predictor = cfg.make_predictor()
    while True:
        if interactive:
            sys.stdout.write("> ")
            sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:
            break
        line = line.strip()
        if not line:
            continue
        if line in ("/quit", "/exit"):
            break
        state.add_user_text(codec.encode(line))
        session = DecodeSession(predictor, cfg.vocab, cfg.pattern, chunk_frames=cfg.chunk_frames,
                                max_steps=cfg.max_steps)
        c = collect(decode_stream(session, serialize_prompt(state), emotion=emotion))
        lead = [emotion_token(cfg.vocab, c["emotion"])] if c["emotion"] else []
        commit_response(state, lead + c["text"])
        tag = f"[{c['emotion']}] " if c["emotion"] else ""
        sys.stdout.write(f"{tag}{codec.decode(c['text'])}\n")
        sys.stdout.write(f"  (audio: {c['chunks']} chunks, {len(c['audio'])} frames"
                         f"{', truncated' if c['done'].truncated else ''})\n")
        sys.stdout.flush()
    return 0


# ------------------------------------------------------------------ serve


def cmd_serve(args) -> int:
    from .serve.server import serve

    cfg = load_config(args.config).with_overrides(chunk_frames=args.chunk_frames, predictor=args.predictor)
    serve(args.listen, cfg)
    return 0


def cmd_vocab(args) -> int:
    VocabSpec.default(text_vocab_size=args.text_size, audio_vocab_size=args.audio_size).save(args.output)
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paratalk", description="Parallel speech-text dialogue runtime and metrics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="runtime config JSON (default: $LUCY_CONFIG)")

    c = sub.add_parser("chat", help="interactive half-duplex chat on stdin")
    common(c)
    c.add_argument("--speaker", choices=["male", "female"])
    c.add_argument("--emotion", help="emotion label to force, or 'auto'")
    c.add_argument("--chunk-frames", type=int)
    c.add_argument("--predictor", help="echo | script:<grid.bin> | module:factory")
    c.set_defaults(func=cmd_chat)

    e = sub.add_parser("eval", help="compute a metric report from a JSONL file")
    e.add_argument("kind", choices=["fc", "rejection", "qa", "wer", "emotion", "winrate"])
    e.add_argument("--input", required=True)
    e.add_argument("--report", required=True, help="JSON report path; .txt table and .png figure go alongside")
    e.add_argument("--label", default="model", help="row label in the table")
    e.add_argument("--unit", choices=["word", "char"], default="word", help="wer: word or character error rate")
    e.add_argument("--ties", choices=["half", "exclude"], default="half", help="winrate tie policy")
    e.add_argument("--mapping", help='emotion: JSON label mapping, default {"other": "sorry"}')
    e.add_argument("--no-figure", action="store_true")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="benchmarks")
    b.add_argument("what", choices=["latency"])
    common(b)
    b.add_argument("--runs", type=int, default=10)
    b.add_argument("--mode", choices=["simulated", "loopback"], default="simulated")
    b.add_argument("--step-cost", type=float, default=0.02, help="simulated seconds per decode step")
    b.add_argument("--prefill", type=float, default=0.1, help="simulated seconds of prompt processing")
    b.add_argument("--uplink", type=float, default=0.05)
    b.add_argument("--downlink", type=float, default=0.05)
    b.add_argument("--report")
    b.add_argument("--label", default="model")
    b.add_argument("--no-figure", action="store_true")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("frames", help="framed binary token grids")
    f.add_argument("action", choices=["pack", "unpack"])
    f.add_argument("--input", required=True)
    f.add_argument("--output", required=True)
    f.add_argument("--delay", help="apply (pack) or remove (unpack) a delay pattern")
    f.add_argument("--pad-text", type=int, default=0)
    f.add_argument("--pad-audio", type=int, default=63)
    f.set_defaults(func=cmd_frames)

    s = sub.add_parser("serve", help="run the streaming service")
    common(s)
    s.add_argument("--listen", default="127.0.0.1:8765")
    s.add_argument("--chunk-frames", type=int)
    s.add_argument("--predictor")
    s.set_defaults(func=cmd_serve)

    v = sub.add_parser("vocab", help="vocabulary files")
    v.add_argument("action", choices=["init"])
    v.add_argument("--output", required=True)
    v.add_argument("--text-size", type=int, default=320)
    v.add_argument("--audio-size", type=int, default=64)
    v.set_defaults(func=cmd_vocab)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        print(f"paratalk: error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
