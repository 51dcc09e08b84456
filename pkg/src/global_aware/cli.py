"""Command-line entry point: ``global-aware <subcommand> ...``.

Exit codes: 0 on success, 1 on invalid input, 2 when a verification
property fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import SCORERS, GlobalAwareError, ScorerConfig
from .evaluation import (
    DEFAULT_BEAM_SIZES,
    DEFAULT_BETAS,
    DEFAULT_GAMMAS,
    G_MODES,
    EmptyHypothesis,
    length_stats,
    novel_word_pct,
    rouge_all,
    run_decode,
    run_degradation,
    run_sweep,
)
from .io import InvalidInput, read_instances, read_jsonl, write_instances, write_jsonl
from .model import (
    SyntheticSpec,
    load_model,
    make_synthetic,
    save_model,
    teacher_forced_global_attention,
)
from .predictor import init_for_dataset, load_params, save_params, train

EXIT_OK, EXIT_INVALID, EXIT_PROPERTY = 0, 1, 2


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_decode_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model JSON (table or synthetic spec)")
    p.add_argument("--data", required=True, help="instance JSONL")
    p.add_argument("--scorer", choices=SCORERS, default="global")
    p.add_argument("--beta", type=float, default=12.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--g-mode", choices=G_MODES, default="oracle")
    p.add_argument("--sigma", type=float, default=0.0, help="noise scale for --g-mode corrupted")
    p.add_argument("--block-length", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--a", type=float, default=1.0, help="length-normalization exponent")
    p.add_argument("--repetition-theta", type=float, default=None)
    p.add_argument("--min-length", type=int, default=0)
    p.add_argument("--coverage-threshold", choices=("one", "global"), default="one")
    p.add_argument("--step-penalty", choices=("li", "see"), default="li")
    p.add_argument("--predictor", default=None, help="predictor checkpoint for --g-mode predicted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="result JSONL (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="global-aware",
                                     description="Global-aware beam search toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_decode_args(sub.add_parser("decode", help="decode a dataset with beam search"))
    oracle = sub.add_parser("oracle", help="decode by exhaustive enumeration")
    _add_decode_args(oracle)
    oracle.add_argument("--l-max", type=int, required=True)

    tp = sub.add_parser("train-predictor", help="fit the global attention predictor")
    tp.add_argument("--data", required=True)
    tp.add_argument("--model", default=None,
                    help="model used to build teacher-forced targets when instances lack them")
    tp.add_argument("--lr", type=float, default=0.1)
    tp.add_argument("--epochs", type=int, default=300)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--context-window", type=int, default=0)
    tp.add_argument("--out", required=True)

    sub.add_parser("verify", help="run the built-in property checks")

    ev = sub.add_parser("eval", help="score hypotheses against references")
    ev.add_argument("--ref", required=True, help="instance JSONL with references")
    ev.add_argument("--hyp", required=True, help="result JSONL from decode")
    ev.add_argument("--eos", type=int, default=None,
                    help="end-of-sequence id to strip (defaults to the model's, if given)")
    ev.add_argument("--model", default=None)
    ev.add_argument("--out", default=None)

    sw = sub.add_parser("sweep", help="beta/gamma grid for the global scorer")
    _add_decode_args(sw)
    sw.add_argument("--betas", type=_floats, default=list(DEFAULT_BETAS))
    sw.add_argument("--gammas", type=_floats, default=list(DEFAULT_GAMMAS))

    dg = sub.add_parser("degradation", help="metrics as the beam grows")
    _add_decode_args(dg)
    dg.add_argument("--beam-sizes", type=_ints, default=list(DEFAULT_BEAM_SIZES))
    dg.add_argument("--l-max", type=int, default=None,
                    help="cap decodes and add an exhaustive-oracle row")

    md = sub.add_parser("make-data", help="write a synthetic model and instance file")
    md.add_argument("--seed", type=int, default=0)
    md.add_argument("--count", type=int, default=20)
    md.add_argument("--start", type=int, default=0, help="first instance index")
    md.add_argument("--vocab-size", type=int, default=SyntheticSpec.vocab_size)
    md.add_argument("--source-len", type=int, default=SyntheticSpec.source_len)
    md.add_argument("--with-g", action="store_true", help="store teacher-forced global attention")
    md.add_argument("--model-out", required=True)
    md.add_argument("--data-out", required=True)
    return parser


def _config(args) -> ScorerConfig:
    return ScorerConfig(
        scorer=args.scorer, beta=args.beta, gamma=args.gamma, a=args.a,
        beam_size=args.beam_size, repetition_theta=args.repetition_theta,
        block_length=args.block_length, max_steps=args.max_steps,
        min_length=args.min_length, seed=args.seed,
        coverage_threshold=args.coverage_threshold, step_penalty=args.step_penalty,
    )


def _predictor(args):
    if args.predictor is None:
        return None
    return load_params(args.predictor)


def _emit(rows, out) -> None:
    if out is None:
        for row in rows:
            print(json.dumps(row))
    else:
        write_jsonl(out, rows)


def _cmd_decode(args, l_max=None) -> int:
    model = load_model(args.model)
    instances = read_instances(args.data)
    records = run_decode(model, instances, _config(args), args.g_mode,
                         predictor=_predictor(args), sigma=args.sigma, l_max=l_max)
    _emit([r.to_result() for r in records], args.out)
    return EXIT_OK


def _cmd_train(args) -> int:
    instances = read_instances(args.data)
    model = load_model(args.model) if args.model else None
    dataset = []
    for inst in instances:
        g = inst.global_attention
        if g is None:
            if model is None or inst.reference is None:
                raise InvalidInput(f"instance {inst.id} has no global_attention; pass --model")
            g = teacher_forced_global_attention(model, inst.source, inst.reference)
        dataset.append((inst.source, g))
    params = init_for_dataset(dataset, learning_rate=args.lr, epochs=args.epochs,
                              seed=args.seed, context_window=args.context_window)
    params = train(params, dataset)
    save_params(params, args.out)
    hist = params.loss_history
    print(json.dumps({"initial_loss": hist[0], "final_loss": hist[-1],
                      "ratio": hist[-1] / hist[0] if hist[0] else 0.0}))
    return EXIT_OK


def _cmd_verify(_args) -> int:
    from .verify import run_all

    ok = True
    for name, passed, detail in run_all():
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return EXIT_OK if ok else EXIT_PROPERTY


def _cmd_eval(args) -> int:
    eos = args.eos
    if eos is None and args.model:
        eos = load_model(args.model).eos
    refs = {i.id: i for i in read_instances(args.ref)}
    rows = read_jsonl(args.hyp)
    per, lengths = [], []

    def strip(tokens):
        tokens = [int(t) for t in tokens]
        return tokens[:-1] if eos is not None and tokens and tokens[-1] == eos else tokens

    for row in rows:
        inst = refs.get(row.get("id"))
        if inst is None or inst.reference is None:
            raise InvalidInput(f"no reference for hypothesis id {row.get('id')!r}")
        hyp, ref = strip(row["hypothesis"]), strip(inst.reference)
        # a reference holding only end-of-sequence has nothing to overlap with
        scores = rouge_all(ref, hyp) if ref else None
        try:
            novel = novel_word_pct(inst.source.tokens, hyp)
        except EmptyHypothesis:
            novel = None
        per.append({"id": inst.id,
                    **{k: None if scores is None else scores[o].f1
                       for k, o in (("rouge1", 1), ("rouge2", 2), ("rougeL", "L"))},
                    "novel_pct": novel, "length": len(hyp)})
        if row.get("Z") is not None:
            lengths.append(row)

    def mean(key):
        vals = [p[key] for p in per if p[key] is not None]
        return sum(vals) / len(vals) if vals else None

    table = {"count": len(per), **{k: mean(k) for k in ("rouge1", "rouge2", "rougeL",
                                                         "novel_pct", "length")}}
    if lengths:
        table["mean_abs_length_dev"] = length_stats(lengths)[1]
    if args.out:
        write_jsonl(args.out, per)
    print(json.dumps(table))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    model = load_model(args.model)
    instances = read_instances(args.data)
    result = run_sweep(model, instances, args.betas, args.gammas, _config(args), args.g_mode,
                       predictor=_predictor(args))
    _emit(result.rows, args.out)
    return EXIT_OK


def _cmd_degradation(args) -> int:
    model = load_model(args.model)
    instances = read_instances(args.data)
    report = run_degradation(model, instances, args.beam_sizes, _config(args),
                             predictor=_predictor(args), oracle_l_max=args.l_max)
    _emit(report.rows, args.out)
    if args.l_max is not None and not report.oracle_dominates():
        print("oracle row does not dominate", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def _cmd_make_data(args) -> int:
    model = make_synthetic(SyntheticSpec(seed=args.seed, vocab_size=args.vocab_size,
                                         source_len=args.source_len))
    instances = [model.make_instance(i) for i in range(args.start, args.start + args.count)]
    if args.with_g:
        instances = [type(i)(i.id, i.source, i.reference,
                             teacher_forced_global_attention(model, i.source, i.reference))
                     for i in instances]
    Path(args.model_out).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.model_out)
    write_instances(args.data_out, instances)
    return EXIT_OK


_COMMANDS = {
    "decode": _cmd_decode,
    "oracle": lambda a: _cmd_decode(a, l_max=a.l_max),
    "train-predictor": _cmd_train,
    "verify": _cmd_verify,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "degradation": _cmd_degradation,
    "make-data": _cmd_make_data,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (GlobalAwareError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
