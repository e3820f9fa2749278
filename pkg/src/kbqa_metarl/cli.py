"""Command-line entry point: ``kbqa <command> [--config FILE] [--field VALUE ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .agent import Agent
from .config import add_config_arguments, config_from_args, config_to_text
from .data import read_dataset, write_dataset
from .evaluation import evaluate
from .experiment import annotate, dataset_for, load_annotations, new_agent, pools, save_annotations
from .interpreter import answer_to_json
from .retriever import Retriever
from .trainer import decode_answer, infer, meta_train, pg_train, pretrain_teacher_forcing


def _run_path(cfg, args, attr, default):
    value = getattr(args, attr, None)
    return Path(value) if value else Path(cfg.run_dir) / default


def cmd_gen(cfg, args):
    kb, train, valid, test = dataset_for(cfg)
    write_dataset(cfg.data_dir, kb, train, valid, test)
    (Path(cfg.data_dir) / "config.txt").write_text(config_to_text(cfg), encoding="utf-8")
    print(f"{len(kb.triples)} triples, {len(train)}/{len(valid)}/{len(test)} questions -> {cfg.data_dir}")


def cmd_annotate(cfg, args):
    kb, train, valid, test = read_dataset(cfg.data_dir)
    split = {"train": pools(train, cfg)[0], "valid": valid, "test": test}[args.split]
    found, missed = annotate(split, kb, cfg.training.bfs_max_len)
    out = _run_path(cfg, args, "out", "annotated.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_annotations(out, found)
    print(f"annotated {len(found)}/{len(split)} questions -> {out}")


def cmd_pretrain(cfg, args):
    kb, train, valid, test = read_dataset(cfg.data_dir)
    annotated = load_annotations(_run_path(cfg, args, "annotations", "annotated.jsonl"), train + valid + test, kb)
    history = []
    agent = pretrain_teacher_forcing(new_agent(train, valid, test, cfg), annotated, cfg.training, history)
    out = _run_path(cfg, args, "out", "pretrain.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    agent.save(out, {"stage": "pretrain"})
    if history:
        print(f"loss {history[0]:.4f} -> {history[-1]:.4f}")
    print(f"checkpoint -> {out}")


def cmd_pg(cfg, args):
    kb, train, _, _ = read_dataset(cfg.data_dir)
    agent = Agent.load(_run_path(cfg, args, "checkpoint", "pretrain.npz"))
    history = []
    agent = pg_train(agent, pools(train, cfg)[1], kb, cfg.training, history)
    out = _run_path(cfg, args, "out", "pg.npz")
    agent.save(out, {"stage": "pg"})
    print(f"mean sampled reward {sum(history) / max(len(history), 1):.4f}; checkpoint -> {out}")


def cmd_meta(cfg, args):
    kb, train, _, _ = read_dataset(cfg.data_dir)
    agent = Agent.load(_run_path(cfg, args, "checkpoint", "pg.npz"))
    run = Path(cfg.run_dir)
    run.mkdir(parents=True, exist_ok=True)
    log_path = _run_path(cfg, args, "log", "meta_log.jsonl")
    log_path.write_text("", encoding="utf-8")
    agent = meta_train(agent, pools(train, cfg)[2], train, kb, cfg.training, log_path=log_path, checkpoint_dir=run / "checkpoints")
    out = _run_path(cfg, args, "out", "meta.npz")
    agent.save(out, {"stage": "meta"})
    print(f"log -> {log_path}; checkpoint -> {out}")


def cmd_eval(cfg, args):
    kb, train, valid, test = read_dataset(cfg.data_dir)
    agent = Agent.load(_run_path(cfg, args, "checkpoint", "meta.npz" if args.adapted else "pg.npz"))
    split = {"valid": valid, "test": test}[args.split]
    report = evaluate(agent, split, train, kb, cfg.training, adapted=args.adapted)
    out = _run_path(cfg, args, "out", f"eval_{report.mode}_{args.split}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    print(report.summary())
    print(f"report -> {out}")


def cmd_infer(cfg, args):
    kb, train, valid, test = read_dataset(cfg.data_dir)
    agent = Agent.load(_run_path(cfg, args, "checkpoint", "meta.npz"))
    by_id = {s.id: s for s in train + valid + test}
    if args.id not in by_id:
        raise KeyError(f"no question with id {args.id!r}")
    q = by_id[args.id]
    if args.frozen:
        out = decode_answer(agent, agent.params, q, kb, cfg.training.max_decode_len)
    else:
        out = infer(agent, q, Retriever(train, agent.embedding(), cfg.training.threshold), kb, cfg.training)
    print("question:", q.text)
    if out.support.samples:
        print("support:", " ".join(s.id for s in out.support.samples))
    print("program:")
    print(out.program if out.program is not None else "<invalid>")
    print("answer:", answer_to_json(out.answer))


COMMANDS = {
    "gen": (cmd_gen, "generate the synthetic KB and question splits"),
    "annotate": (cmd_annotate, "BFS pseudo-gold programs for a split"),
    "pretrain": (cmd_pretrain, "teacher-forcing pretraining on annotations"),
    "pg": (cmd_pg, "policy-gradient fine-tuning"),
    "meta": (cmd_meta, "meta-training over retrieved pseudo tasks"),
    "eval": (cmd_eval, "macro/micro F1 of a checkpoint"),
    "infer": (cmd_infer, "answer one question and print its program"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbqa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        add_config_arguments(p)
        if name != "gen":
            p.add_argument("--out", dest="out", help="output path (default under run_dir)")
        if name in ("pg", "meta", "eval", "infer"):
            p.add_argument("--checkpoint", help="input checkpoint (default under run_dir)")
        if name == "annotate":
            p.add_argument("--split", choices=("train", "valid", "test"), default="train")
        if name == "pretrain":
            p.add_argument("--annotations", help="annotation file (default under run_dir)")
        if name == "meta":
            p.add_argument("--log", help="training log path (default run_dir/meta_log.jsonl)")
        if name == "eval":
            mode = p.add_mutually_exclusive_group()
            mode.add_argument("--frozen", dest="adapted", action="store_false", default=False)
            mode.add_argument("--adapted", dest="adapted", action="store_true")
            p.add_argument("--split", choices=("valid", "test"), default="test")
        if name == "infer":
            p.add_argument("--id", required=True, help="question id")
            p.add_argument("--frozen", action="store_true", help="skip adaptation")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        COMMANDS[args.command][0](cfg, args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
