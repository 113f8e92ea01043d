"""``graphcoref`` command line: gen, train, predict, score, convert.

Every command resolves its settings from defaults, then an optional JSON
``--config`` file, then explicit flags, and writes the result to
``run_config.json`` next to its outputs.  Exit codes: 0 success, 1 usage
error, 2 data error, 3 numerical failure.

Config keys (all optional)::

    seed, strategy, window, iters, tau, max_span_len, recall_margin,
    steps, detector_steps, lr, optimizer, teacher_forcing, clip_norm, mention_weight,
    layers, heads, d_model, d_ff, max_positions, relation_sharing,
    upper_codes, pair_scorer, checkpoint_every, subword_width, jobs,
    synthetic (mapping of SyntheticConfig fields)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (ConllParseError, Document, SyntheticConfig, TokenSplitMap, chunk_splitter,
                     gen_synthetic, parse_conll, read_jsonl, remap_spans, write_conll, write_jsonl)
from .encoder import EncoderConfig, EncoderParams, Vocab, init_params, load_checkpoint, save_checkpoint
from .graph import CorefGraph, clusters_to_output, decode_clusters, output_to_input
from .longdoc import (decode_windows, detector_states, reduced_sample, refine_reduced, segment_documents,
                      truncate)
from .metrics import format_table, paired_bootstrap, score_corpus
from .refine import RefinementConfig, TrainingDiverged, TrainOptions, mentions_from_probs, refine, train

log = logging.getLogger("graphcoref")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
STRATEGIES = ("truncated", "overlap", "reduced")

DEFAULTS = {
    "seed": 0,
    "strategy": "overlap",
    "window": 512,
    "iters": 4,
    "tau": 0.5,
    "max_span_len": 10,
    "recall_margin": 0.15,
    "steps": 1000,
    "detector_steps": None,
    "lr": 2e-3,
    "optimizer": "adam",
    "teacher_forcing": 0.5,
    "clip_norm": None,
    "mention_weight": 1.0,
    "layers": 2,
    "heads": 4,
    "d_model": 32,
    "d_ff": 64,
    "max_positions": 512,
    "relation_sharing": "layer",
    "upper_codes": "mirror",
    "pair_scorer": "biaffine",
    "checkpoint_every": 0,
    "subword_width": 0,
    "jobs": 1,
    "synthetic": {},
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# config and IO helpers


def resolve_config(args: argparse.Namespace, keys: Sequence[str]) -> dict:
    cfg = {k: DEFAULTS[k] for k in keys}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k in keys})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if "strategy" in cfg and cfg["strategy"] is not None and cfg["strategy"] not in STRATEGIES:
        raise UsageError(f"unknown strategy {cfg['strategy']!r}")
    if "window" in cfg and (cfg["window"] < 2 or cfg["window"] % 2):
        raise UsageError("--window must be even and >= 2")
    return cfg


def write_run_config(directory: Path, command: str, cfg: dict, paths: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    record = {"command": command, **{k: str(v) for k, v in paths.items()}, **cfg}
    (directory / "run_config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _fmt(path: Path, fmt: str | None = None) -> str:
    if fmt:
        return fmt
    name = path.name
    if name.endswith(".graph.jsonl"):
        return "graph"
    if name.endswith(".jsonl"):
        return "jsonl"
    return "conll"


def read_docs(path: str | Path, fmt: str | None = None) -> list[Document]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    kind = _fmt(path, fmt)
    try:
        if kind == "graph":
            return read_graphs(text)
        if kind == "jsonl":
            return read_jsonl(text)
        return parse_conll(text)
    except (ConllParseError, ValueError, KeyError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: {e}") from e


def write_docs(path: str | Path, docs: Sequence[Document], fmt: str | None = None, kind: str = "output") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f = _fmt(path, fmt)
    if f == "graph":
        text = write_graphs(docs, kind)
    elif f == "jsonl":
        text = write_jsonl(docs)
    else:
        text = write_conll(docs)
    path.write_text(text)


def write_graphs(docs: Sequence[Document], kind: str = "output") -> str:
    lines = []
    for d in docs:
        g = clusters_to_output(d)
        if kind == "input":
            g = output_to_input(g)
        lines.append(json.dumps({"doc_id": d.doc_id, "tokens": list(d.tokens), "kind": kind,
                                 "sentence_bounds": list(d.sentence_bounds), "matrix": g.to_text()}))
    return "".join(line + "\n" for line in lines)


def read_graphs(text: str) -> list[Document]:
    docs = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        g = CorefGraph.from_text(obj["matrix"], obj.get("kind", "output"))
        if g.kind != "output":
            raise ValueError("only output-kind graph dumps can be decoded to clusters")
        if g.n != len(obj["tokens"]):
            raise ValueError(f"{obj['doc_id']}: matrix size {g.n} != {len(obj['tokens'])} tokens")
        docs.append(Document(obj["doc_id"], tuple(obj["tokens"]), tuple(obj.get("sentence_bounds", (0,))),
                             decode_clusters(g)))
    return docs


def _encoder_config(cfg: dict, vocab: Vocab) -> EncoderConfig:
    return EncoderConfig(layers=cfg["layers"], heads=cfg["heads"], d_model=cfg["d_model"], d_ff=cfg["d_ff"],
                         vocab=len(vocab), max_positions=cfg["max_positions"],
                         relation_sharing=cfg["relation_sharing"], upper_codes=cfg["upper_codes"],
                         pair_scorer=cfg["pair_scorer"], init_seed=cfg["seed"])


def _refinement_config(cfg: dict) -> RefinementConfig:
    return RefinementConfig(t_max=cfg["iters"], tau=cfg["tau"], max_span_len=cfg["max_span_len"])


def _subword(docs: list[Document], width: int) -> tuple[list[Document], list[TokenSplitMap | None]]:
    if not width:
        return docs, [None] * len(docs)
    split = chunk_splitter(width)
    out = [remap_spans(d, split) for d in docs]
    return [d for d, _ in out], [m for _, m in out]


# --------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    cfg = resolve_config(args, ["seed", "synthetic"])
    syn = dict(cfg["synthetic"])
    if args.n_docs is not None:
        syn["n_docs"] = args.n_docs
    try:
        scfg = SyntheticConfig.from_dict(syn)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad synthetic config: {e}") from e
    cfg["synthetic"] = asdict(scfg)
    try:
        docs = gen_synthetic(scfg, cfg["seed"])
    except ValueError as e:
        raise DataError(str(e)) from e
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "corpus.jsonl").write_text(write_jsonl(docs))
    (out / "corpus.conll").write_text(write_conll(docs))
    write_run_config(out, "gen", cfg, {"out": out})
    print(f"wrote {len(docs)} documents to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# train

TRAIN_KEYS = ["seed", "strategy", "window", "iters", "tau", "max_span_len", "recall_margin", "steps",
              "detector_steps", "lr", "optimizer", "teacher_forcing", "clip_norm", "mention_weight", "layers", "heads",
              "d_model", "d_ff", "max_positions", "relation_sharing", "upper_codes", "pair_scorer",
              "checkpoint_every", "subword_width"]


def _train_options(cfg: dict, steps: int) -> TrainOptions:
    return TrainOptions(steps=steps, lr=cfg["lr"], seed=cfg["seed"], optimizer=cfg["optimizer"],
                        teacher_forcing=cfg["teacher_forcing"], clip_norm=cfg["clip_norm"],
                        mention_weight=cfg["mention_weight"])


def _trim_log(path: Path, stage: str, start: int) -> None:
    if not path.exists():
        return
    kept = []
    for line in path.read_text().splitlines():
        rec = json.loads(line)
        if rec.get("stage") == stage and rec["step"] >= start:
            continue
        kept.append(line)
    path.write_text("".join(line + "\n" for line in kept))


def _run_stage(stage: str, samples, params: EncoderParams, rcfg: RefinementConfig, opts: TrainOptions,
               mode: str, out: Path, cfg: dict, resume: bool) -> EncoderParams:
    path = out / f"{stage}.npz"
    log_path = out / "train_log.jsonl"
    optimizer = opts.make_optimizer()
    start = 0
    if resume and path.exists():
        params, extra, aux = load_checkpoint(path)
        optimizer.load_state_arrays(aux)
        start = int(extra["step"])
    _trim_log(log_path, stage, start)
    meta = {"stage": stage, "strategy": cfg["strategy"], "window": cfg["window"]}

    def checkpoint(step, p, o):
        save_checkpoint(path, p, {**meta, "step": step}, o.state_arrays())

    def periodic(step, p, o):
        every = cfg["checkpoint_every"]
        if every and step % every == 0:
            checkpoint(step, p, o)

    remaining = opts.steps - start
    with open(log_path, "a") as fh:
        def on_iteration(rec):
            fh.write(json.dumps({"stage": stage, **rec}) + "\n")
        if remaining > 0:
            train(samples, params, rcfg, replace(opts, steps=remaining), mode=mode, start_step=start,
                  optimizer=optimizer, on_iteration=on_iteration, on_step=periodic)
    checkpoint(max(opts.steps, start), params, optimizer)
    log.info("stage %s: %d steps", stage, max(opts.steps, start))
    return params


def cmd_train(args) -> int:
    cfg = resolve_config(args, TRAIN_KEYS)
    if cfg["window"] > cfg["max_positions"]:
        raise UsageError("--window exceeds max_positions")
    if cfg["strategy"] == "reduced" and cfg["iters"] < 2:
        raise UsageError("the reduced strategy needs --iters >= 2")
    docs = read_docs(args.train)
    if not docs:
        raise DataError("empty training corpus")
    docs, _ = _subword(docs, cfg["subword_width"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_run_config(out, "train", cfg, {"train": args.train, "out": out})
    vocab = Vocab.from_documents(docs)
    ecfg = _encoder_config(cfg, vocab)
    rcfg = _refinement_config(cfg)
    K = cfg["window"]
    resume = bool(args.resume)
    if not resume:
        (out / "train_log.jsonl").write_text("")
    if cfg["strategy"] == "reduced":
        det_steps = cfg["detector_steps"] if cfg["detector_steps"] is not None else cfg["steps"]
        segments = [s for d in docs for s in segment_documents(d, K)]
        detector = init_params(ecfg, vocab, cfg["seed"])
        detector = _run_stage("detector", segments, detector, rcfg, _train_options(cfg, det_steps),
                              "mention", out, cfg, resume)
        coref = init_params(ecfg, vocab, cfg["seed"] + 1)
        samples = []
        for d in docs:
            hidden, probs = detector_states(d, detector, K)
            cands = mentions_from_probs(probs, rcfg.tau - cfg["recall_margin"], rcfg.max_span_len,
                                        heads=False)
            samples.append(reduced_sample(d, cands, hidden, coref, probs))
        _run_stage("coref", samples, coref, rcfg, _train_options(cfg, cfg["steps"]), "coref", out, cfg, resume)
    else:
        diags: list[str] = []
        if cfg["strategy"] == "truncated":
            samples = [truncate(d, K, diags) for d in docs]
        else:
            samples = [s for d in docs for s in segment_documents(d, K, diags)]
        if diags:
            log.warning("%d gold spans dropped by the %s strategy", len(diags), cfg["strategy"])
        model = init_params(ecfg, vocab, cfg["seed"])
        _run_stage("model", samples, model, rcfg, _train_options(cfg, cfg["steps"]), "joint", out, cfg, resume)
    print(f"checkpoints written to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# predict

_WORKER: dict = {}


def _load_models(model_dir: Path) -> dict:
    models = {}
    for stage in ("model", "detector", "coref"):
        p = model_dir / f"{stage}.npz"
        if p.exists():
            try:
                models[stage], _, _ = load_checkpoint(p)
            except (ValueError, KeyError, OSError) as e:
                raise DataError(f"cannot load {p}: {e}") from e
    if not models:
        raise DataError(f"no checkpoint in {model_dir}")
    return models


def _predict_one(doc: Document, models: dict, cfg: dict) -> tuple[Document, int]:
    """Predicted clusters for one (sub-tokenised) document and the number of dropped gold spans."""
    rcfg = _refinement_config(cfg)
    K = cfg["window"]
    strategy = cfg["strategy"]
    dropped = 0
    if strategy == "reduced" or (strategy is None and "model" not in models):
        if "detector" not in models:
            raise UsageError("reduced prediction needs detector and coref checkpoints")
        if strategy is None and len(doc) > K:
            raise DataError(f"{doc.doc_id}: {len(doc)} tokens exceed the window of {K}; pick a --strategy")
        g = refine_reduced(doc, models["detector"], models["coref"], rcfg, K, cfg["recall_margin"])
    else:
        if "model" not in models:
            raise UsageError(f"strategy {strategy} needs a joint model checkpoint")
        params = models["model"]
        if strategy == "truncated":
            diags: list[str] = []
            short = truncate(doc, K, diags)
            dropped = len(diags)
            g = CorefGraph(np.zeros((len(doc), len(doc)), dtype=np.int8), "output")
            sub = refine(short, params, rcfg).final.cells
            cells = g.cells.copy()
            cells[: len(short), : len(short)] = sub
            g = CorefGraph(cells, "output")
        elif strategy == "overlap":
            g = decode_windows(doc, params, rcfg, K)
        else:
            if len(doc) > min(K, params.config.max_positions):
                raise DataError(f"{doc.doc_id}: {len(doc)} tokens exceed the window of {K}; pick a --strategy")
            g = refine(doc, params, rcfg).final
    return doc.with_gold(decode_clusters(g)), dropped


def _worker_init(model_dir: str, cfg: dict):
    _WORKER["models"] = _load_models(Path(model_dir))
    _WORKER["cfg"] = cfg


def _worker_predict(doc: Document):
    return _predict_one(doc, _WORKER["models"], _WORKER["cfg"])


def cmd_predict(args) -> int:
    model_dir = Path(args.model)
    try:
        trained = json.loads((model_dir / "run_config.json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read {model_dir / 'run_config.json'}: {e}") from e
    keys = ["strategy", "window", "iters", "tau", "max_span_len", "recall_margin", "subword_width", "jobs"]
    cfg = {k: trained.get(k, DEFAULTS[k]) for k in keys}
    # no --strategy means one pass over the whole document
    cfg["strategy"] = None
    cfg["jobs"] = DEFAULTS["jobs"]
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["strategy"] is not None and cfg["strategy"] not in STRATEGIES:
        raise UsageError(f"unknown strategy {cfg['strategy']!r}")
    if cfg["window"] < 2 or cfg["window"] % 2:
        raise UsageError("--window must be even and >= 2")
    docs = read_docs(args.input)
    models = _load_models(model_dir)
    sub_docs, maps = _subword(docs, cfg["subword_width"])
    if cfg["jobs"] > 1 and len(sub_docs) > 1:
        with ProcessPoolExecutor(cfg["jobs"], initializer=_worker_init, initargs=(str(model_dir), cfg)) as ex:
            results = list(ex.map(_worker_predict, sub_docs))
    else:
        results = [_predict_one(d, models, cfg) for d in sub_docs]
    out_docs = []
    dropped = 0
    crossing = 0
    for doc, m, (pred, n_drop) in zip(docs, maps, results):
        clusters = pred.gold if m is None else m.clusters_to_words(pred.gold)
        clusters, lost = clusters.without_crossing()
        crossing += len(lost)
        out_docs.append(doc.with_gold(clusters))
        dropped += n_drop
    if crossing:
        print(f"warning: {crossing} predicted spans crossing a span of their own cluster were dropped",
              file=sys.stderr)
    if cfg["strategy"] == "truncated":
        over = sum(len(d) > cfg["window"] for d in sub_docs)
        print(f"warning: truncated {over} documents; {dropped} gold spans beyond the window dropped",
              file=sys.stderr)
    out = Path(args.out)
    write_docs(out, out_docs)
    write_run_config(out.parent, "predict", cfg, {"model": model_dir, "input": args.input, "out": out})
    print(f"wrote predictions for {len(out_docs)} documents to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# score


def _align(key: list[Document], resp: list[Document], name: str) -> list:
    by_id = {d.doc_id: d for d in resp}
    missing = [d.doc_id for d in key if d.doc_id not in by_id]
    if missing or len(by_id) != len(key):
        raise DataError(f"{name} does not cover the key documents (missing: {missing[:5]})")
    out = []
    for d in key:
        r = by_id[d.doc_id]
        if r.tokens != d.tokens:
            raise DataError(f"{name}: tokens of {d.doc_id} differ from the key")
        out.append(r.gold)
    return out


def cmd_score(args) -> int:
    cfg = resolve_config(args, ["seed"])
    cfg["bootstrap"] = args.bootstrap or 0
    if args.bootstrap and not args.compare:
        raise UsageError("--bootstrap needs --compare")
    if args.bootstrap is not None and args.bootstrap < 100:
        raise UsageError("--bootstrap needs at least 100 resamples")
    key = read_docs(args.key)
    keys = [d.gold for d in key]
    resp = _align(key, read_docs(args.response), "response")
    report = score_corpus(keys, resp)
    rows = {Path(args.response).name: report}
    result = {"response": report.to_dict()}
    if args.compare:
        other = _align(key, read_docs(args.compare), "compare")
        rep_b = score_corpus(keys, other)
        rows[Path(args.compare).name] = rep_b
        result["compare"] = rep_b.to_dict()
        if args.bootstrap:
            try:
                p = paired_bootstrap(keys, resp, other, args.bootstrap, cfg["seed"])
            except ValueError as e:
                raise DataError(str(e)) from e
            report.p_values = p
            result["p_values"] = p
    print(format_table(rows))
    if "p_values" in result:
        print("p-values (response not better than compare): "
              + ", ".join(f"{k}={v:.4f}" for k, v in result["p_values"].items()))
    if args.json:
        path = Path(args.json)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(result, indent=2) + "\n")
        write_run_config(path.parent, "score", cfg,
                         {"key": args.key, "response": args.response, "compare": args.compare or ""})
    return EXIT_OK


# --------------------------------------------------------------------------
# convert


def cmd_convert(args) -> int:
    docs = read_docs(args.input, args.src)
    write_docs(args.output, docs, args.dst, args.kind)
    write_run_config(Path(args.output).parent, "convert", {"src": _fmt(Path(args.input), args.src),
                                                           "dst": _fmt(Path(args.output), args.dst),
                                                           "kind": args.kind},
                     {"input": args.input, "output": args.output})
    print(f"converted {len(docs)} documents")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _model_flags(p: argparse.ArgumentParser, train_flags: bool):
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--window", type=int, help="segment length K")
    p.add_argument("--iters", type=int, help="maximum refinement iterations")
    p.add_argument("--tau", type=float, help="mention threshold")
    p.add_argument("--max-span-len", dest="max_span_len", type=int)
    p.add_argument("--recall-margin", dest="recall_margin", type=float)
    if train_flags:
        p.add_argument("--steps", type=int)
        p.add_argument("--detector-steps", dest="detector_steps", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--optimizer", choices=("adam", "momentum"))
        p.add_argument("--teacher-forcing", dest="teacher_forcing", type=float)
        p.add_argument("--clip-norm", dest="clip_norm", type=float)
        p.add_argument("--mention-weight", dest="mention_weight", type=float,
                       help="scale of the mention loss against the coreference loss")
        p.add_argument("--layers", type=int)
        p.add_argument("--heads", type=int)
        p.add_argument("--d-model", dest="d_model", type=int)
        p.add_argument("--d-ff", dest="d_ff", type=int)
        p.add_argument("--max-positions", dest="max_positions", type=int)
        p.add_argument("--relation-sharing", dest="relation_sharing", choices=("layer", "global"))
        p.add_argument("--upper-codes", dest="upper_codes", choices=("mirror", "zero"))
        p.add_argument("--pair-scorer", dest="pair_scorer", choices=("biaffine", "linear"))
        p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--subword-width", dest="subword_width", type=int,
                   help="split words into chunks of this many characters (0: off)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphcoref", description="Graph-refinement coreference resolution.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("out", help="output directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-docs", dest="n_docs", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("train", help="training corpus (.jsonl or CoNLL)")
    p.add_argument("out", help="output directory for checkpoints and logs")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true", help="continue from checkpoints in the output directory")
    _model_flags(p, True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict clusters, written as CoNLL")
    p.add_argument("model", help="directory written by train")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--jobs", type=int)
    _model_flags(p, False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="score a response against a key")
    p.add_argument("key")
    p.add_argument("response")
    p.add_argument("--compare", help="second response for paired bootstrap")
    p.add_argument("--bootstrap", type=int, help="number of bootstrap resamples")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--json", help="write the report as JSON here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("convert", help="convert between CoNLL, JSON lines and graph dumps")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--from", dest="src", choices=("conll", "jsonl", "graph"))
    p.add_argument("--to", dest="dst", choices=("conll", "jsonl", "graph"))
    p.add_argument("--kind", choices=("input", "output"), default="output", help="graph encoding to dump")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConllParseError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
