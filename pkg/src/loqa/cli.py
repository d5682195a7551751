"""Command line interface.

Subcommands cover the whole artifact lifecycle: validate CSV sensor logs,
pretrain encoders, fit the pair scorer, build the embedding store, then
query, chat, evaluate, or serve over HTTP. Exit codes: 0 success, 1 usage
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from .errors import LoqaError
from .schema import ModalitySchema

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting itself."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_schema_spec(spec: str) -> ModalitySchema:
    """'accel:3,audio:2' -> ModalitySchema."""
    names, dims = [], []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise argparse.ArgumentTypeError(
                f"modality {part!r} must look like name:dim")
        name, _, dim = part.partition(":")
        try:
            d = int(dim)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad dimension {dim!r}") from None
        names.append(name.strip())
        dims.append(d)
    if not names:
        raise argparse.ArgumentTypeError("schema spec is empty")
    try:
        return ModalitySchema(names=tuple(names), dims=tuple(dims))
    except (LoqaError, ValueError) as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _load_timeline(path: str, schema: ModalitySchema, impute: bool = True):
    from .ingest import impute_missing, parse_csv

    with open(path, encoding="utf-8") as f:
        timeline = parse_csv(f, schema=schema)
    return impute_missing(timeline) if impute else timeline


def _build_pipeline(args, gateway=None):
    from .encoders import load_parameters
    from .pipeline import Pipeline
    from .similarity import load_similarity
    from .store import label_embedding_matrix, load_store

    params = load_parameters(args.params)
    store = load_store(args.store)
    similarity = load_similarity(args.similarity)
    return Pipeline(
        store=store, similarity=similarity,
        label_vectors=label_embedding_matrix(params, params.vocab),
        vocab=params.vocab, gateway=gateway,
        decompose_mode=getattr(args, "decompose_mode", "rules"),
        answer_mode=getattr(args, "answer_mode", "template"),
        h=getattr(args, "threshold", 0.5),
        gap_minutes=getattr(args, "gap_minutes", 5),
        top_k=getattr(args, "top_k", 3)), params


def _add_artifact_args(p: argparse.ArgumentParser):
    p.add_argument("--params", required=True, help="encoder parameters file")
    p.add_argument("--store", required=True, help="embedding store file")
    p.add_argument("--similarity", required=True, help="similarity model file")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="match threshold h in (0,1)")
    p.add_argument("--top-k", type=int, default=3, dest="top_k")
    p.add_argument("--gap-minutes", type=int, default=5, dest="gap_minutes")
    p.add_argument("--decompose-mode", choices=("rules", "llm"), default="rules")
    p.add_argument("--answer-mode", choices=("template", "llm"), default="template")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loqa",
                     description="Sensor-log question answering toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", help="validate (and clean) a sensor CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True, type=parse_schema_spec,
                   help="modalities, e.g. accel:3,audio:2")
    p.add_argument("--output", help="write the imputed CSV here")

    p = sub.add_parser("pretrain", help="train the window/label encoders")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True, type=parse_schema_spec)
    p.add_argument("--output", required=True, help="parameters file to write")
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--feature-mode", choices=("raw_window", "statistical"),
                   default="raw_window")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--denominator", choices=("exclude_positive",
                                             "include_positive"),
                   default="exclude_positive")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-sim", help="fit the embedding pair scorer")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True, type=parse_schema_spec)
    p.add_argument("--params", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=("mlp", "cosine_sigmoid"), default="mlp")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--negatives", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("build-store", help="embed every window into a store")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True, type=parse_schema_spec)
    p.add_argument("--params", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("query", help="answer one question")
    _add_artifact_args(p)
    p.add_argument("--question", required=True)
    p.add_argument("--now", type=int, help="reference clock (unix seconds)")
    p.add_argument("--user")
    p.add_argument("--json", action="store_true", help="print the full result")

    p = sub.add_parser("chat", help="interactive question loop on stdin")
    _add_artifact_args(p)
    p.add_argument("--now", type=int)
    p.add_argument("--user")
    p.add_argument("--trace", action="store_true")

    p = sub.add_parser("eval", help="score a JSONL record file")
    _add_artifact_args(p)
    p.add_argument("--records", required=True, help="JSONL of QA records")
    p.add_argument("--now", type=int)
    p.add_argument("--json-out", help="also write the full JSON report here")

    p = sub.add_parser("gradcheck",
                       help="verify analytic gradients against finite differences")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--demo", action="store_true",
                   help="serve synthetic data with the exact matcher")
    p.add_argument("--days", type=int, default=10)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--now", type=int)
    p.add_argument("--params")
    p.add_argument("--store")
    p.add_argument("--similarity")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--decompose-mode", choices=("rules", "llm"))
    p.add_argument("--answer-mode", choices=("template", "llm"))
    p.add_argument("--echo-gateway", action="store_true",
                   help="use the deterministic echo gateway")
    p.add_argument("--gateway-base-url")
    p.add_argument("--gateway-model")
    p.add_argument("--gateway-api-key-env")

    return parser


# ----- subcommand bodies -----

def cmd_ingest(args) -> int:
    from .ingest import write_csv

    timeline = _load_timeline(args.input, args.schema, impute=bool(args.output))
    users = sorted({w.user_id for w in timeline.windows})
    labels = sorted({l for w in timeline.windows for l in w.labels})
    lo, hi = timeline.bounds()
    print(f"windows: {len(timeline.windows)}")
    print(f"users: {', '.join(users)}")
    print(f"labels: {len(labels)}")
    print(f"span: {lo}..{hi} ({(hi - lo) // 86400} days)")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            write_csv(timeline, f)
        print(f"wrote imputed CSV to {args.output}")
    return 0


def cmd_pretrain(args) -> int:
    from .encoders import EncoderConfig, init_parameters, save_parameters
    from .ingest import build_vocabulary
    from .training import TrainConfig, retrieval_accuracy, train

    timeline = _load_timeline(args.input, args.schema)
    vocab = build_vocabulary(timeline)
    enc = EncoderConfig(embed_dim=args.embed_dim, hidden=args.hidden,
                        seed=args.seed, normalize=not args.no_normalize,
                        feature_mode=args.feature_mode)
    params = init_parameters(enc, timeline.schema, vocab)
    cfg = TrainConfig(tau=args.tau, learning_rate=args.lr, epochs=args.epochs,
                      batch_size=args.batch_size, denominator=args.denominator,
                      seed=args.seed)
    trained, history = train(params, timeline, vocab, cfg)
    save_parameters(trained, args.output)
    acc = retrieval_accuracy(trained, timeline, vocab)
    print(f"epochs: {len(history)}")
    print(f"loss: first={history[0]:.6f} last={history[-1]:.6f}")
    print(f"retrieval accuracy: {acc:.4f}")
    print(f"wrote parameters to {args.output}")
    return 0


def cmd_train_sim(args) -> int:
    from .encoders import load_parameters
    from .similarity import SimilarityConfig, save_similarity, train_similarity

    params = load_parameters(args.params)
    timeline = _load_timeline(args.input, args.schema)
    cfg = SimilarityConfig(mode=args.mode, hidden=args.hidden,
                           epochs=args.epochs,
                           negatives_per_positive=args.negatives,
                           seed=args.seed)
    model = train_similarity(params, timeline, params.vocab, cfg)
    save_similarity(model, args.output)
    extra = f" scale={model.scale}" if args.mode == "cosine_sigmoid" else ""
    print(f"mode: {args.mode}{extra}")
    print(f"wrote similarity model to {args.output}")
    return 0


def cmd_build_store(args) -> int:
    from .encoders import load_parameters
    from .store import build_store, save_store

    params = load_parameters(args.params)
    timeline = _load_timeline(args.input, args.schema)
    store = build_store(params, timeline)
    save_store(store, args.output)
    lo, hi = store.bounds()
    print(f"windows: {len(store)}")
    print(f"span: {lo}..{hi}")
    print(f"wrote store to {args.output}")
    return 0


def cmd_query(args) -> int:
    pipeline, _ = _build_pipeline(args)
    result = pipeline.answer(args.question, now=args.now, user_id=args.user)
    if args.json:
        print(json.dumps(asdict(result), indent=2))
    else:
        print(result.answer)
        print(f"[short: {result.short}]")
    return 0


def cmd_chat(args) -> int:
    from .errors import DecompositionError

    pipeline, _ = _build_pipeline(args)
    print("type a question (ctrl-d or 'quit' to exit)", file=sys.stderr)
    for line in sys.stdin:
        question = line.strip()
        if not question:
            continue
        if question in ("quit", "exit"):
            break
        try:
            result = pipeline.answer(question, now=args.now, user_id=args.user)
        except DecompositionError as e:
            print(f"could not understand that: {e}")
            continue
        print(result.answer)
        print(f"[short: {result.short}]")
        if args.trace:
            for step in result.trace:
                print(f"  {step}")
    return 0


def cmd_eval(args) -> int:
    from .evalharness import evaluate, load_records

    pipeline, _ = _build_pipeline(args)
    try:
        records = load_records(args.records)
    except ValueError as e:
        raise LoqaError(str(e)) from None
    report = evaluate(pipeline, records, now=args.now)
    print(report.render_table())
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as f:
            f.write(report.to_json())
        print(f"wrote JSON report to {args.json_out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .training import run_gradcheck

    results = run_gradcheck(count=args.count)
    failed = 0
    for name, err in results:
        status = "ok" if err <= args.tolerance else "FAIL"
        if status == "FAIL":
            failed += 1
        print(f"{status}  rel_err={err:.3e}  {name}")
    print(f"{len(results) - failed}/{len(results)} within {args.tolerance:g}")
    return 0 if failed == 0 else RUNTIME_EXIT


def _serve_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            cfg = json.load(f)
        if not isinstance(cfg, dict):
            raise LoqaError("service config must be a JSON object")

    def pick(key, flag, default=None):
        return flag if flag not in (None, False) else cfg.get(key, default)

    merged = {
        "demo": bool(pick("demo", args.demo, False)),
        "days": pick("days", args.days if args.days != 10 else None, 10),
        "seed": pick("seed", args.seed if args.seed != 11 else None, 11),
        "now": pick("now", args.now),
        "params": pick("params", args.params),
        "store": pick("store", args.store),
        "similarity": pick("similarity", args.similarity),
        "host": pick("host", args.host if args.host != "127.0.0.1" else None,
                     "127.0.0.1"),
        "port": int(pick("port", args.port if args.port != 8000 else None, 8000)),
        "decompose_mode": pick("decompose_mode", args.decompose_mode, "rules"),
        "answer_mode": pick("answer_mode", args.answer_mode, "template"),
        "echo_gateway": bool(pick("echo_gateway", args.echo_gateway, False)),
        "gateway": cfg.get("gateway"),
        "h": cfg.get("h", 0.5),
        "top_k": cfg.get("top_k", 3),
        "gap_minutes": cfg.get("gap_minutes", 5),
        "time_of_day": cfg.get("time_of_day"),
    }
    if args.gateway_base_url or args.gateway_model:
        merged["gateway"] = {
            "base_url": args.gateway_base_url,
            "model": args.gateway_model,
            **({"api_key_env": args.gateway_api_key_env}
               if args.gateway_api_key_env else {}),
        }
    return merged


def build_app_state(cfg: dict):
    """Assemble service state from a merged config dict."""
    from .service import AppState, demo_state

    if cfg.get("time_of_day"):
        from .timescope import configure_time_of_day
        configure_time_of_day(cfg["time_of_day"])

    gateway = None
    if cfg.get("echo_gateway"):
        from .gateway import EchoGateway
        gateway = EchoGateway()
    elif cfg.get("gateway"):
        from .gateway import GatewayConfig, HttpGateway
        g = cfg["gateway"]
        gateway = HttpGateway(GatewayConfig(
            base_url=g["base_url"], model=g["model"],
            api_key_env=g.get("api_key_env", "LOQA_API_KEY"),
            timeout_ms=int(g.get("timeout_ms", 30000)),
            retries=int(g.get("retries", 1))))

    if cfg["demo"]:
        state = demo_state(days=int(cfg["days"]), seed=int(cfg["seed"]),
                           now=cfg["now"])
        if gateway is not None:
            state.pipeline.gateway = gateway
            state.pipeline.decompose_mode = cfg["decompose_mode"]
            state.pipeline.answer_mode = cfg["answer_mode"]
        return state

    for key in ("params", "store", "similarity"):
        if not cfg.get(key):
            raise UsageError(
                f"serve needs --{key} (or a config entry) unless --demo is set")

    ns = argparse.Namespace(
        params=cfg["params"], store=cfg["store"], similarity=cfg["similarity"],
        decompose_mode=cfg["decompose_mode"], answer_mode=cfg["answer_mode"],
        threshold=float(cfg["h"]), top_k=int(cfg["top_k"]),
        gap_minutes=int(cfg["gap_minutes"]))
    pipeline, params = _build_pipeline(ns, gateway=gateway)
    state = AppState(pipeline=pipeline, params=params)
    if cfg["now"] is not None:
        fixed = int(cfg["now"])
        state.now_fn = lambda: fixed
    return state


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _serve_config(args)
    state = build_app_state(cfg)
    app = create_app(state)
    print(f"serving on http://{cfg['host']}:{cfg['port']}", file=sys.stderr)
    uvicorn.run(app, host=cfg["host"], port=cfg["port"], log_level="warning")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "pretrain": cmd_pretrain,
    "train-sim": cmd_train_sim,
    "build-store": cmd_build_store,
    "query": cmd_query,
    "chat": cmd_chat,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return USAGE_EXIT
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return USAGE_EXIT
    except FileNotFoundError as e:
        print(f"loqa: {e}", file=sys.stderr)
        return RUNTIME_EXIT
    except LoqaError as e:
        print(f"loqa: {e}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
