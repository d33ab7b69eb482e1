"""Command-line entry points: train, eval, predict, synth, bench, serve."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import checkpoint as ck
from .data import load_dataset, prepare, synth_generate, write_dataset
from .model import DeepPA, ModelConfig
from .training import TrainConfig, evaluate_model, load_best, train

log = logging.getLogger("stpark")

SEED_ENV = "STPARK_SEED"


@dataclass
class DataConfig:
    dir: Optional[str] = None
    synthetic: Optional[dict] = None  # {"n_lots", "n_days", "seed"} instead of a directory
    history: int = 12
    horizon: int = 12
    ratios: list = field(default_factory=lambda: [10, 1, 1])
    filter_lots: bool = True
    max_missing: float = 0.30
    kl_threshold: float = 0.5

    def __post_init__(self):
        if (self.dir is None) == (self.synthetic is None):
            raise ValueError("data config needs exactly one of 'dir' or 'synthetic'")
        if self.synthetic is not None:
            unknown = set(self.synthetic) - {"n_lots", "n_days", "seed"}
            if unknown:
                raise ValueError(f"unknown synthetic keys: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown data config keys: {sorted(unknown)}")
        return cls(**d)

    def load(self):
        if self.dir is not None:
            return load_dataset(self.dir)
        return synth_generate(**self.synthetic)


def read_config(path) -> tuple[DataConfig, dict, TrainConfig]:
    """Parse a config document; the model section stays a dict until the data fixes N."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(doc) - {"data", "model", "train"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    data = DataConfig.from_dict(doc.get("data", {}))
    model = dict(doc.get("model", {}))
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    bad = set(model) - known
    if bad:
        raise ValueError(f"unknown model config keys: {sorted(bad)}")
    train_cfg = dict(doc.get("train", {}))
    if SEED_ENV in os.environ:
        try:
            train_cfg["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer") from None
    return data, model, TrainConfig.from_dict(train_cfg)


def _derived(model: dict, name: str, value):
    if model.get(name, value) != value:
        raise ValueError(f"model.{name}={model[name]} conflicts with the data ({value})")
    model[name] = value


def build_model_config(model: dict, data: DataConfig, train_ds) -> ModelConfig:
    model = dict(model)
    _derived(model, "n_lots", len(train_ds.lot_ids))
    _derived(model, "history", data.history)
    _derived(model, "horizon", data.horizon)
    _derived(model, "n_planning_areas", len(train_ds.spatial.planning_vocab))
    _derived(model, "n_land_uses", len(train_ds.spatial.land_use_vocab))
    return ModelConfig(**model)


def prepare_data(data: DataConfig, keep_lots=None, stats=None):
    frame, temporal, lots = data.load()
    if keep_lots is None and not data.filter_lots:
        keep_lots = frame.lot_ids
    return prepare(frame, temporal, lots, data.history, data.horizon, tuple(data.ratios),
                   data.max_missing, data.kl_threshold, keep_lots=keep_lots, stats=stats)


def cmd_train(config_path, resume: bool = False, out=None) -> dict:
    out = out or sys.stdout
    data, model_doc, tcfg = read_config(config_path)
    if not tcfg.checkpoint_path:
        raise ValueError("train.checkpoint_path is required")
    state = None
    if resume and Path(tcfg.checkpoint_path).exists():
        saved = ck.load_checkpoint(tcfg.checkpoint_path)
        model = ck.restore_model(saved)
        state = ck.restore_state(saved)
        tr, va, te = prepare_data(data, keep_lots=saved.meta["lot_ids"], stats=ck.data_stats(saved))
    else:
        tr, va, te = prepare_data(data)
        model = DeepPA(build_model_config(model_doc, data, tr), seed=tcfg.seed)
    print(json.dumps({"parameters": model.n_params, "lots": len(tr.lot_ids),
                      "windows": [tr.n_windows, va.n_windows, te.n_windows]}), file=out, flush=True)
    data_doc = dataclasses.asdict(data)

    def save(record, st):
        ck.save_checkpoint(tcfg.checkpoint_path, ck.from_training(model, tr, st, tcfg, data_doc))
        print(json.dumps(record), file=out, flush=True)

    state = train(model, tr, va, tcfg, state=state, on_epoch=save)
    ck.save_checkpoint(tcfg.checkpoint_path, ck.from_training(model, tr, state, tcfg, data_doc))
    load_best(model, state)
    report = evaluate_model(model, te)
    print(json.dumps({"test": report.to_dict()}), file=out, flush=True)
    return report.to_dict()


def _checkpoint_data(saved: ck.Checkpoint, directory) -> DataConfig:
    doc = dict(saved.meta.get("data") or {})
    doc.update(dir=str(directory), synthetic=None)
    return DataConfig.from_dict(doc)


def _serving_model(saved: ck.Checkpoint):
    return ck.restore_model(saved, "best" if saved.best_params is not None else "param")


def cmd_eval(ckpt_path, data_dir, out=None):
    out = out or sys.stdout
    saved = ck.load_checkpoint(ckpt_path)
    data = _checkpoint_data(saved, data_dir)
    _, _, te = prepare_data(data, keep_lots=saved.meta["lot_ids"], stats=ck.data_stats(saved))
    report = evaluate_model(_serving_model(saved), te)
    print(report.table(), file=out)
    print(json.dumps(report.to_dict(), sort_keys=True), file=out, flush=True)
    return report


def _forecaster(saved, data_dir):
    from .service import Forecaster

    if saved.best_params is not None:
        saved = dataclasses.replace(saved, params=saved.best_params)
    return Forecaster.from_directory(saved, data_dir)


def cmd_predict(ckpt_path, data_dir, lot_ids, out_path=None, out=None):
    out = out or sys.stdout
    saved = ck.load_checkpoint(ckpt_path)
    fc = _forecaster(saved, data_dir)
    unknown = [lot for lot in lot_ids if not fc.knows(lot)]
    if unknown:
        raise KeyError(f"unknown lots {unknown}")
    payloads = [dataclasses.asdict(fc.payload(lot)) for lot in lot_ids]
    text = json.dumps(payloads, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text, file=out)
    return payloads


def cmd_synth(n_lots, n_days, seed, out_dir):
    frame, temporal, lots = synth_generate(n_lots, n_days, seed)
    write_dataset(out_dir, frame, temporal, lots)


def cmd_bench(variant, nodes=None, slices: int = 2, out=None):
    out = out or sys.stdout
    from .bench import NODE_COUNTS, run_bench

    variants = ("gco", "msa") if variant == "both" else (variant,)
    rows = run_bench(variants, nodes or NODE_COUNTS, slices=slices)
    for row in rows:
        print(json.dumps(row), file=out, flush=True)
    return rows


def cmd_serve(ckpt_path, data_dir, port, host="127.0.0.1"):
    from .service import make_server

    server = make_server(None, host, port)
    server.forecaster = _forecaster(ck.load_checkpoint(ckpt_path), data_dir)
    log.info("serving on %s:%d", host, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors raise instead of exiting so they share the JSON error line."""

    def error(self, message):
        raise _ArgError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stpark", description="Parking availability forecasting.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("train")
    s.add_argument("--config", required=True)
    s.add_argument("--resume", action="store_true", help="continue from train.checkpoint_path if present")
    s = sub.add_parser("eval")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s = sub.add_parser("predict")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--lots", required=True, help="comma-separated lot ids")
    s.add_argument("--out")
    s = sub.add_parser("synth")
    s.add_argument("--lots", type=int, required=True)
    s.add_argument("--days", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s = sub.add_parser("bench")
    s.add_argument("--variant", choices=("gco", "msa", "both"), default="both")
    s.add_argument("--nodes", help="comma-separated node counts")
    s.add_argument("--slices", type=int, default=2, help="graphs per timed step (batch x time)")
    s = sub.add_parser("serve")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--port", type=int, default=8080)
    s.add_argument("--host", default="127.0.0.1")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.command == "train":
            cmd_train(args.config, args.resume)
        elif args.command == "eval":
            cmd_eval(args.ckpt, args.data)
        elif args.command == "predict":
            cmd_predict(args.ckpt, args.data, [x for x in args.lots.split(",") if x], args.out)
        elif args.command == "synth":
            cmd_synth(args.lots, args.days, args.seed, args.out)
        elif args.command == "bench":
            nodes = [int(x) for x in args.nodes.split(",")] if args.nodes else None
            cmd_bench(args.variant, nodes, args.slices)
        elif args.command == "serve":
            cmd_serve(args.ckpt, args.data, args.port, args.host)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line
        kind = "usage" if isinstance(exc, _ArgError) else type(exc).__name__
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)
        return 1
    return 0
