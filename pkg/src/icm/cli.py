"""Command-line surface: label, resume, synth, bruteforce, eval.

Exit codes: 0 success, 2 config error, 3 dataset error, 4 backend
failure, 5 checkpoint error, 10 halted with a resumable checkpoint.

Configuration is a flat JSON object mirroring the search knobs plus
backend/oracle selection; command-line flags override file values, and
the effective config is echoed into the run manifest. Secrets are only
ever read from environment variables.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import fields

from .data import (
    Assignment,
    Dataset,
    DatasetError,
    EvaluationError,
    accuracy,
    parse_dataset,
    serialize_dataset,
    serialize_labels,
)
from .harness import (
    brute_force_optimum,
    generate_synthetic_task,
    run_report,
)
from .predictor import (
    CountingPredictor,
    MajorityBiasOracle,
    PlantedConceptOracle,
    SyntheticTaskSpec,
    UniformOracle,
    balanced_concept,
)
from .remote import BackendConfig, BackendError, RemotePredictor
from .scorer import MODE_EXACT, Scorer
from .search import (
    CheckpointError,
    SearchConfig,
    finalize_labels,
    load_checkpoint,
    run_icm,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_BACKEND = 4
EXIT_CHECKPOINT = 5
EXIT_HALTED = 10


class ConfigError(ValueError):
    pass


_SEARCH_FIELDS = {f.name for f in fields(SearchConfig)}
_FLAG_TO_CONFIG = {
    "seed": "seed",
    "alpha": "alpha",
    "k_init": "k_init",
    "t0": "t0",
    "t_min": "t_min",
    "beta": "beta",
    "iterations": "iterations",
    "context_budget": "context_budget",
    "weight_factor": "weight_factor",
}


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            obj = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a flat JSON object")
    return obj


def _effective_settings(args: argparse.Namespace) -> dict:
    settings = _load_config_file(getattr(args, "config", None))
    for flag, key in _FLAG_TO_CONFIG.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    for flag in ("oracle", "backend_url", "model"):
        value = getattr(args, flag, None)
        if value is not None:
            settings[flag] = value
    return settings


def _split_settings(settings: dict) -> tuple[SearchConfig, dict]:
    known_extras = {"oracle", "backend_url", "model", "smoothing", "auth_token_env"}
    unknown = set(settings) - _SEARCH_FIELDS - known_extras
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    search_kwargs = {k: v for k, v in settings.items() if k in _SEARCH_FIELDS}
    extras = {k: v for k, v in settings.items() if k in known_extras}
    try:
        config = SearchConfig(**search_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid search config: {exc}") from exc
    return config, extras


def _build_predictor(extras: dict, dataset: Dataset) -> CountingPredictor | RemotePredictor:
    """Predictor selection: an oracle spec string or a remote backend.

    Oracle specs: ``uniform``, ``majority``, ``planted:<seed>``,
    ``non-salient:<seed>``. Seeded oracles reconstruct their hidden concept
    from the seed and the dataset's ids.
    """
    oracle = extras.get("oracle")
    backend_url = extras.get("backend_url")
    if oracle and backend_url:
        raise ConfigError("choose either an oracle or a backend, not both")
    if backend_url:
        model = extras.get("model")
        if not model:
            raise ConfigError("--model is required with --backend-url")
        config = BackendConfig(
            base_url=backend_url,
            model_name=model,
            auth_token_env_name=extras.get("auth_token_env", "ICM_BACKEND_TOKEN"),
        )
        return RemotePredictor(config, dataset.label_space)
    if not oracle:
        raise ConfigError("no predictor configured: pass --oracle or --backend-url")
    smoothing = float(extras.get("smoothing", 1.0))
    name, _, arg = oracle.partition(":")
    if name == "uniform":
        return UniformOracle(dataset.label_space)
    if name == "majority":
        return MajorityBiasOracle(dataset.label_space, smoothing=smoothing)
    if name in ("planted", "non-salient"):
        if not arg:
            raise ConfigError(f"oracle {name!r} needs a seed, e.g. {name}:7")
        seed = arg if name == "planted" else f"{arg}|hidden"
        concept = balanced_concept(seed, dataset.ids(), dataset.label_space)
        return PlantedConceptOracle(concept, dataset.label_space, smoothing=smoothing)
    raise ConfigError(f"unknown oracle {oracle!r}")


def _load_dataset(path: str) -> Dataset:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return parse_dataset(handle)
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc


def _append_manifest(out_path: str, entry: dict) -> None:
    with open(out_path + ".manifest", "a", encoding="utf-8") as handle:
        handle.write(json.dumps(entry) + "\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def _finish_label_run(args_out: str, dataset, predictor, result, settings: dict, digest: str, started_iso: str) -> None:
    assignment = result.assignment
    from .consistency import InconsistencyIndex  # local import keeps CLI deps flat

    index = InconsistencyIndex(result.links)
    finalize_labels(dataset, assignment, predictor, result.config, index)
    _write_text(args_out, serialize_labels(dataset, assignment))
    report = run_report(
        result.trace, assignment, dataset,
        wall_clock=result.wall_clock, forward_passes=predictor.forward_passes,
    )
    _write_text(args_out + ".report", report.to_summary())
    _append_manifest(
        args_out,
        {
            "started_at": started_iso,
            "finished_at": _utc_now(),
            "config": settings,
            "dataset_digest": digest,
            "predictor": predictor.name,
            "outcome": "completed",
        },
    )


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def cmd_label(args: argparse.Namespace) -> int:
    settings = _effective_settings(args)
    config, extras = _split_settings(settings)
    dataset = _load_dataset(args.dataset)
    digest = _sha256_file(args.dataset)
    predictor = _build_predictor(extras, dataset)
    started = _utc_now()
    meta = {
        "dataset_path": os.path.abspath(args.dataset),
        "dataset_digest": digest,
        "predictor": predictor.name,
        "settings": settings,
        "out_path": os.path.abspath(args.out),
    }
    try:
        result = run_icm(
            dataset, predictor, config,
            checkpoint_path=args.checkpoint, checkpoint_meta=meta,
        )
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        if args.checkpoint:
            print(f"resumable checkpoint: {args.checkpoint}", file=sys.stderr)
        _append_manifest(
            args.out,
            {
                "started_at": started,
                "finished_at": _utc_now(),
                "config": settings,
                "dataset_digest": digest,
                "predictor": predictor.name,
                "outcome": "aborted-resumable" if args.checkpoint else "failed",
            },
        )
        return EXIT_BACKEND
    if not result.completed:
        _append_manifest(
            args.out,
            {
                "started_at": started,
                "finished_at": _utc_now(),
                "config": settings,
                "dataset_digest": digest,
                "predictor": predictor.name,
                "outcome": "aborted-resumable",
            },
        )
        print(f"halted after {config.halt_after_steps} steps; resume from {args.checkpoint}")
        return EXIT_HALTED
    _finish_label_run(args.out, dataset, predictor, result, settings, digest, started)
    return EXIT_OK


def cmd_resume(args: argparse.Namespace) -> int:
    payload = load_checkpoint(args.checkpoint)
    meta = payload.get("meta", {})
    dataset_path = args.dataset or meta.get("dataset_path")
    if not dataset_path:
        raise CheckpointError("checkpoint carries no dataset path; pass --dataset")
    dataset = _load_dataset(dataset_path)
    digest = _sha256_file(dataset_path)
    if meta.get("dataset_digest") and meta["dataset_digest"] != digest:
        raise CheckpointError(
            f"dataset digest mismatch: checkpoint has {meta['dataset_digest'][:12]}..., "
            f"file is {digest[:12]}..."
        )
    settings = meta.get("settings", {})
    _, extras = _split_settings(dict(settings))
    predictor = _build_predictor(extras, dataset)
    out_path = args.out or meta.get("out_path")
    if not out_path:
        raise ConfigError("checkpoint carries no output path; pass --out")
    if payload.get("completed"):
        print("checkpoint marks a completed run; nothing to do")
        return EXIT_OK
    started = _utc_now()
    # lift any halt so the resumed leg runs to completion unless re-specified
    resume_config = dict(payload["config"])
    if args.halt_after_steps is not None:
        resume_config["halt_after_steps"] = args.halt_after_steps
    elif "halt_after_steps" in resume_config:
        resume_config["halt_after_steps"] = None
    payload = dict(payload, config=resume_config)
    try:
        result = run_icm(
            dataset, predictor, SearchConfig(**resume_config),
            checkpoint_path=args.checkpoint, checkpoint_meta=meta, resume_from=payload,
        )
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    if not result.completed:
        print(f"halted again; resume from {args.checkpoint}")
        return EXIT_HALTED
    _finish_label_run(out_path, dataset, predictor, result, dict(settings), digest, started)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        spec = SyntheticTaskSpec(
            size=args.n,
            planted_seed=args.seed if args.seed is not None else 0,
            oracle_mode=args.oracle_mode,
            smoothing=args.smoothing,
            link_fraction=args.link_fraction,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    dataset, _ = generate_synthetic_task(spec, exclusive_pairs=args.exclusive_pairs)
    _write_text(args.out, serialize_dataset(dataset))
    print(f"wrote {len(dataset)} records to {args.out}")
    return EXIT_OK


def cmd_bruteforce(args: argparse.Namespace) -> int:
    settings = _effective_settings(args)
    config, extras = _split_settings(settings)
    dataset = _load_dataset(args.dataset)
    predictor = _build_predictor(extras, dataset)
    from .consistency import derive_links

    links = derive_links(dataset)
    scorer = Scorer(
        dataset, links, predictor,
        alpha=config.alpha, mode=MODE_EXACT,
        context_budget=config.context_budget, base_seed=config.seed,
    )
    try:
        best, best_u = brute_force_optimum(dataset, scorer)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"u_star={best_u!r}")
    for ex_id in sorted(best.labeled_ids()):
        print(f"{ex_id}\t{best.get(ex_id)}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.dataset)
    labels = Assignment()
    try:
        with open(args.labels, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "id" not in obj or "label" not in obj:
                    raise DatasetError("label records need 'id' and 'label'", line=line_no)
                labels.set(obj["id"], obj["label"])
    except OSError as exc:
        raise DatasetError(f"cannot read labels {args.labels}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed labels file: {exc}") from exc
    try:
        value = accuracy(labels, dataset)
    except EvaluationError as exc:
        raise DatasetError(str(exc)) from exc
    print(f"accuracy={value!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icm",
        description="Label datasets by coherence maximization and evaluate the results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--k-init", dest="k_init", type=int)
        p.add_argument("--t0", type=float)
        p.add_argument("--t-min", dest="t_min", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--iterations", type=int)
        p.add_argument("--context-budget", dest="context_budget", type=int)
        p.add_argument("--weight-factor", dest="weight_factor", type=float)
        p.add_argument("--oracle", help="uniform | majority | planted:<seed> | non-salient:<seed>")
        p.add_argument("--backend-url", dest="backend_url")
        p.add_argument("--model")

    label = sub.add_parser("label", help="run a labeling job")
    label.add_argument("--dataset", required=True)
    label.add_argument("--out", required=True)
    label.add_argument("--checkpoint")
    add_run_flags(label)
    label.set_defaults(func=cmd_label)

    resume = sub.add_parser("resume", help="continue a checkpointed run")
    resume.add_argument("--checkpoint", required=True)
    resume.add_argument("--dataset", help="override the checkpoint's dataset path")
    resume.add_argument("--out", help="override the checkpoint's output path")
    resume.add_argument("--halt-after-steps", dest="halt_after_steps", type=int)
    resume.set_defaults(func=cmd_resume)

    synth = sub.add_parser("synth", help="generate a synthetic task dataset")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--link-fraction", dest="link_fraction", type=float, default=0.5)
    synth.add_argument(
        "--oracle-mode", dest="oracle_mode", default="planted_concept",
        choices=["planted_concept", "majority_bias", "non_salient"],
    )
    synth.add_argument("--smoothing", type=float, default=1.0)
    synth.add_argument(
        "--exclusive-pairs", dest="exclusive_pairs", action="store_true",
        help="declare pair constraints as custom links forbidding both same-label outcomes",
    )
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_synth)

    brute = sub.add_parser("bruteforce", help="exhaustive optimum for toy datasets")
    brute.add_argument("--dataset", required=True)
    add_run_flags(brute)
    brute.set_defaults(func=cmd_bruteforce)

    evl = sub.add_parser("eval", help="score a labels file against golden labels")
    evl.add_argument("--labels", required=True)
    evl.add_argument("--dataset", required=True)
    evl.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
