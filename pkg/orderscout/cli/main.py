"""
Command-line interface for OrderScout.

Subcommands generate data and candidate sets, train and evaluate models,
profile and search target orders, and collect run directories into
reports. Each prints one result record on stdout; logs go to stderr.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from orderscout import __version__
from orderscout.config import RunConfig, dump_run_config, load_run_config, run_config_to_dict
from orderscout.evaluator import (
    attention_sparsity,
    capture_attention,
    eval_success,
    export_attention_csv,
    prod_digit_grid,
    rank_retrain_sweep,
)
from orderscout.models import (
    ConfigurationError,
    Dataset,
    GlobalSearchConfig,
    OrderScoutError,
    OutputFormat,
    Permutation,
    PermSetKind,
    PermutationSet,
    SoftPermMode,
    Split,
    TaskKind,
    TaskSpec,
    TrainingAbortedError,
    Vocabulary,
)
from orderscout.permutation import (
    identity,
    load_permutation_set,
    make_set,
    reverse,
    save_permutation_set,
)
from orderscout.report import (
    ReportArtifacts,
    build_manifest,
    collect_run_dir,
    emit_report,
    plot_loss_profile,
    plot_rank_curve,
    plot_soft_permutation,
    read_manifest,
    write_es_history_csv,
    write_loss_profile_csv,
    write_manifest,
    write_rank_curve_csv,
    write_sparsity_csv,
    write_trace_json,
    write_train_log,
)
from orderscout.search import LossProfiler, global_stage, hierarchical_search, run_es
from orderscout.taskgen import (
    DEFAULT_EVAL_SEED,
    DEFAULT_TRAIN_SEED,
    DEFAULT_VALIDATION_SEED,
    build_vocab,
    dataset_hash,
    gen_dataset,
    gen_splits,
    load_dataset,
    save_dataset,
)
from orderscout.trainer import train, train_soft_perm
from orderscout.transformer import build_model, load_checkpoint, model_config_for
from .formatter import format_error, format_json, format_text
from .logger import setup_logging

logger = logging.getLogger(__name__)

Result = Dict[str, Any]

_SPLIT_SEEDS = {
    Split.TRAIN: DEFAULT_TRAIN_SEED,
    Split.VALIDATION: DEFAULT_VALIDATION_SEED,
    Split.EVAL: DEFAULT_EVAL_SEED,
}


# ============================================================================
# Argument Helpers
# ============================================================================

def parse_task(args: argparse.Namespace, run_config: RunConfig) -> TaskSpec:
    """
    Build the TaskSpec from --task/--len/--window/--digits, falling back to
    the run config's task section.

    Raises:
        ConfigurationError: If no task is given or its options are incomplete
    """
    if getattr(args, "task", None) is None:
        if run_config.task is None:
            raise ConfigurationError("no task given: pass --task or a config with a task section")
        return run_config.task

    kind = TaskKind(args.task)
    if kind == TaskKind.PROD:
        digits = args.digits or (args.len // 2 if args.len else None)
        if digits is None:
            raise ConfigurationError("prod task requires --digits or --len")
        return TaskSpec.prod(digits)
    if args.len is None:
        raise ConfigurationError(f"{kind.value} task requires --len")
    if kind == TaskKind.INDEX:
        if args.window is None:
            raise ConfigurationError("index task requires --window")
        return TaskSpec.index(args.len, args.window)
    return TaskSpec(kind, args.len)


def parse_perm(value: Optional[str], length: int) -> Permutation:
    """
    Resolve --perm: identity, reverse, a comma list like 2,0,1 or a
    permutation file (its first member).

    Example:
        >>> parse_perm("reverse", 3).to_list()
        [2, 1, 0]
    """
    if value is None or value == "identity":
        return identity(length)
    if value == "reverse":
        return reverse(length)
    if "," in value and not Path(value).exists():
        try:
            perm = Permutation(tuple(int(v) for v in value.split(",")))
        except ValueError:
            raise ConfigurationError(f"invalid permutation list: {value}")
    else:
        perm = load_permutation_set(value)[0]
    if len(perm) != length:
        raise ConfigurationError(f"permutation has length {len(perm)}, task needs {length}")
    return perm


def apply_overrides(args: argparse.Namespace, run_config: RunConfig) -> RunConfig:
    """CLI flags win over config-file values."""
    if args.seed is not None:
        run_config.seed = args.seed
        run_config.train = replace(run_config.train, seed=args.seed)
        run_config.es = replace(run_config.es, seed=args.seed)
    if args.out_dir is not None:
        run_config.out_dir = args.out_dir
    if getattr(args, "epochs", None) is not None:
        run_config.train = replace(run_config.train, epochs=args.epochs)
    if getattr(args, "lr", None) is not None:
        run_config.train = replace(run_config.train, lr_init=args.lr)
    if getattr(args, "batch_size", None) is not None:
        run_config.train = replace(run_config.train, batch_size=args.batch_size)
    data = run_config.data
    if getattr(args, "train_size", None) is not None:
        data = replace(data, train_size=args.train_size)
    if getattr(args, "val_size", None) is not None:
        data = replace(data, validation_size=args.val_size)
    if getattr(args, "eval_size", None) is not None:
        data = replace(data, eval_size=args.eval_size)
    run_config.data = data
    return run_config


def prepare_data(task: TaskSpec, run_config: RunConfig) -> Tuple[Dataset, Dataset, Dataset, Vocabulary]:
    """Train/validation/eval splits and their joint vocabulary."""
    data = run_config.data
    train_set, val_set, eval_set = gen_splits(
        task, data.train_size, data.validation_size, data.eval_size,
        train_seed=data.train_seed, validation_seed=data.validation_seed, eval_seed=data.eval_seed,
    )
    vocab = build_vocab([train_set, val_set, eval_set])
    return train_set, val_set, eval_set, vocab


def _model_config(task: TaskSpec, vocab: Vocabulary, run_config: RunConfig):
    return model_config_for(task, vocab, run_config.model.preset, **run_config.model.overrides)


def _out(run_config: RunConfig, name: str) -> Path:
    out = Path(run_config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_run_manifest(
    run_config: RunConfig, artifacts: List[Path], datasets: Dict[str, Dataset]
) -> Path:
    config_path = dump_run_config(run_config, str(_out(run_config, "run_config.yaml")))
    manifest = build_manifest(
        configs=run_config_to_dict(run_config),
        seeds={
            "seed": run_config.seed,
            "train": run_config.data.train_seed,
            "validation": run_config.data.validation_seed,
            "eval": run_config.data.eval_seed,
        },
        dataset_hashes={name: dataset_hash(ds) for name, ds in datasets.items()},
    )
    manifest.artifacts = sorted(str(p) for p in [*artifacts, config_path])
    return write_manifest(manifest, str(_out(run_config, "manifest.json")))


# ============================================================================
# Commands
# ============================================================================

def cmd_gen_data(args: argparse.Namespace, run_config: RunConfig) -> Result:
    task = parse_task(args, run_config)
    split = Split(args.split)
    seed = args.data_seed if args.data_seed is not None else _SPLIT_SEEDS[split]
    size = args.size if args.size is not None else {
        Split.TRAIN: run_config.data.train_size,
        Split.VALIDATION: run_config.data.validation_size,
        Split.EVAL: run_config.data.eval_size,
    }[split]
    dataset = gen_dataset(task, size, seed, split)
    path = save_dataset(dataset, args.out or str(_out(run_config, f"{split.value}.jsonl")))
    return {
        "command": "gen-data",
        "task": task.kind.value,
        "target_len": task.target_len,
        "split": split.value,
        "size": dataset.size,
        "seed": seed,
        "sha256": dataset_hash(dataset),
        "artifacts": [str(path)],
    }


def cmd_make_perms(args: argparse.Namespace, run_config: RunConfig) -> Result:
    kind = PermSetKind(args.kind)
    perm_set = make_set(kind, args.len, args.count, seed=run_config.seed, block_len=args.block_len)
    path = save_permutation_set(perm_set, args.out or str(_out(run_config, f"perms_{kind.value}.json")))
    return {
        "command": "make-perms",
        "kind": kind.value,
        "length": args.len,
        "size": len(perm_set),
        "artifacts": [str(path)],
    }


def cmd_train(args: argparse.Namespace, run_config: RunConfig) -> Result:
    task = parse_task(args, run_config)
    train_set, val_set, eval_set, vocab = prepare_data(task, run_config)
    model = build_model(_model_config(task, vocab, run_config), seed=run_config.train.seed)
    checkpoint = _out(run_config, "model.pt")

    if args.soft_perm:
        soft_config = replace(run_config.soft_perm, mode=SoftPermMode(args.soft_perm))
        report, soft = train_soft_perm(model, train_set, vocab, run_config.train, soft_config)
        matrix = soft.matrix().detach().cpu().numpy()
        artifacts = list(write_train_log(report, run_config.out_dir))
        artifacts.append(plot_soft_permutation(matrix, str(_out(run_config, "soft_permutation.svg"))))
        artifacts.append(_write_run_manifest(run_config, artifacts, {"train": train_set}))
        return {
            "command": "train",
            "mode": f"soft-{args.soft_perm}",
            "steps": report.steps,
            "final_loss": report.final_loss,
            "max_row_entropy": float(soft.row_entropies().max().item()),
            "artifacts": [str(p) for p in artifacts],
            "warnings": report.warnings,
        }

    perm = parse_perm(args.perm, task.target_len)
    try:
        report = train(model, train_set, perm, vocab, run_config.train,
                       validation=val_set, checkpoint_path=str(checkpoint))
    except TrainingAbortedError as e:
        if e.partial_report is not None:
            write_train_log(e.partial_report, run_config.out_dir)
        raise
    evaluation = eval_success(model, eval_set, perm, vocab)
    artifacts = [checkpoint, *write_train_log(report, run_config.out_dir)]
    artifacts.append(_write_run_manifest(
        run_config, artifacts, {"train": train_set, "validation": val_set, "eval": eval_set}
    ))
    return {
        "command": "train",
        "task": task.kind.value,
        "target_len": task.target_len,
        "order": perm,
        "steps": report.steps,
        "final_loss": report.final_loss,
        "validation_losses": report.epoch_val_losses,
        "success_rate": evaluation.success_rate,
        "wall_clock_seconds": report.wall_clock_seconds,
        "artifacts": [str(p) for p in artifacts],
        "warnings": report.warnings,
    }


def _candidates(args: argparse.Namespace, length: int, run_config: RunConfig,
                default_count: int) -> PermutationSet:
    source = getattr(args, "perms", None) or getattr(args, "init", None) or "g"
    if source in {k.value for k in PermSetKind if k != PermSetKind.EXPLICIT}:
        count = args.count or default_count
        return make_set(PermSetKind(source), length, count, seed=run_config.seed,
                        block_len=args.block_len)
    perm_set = load_permutation_set(source)
    if perm_set.length != length:
        raise ConfigurationError(f"permutation file has length {perm_set.length}, task needs {length}")
    return perm_set


def cmd_profile(args: argparse.Namespace, run_config: RunConfig) -> Result:
    task = parse_task(args, run_config)
    train_set, val_set, eval_set, vocab = prepare_data(task, run_config)
    model_config = _model_config(task, vocab, run_config)
    candidates = _candidates(args, task.target_len, run_config, default_count=32)

    profiler = LossProfiler(train_set, val_set, vocab, model_config, run_config.train,
                            epochs=args.profile_epochs)
    result = profiler.profile(candidates)
    artifacts = [
        write_loss_profile_csv(result, str(_out(run_config, "loss_profile.csv"))),
        plot_loss_profile(result, str(_out(run_config, "loss_profile.svg")),
                          highlight=candidates.index_of(identity(task.target_len))),
    ]
    record: Result = {
        "command": "profile",
        "candidates": len(candidates),
        "winner": result.winner.permutation,
        "winner_loss": result.winner.loss,
        "identity_rank": result.rank_of(identity(task.target_len)),
    }

    if args.retrain_ranks:
        top = min(args.retrain_ranks, len(result))
        points = rank_retrain_sweep(result, train_set, eval_set, vocab, model_config,
                                    run_config.train, ranks=range(1, top + 1))
        artifacts.append(write_rank_curve_csv(points, str(_out(run_config, "rank_curve.csv"))))
        artifacts.append(plot_rank_curve(points, str(_out(run_config, "rank_curve.svg"))))
        record["rank_success"] = {str(p.rank): p.success for p in points}

    artifacts.append(_write_run_manifest(run_config, artifacts, {"train": train_set, "validation": val_set}))
    record["artifacts"] = [str(p) for p in artifacts]
    return record


def cmd_search(args: argparse.Namespace, run_config: RunConfig) -> Result:
    task = parse_task(args, run_config)
    train_set, val_set, eval_set, vocab = prepare_data(task, run_config)
    model_config = _model_config(task, vocab, run_config)
    global_config = GlobalSearchConfig(depth=args.depth, epochs=args.profile_epochs) if args.depth \
        else run_config.global_search
    local_config = replace(run_config.local_search, epochs=global_config.epochs)
    initial = _candidates(args, task.target_len, run_config, default_count=global_config.budget)

    profiler = LossProfiler(train_set, val_set, vocab, model_config, run_config.train)
    if args.global_only:
        _, trace = global_stage(list(initial), global_config, profiler)
    else:
        trace = hierarchical_search(list(initial), global_config, local_config, profiler)

    winner_set = PermutationSet((trace.final,), PermSetKind.EXPLICIT)
    artifacts = [
        write_trace_json(trace, str(_out(run_config, "trace.json"))),
        save_permutation_set(winner_set, str(_out(run_config, "winner.json"))),
    ]
    record: Result = {
        "command": "search",
        "depth": global_config.depth,
        "initial_candidates": len(initial),
        "global_winner": trace.global_winner,
        "final": trace.final,
        "profiles": profiler.calls,
        "candidates_profiled": profiler.candidates_profiled,
    }
    if args.evaluate:
        model = build_model(model_config, seed=run_config.train.seed)
        train(model, train_set, trace.final, vocab, run_config.train)
        record["success_rate"] = eval_success(model, eval_set, trace.final, vocab).success_rate

    artifacts.append(_write_run_manifest(run_config, artifacts, {"train": train_set, "validation": val_set}))
    record["artifacts"] = [str(p) for p in artifacts]
    record["warnings"] = trace.warnings
    return record


def cmd_es(args: argparse.Namespace, run_config: RunConfig) -> Result:
    task = parse_task(args, run_config)
    train_set, val_set, _, vocab = prepare_data(task, run_config)
    es_config = run_config.es
    if args.pop is not None:
        es_config = replace(es_config, population=args.pop,
                            tournament_size=min(es_config.tournament_size, args.pop))
    if args.gens is not None:
        es_config = replace(es_config, generations=args.gens)
    if args.fitness_epochs is not None:
        es_config = replace(es_config, fitness_epochs=args.fitness_epochs)

    result = run_es(train_set, val_set, vocab, es_config,
                    _model_config(task, vocab, run_config), run_config.train)
    best_set = PermutationSet((result.best,), PermSetKind.EXPLICIT)
    artifacts = [
        write_es_history_csv(result, str(_out(run_config, "es_history.csv"))),
        save_permutation_set(best_set, str(_out(run_config, "es_best.json"))),
    ]
    artifacts.append(_write_run_manifest(run_config, artifacts, {"train": train_set, "validation": val_set}))
    return {
        "command": "es",
        "best": result.best,
        "best_fitness": result.best_fitness,
        "generations": len(result.history) - 1,
        "evaluations": result.evaluations,
        "artifacts": [str(p) for p in artifacts],
    }


def _checkpoint_and_eval_set(
    args: argparse.Namespace, run_config: RunConfig
) -> Tuple[Any, Vocabulary, TaskSpec, Dataset]:
    model, vocab, task = load_checkpoint(args.checkpoint)
    if getattr(args, "task", None) is not None or task is None:
        task = parse_task(args, run_config)
    if getattr(args, "data", None):
        eval_set, _ = load_dataset(args.data)
    else:
        eval_set = gen_dataset(task, run_config.data.eval_size, run_config.data.eval_seed, Split.EVAL)
    check_vocab_covers(eval_set, vocab)
    return model, vocab, task, eval_set


def check_vocab_covers(dataset: Dataset, vocab: Vocabulary) -> None:
    """
    Raises:
        ConfigurationError: If the dataset holds values the checkpoint never saw
    """
    known = set(vocab.values)
    missing = sorted({v for ex in dataset.examples for v in (*ex.x, *ex.y)} - known)
    if missing:
        raise ConfigurationError(
            f"eval set has values {missing} outside the checkpoint vocabulary; "
            f"pass --data with the saved eval split or the eval size used at training time"
        )


def cmd_eval(args: argparse.Namespace, run_config: RunConfig) -> Result:
    model, vocab, task, eval_set = _checkpoint_and_eval_set(args, run_config)
    perm = parse_perm(args.perm, task.target_len)
    report = eval_success(model, eval_set, perm, vocab)
    return {
        "command": "eval",
        "order": perm,
        "total": report.total,
        "passed": report.pass_count,
        "success_rate": report.success_rate,
    }


def cmd_sparsity(args: argparse.Namespace, run_config: RunConfig) -> Result:
    model, vocab, task, eval_set = _checkpoint_and_eval_set(args, run_config)
    perm = parse_perm(args.perm, task.target_len)
    capture = capture_attention(model, eval_set, perm, vocab, rows=args.rows)
    stats = attention_sparsity(capture)
    artifacts = export_attention_csv(capture, str(_out(run_config, "attention")))
    artifacts.append(write_sparsity_csv([(str(perm), stats)], str(_out(run_config, "sparsity.csv"))))
    return {
        "command": "sparsity",
        "order": perm,
        "rows": args.rows,
        "aggregate_entropy": stats.aggregate,
        "per_head": {f"layer{li}_head{hi}": v for (li, hi), v in sorted(stats.per_head.items())},
        "artifacts": [str(p) for p in artifacts],
    }


def cmd_grid(args: argparse.Namespace, run_config: RunConfig) -> Result:
    model, vocab, task = load_checkpoint(args.checkpoint)
    if task is None:
        raise ConfigurationError("checkpoint carries no task; digit grid needs a prod checkpoint")
    perm = parse_perm(args.perm, task.target_len)
    grid = prod_digit_grid(model, task, vocab, args.samples, max_digits=args.digits, perm=perm,
                           seed=run_config.seed, zero_operands=args.zero_operands)
    artifacts = emit_report(ReportArtifacts(digit_grid=grid), run_config.out_dir)
    return {
        "command": "grid",
        "digits": grid.shape[0],
        "samples_per_cell": args.samples,
        "mean_success": float(grid.mean()),
        "artifacts": [str(p) for p in artifacts],
    }


def cmd_report(args: argparse.Namespace, run_config: RunConfig) -> Result:
    run_dir = args.run_dir
    artifacts = collect_run_dir(run_dir)
    manifest_path = Path(run_dir) / "manifest.json"
    manifest = None
    if manifest_path.exists():
        manifest = read_manifest(str(manifest_path))
    written = emit_report(artifacts, args.out or run_dir, manifest)
    return {
        "command": "report",
        "run_dir": run_dir,
        "artifacts": [str(p) for p in written],
    }


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], Result]] = {
    "gen-data": cmd_gen_data,
    "make-perms": cmd_make_perms,
    "train": cmd_train,
    "profile": cmd_profile,
    "search": cmd_search,
    "es": cmd_es,
    "eval": cmd_eval,
    "sparsity": cmd_sparsity,
    "grid": cmd_grid,
    "report": cmd_report,
}


# ============================================================================
# Parser
# ============================================================================

def _add_task_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--task', choices=[k.value for k in TaskKind], default=None,
                        help='Task kind (default: from --config)')
    parser.add_argument('--len', type=int, default=None, help='Target length L')
    parser.add_argument('--window', type=int, default=None, help='Index task window d')
    parser.add_argument('--digits', type=int, default=None, help='Prod operand digits n')


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--train-size', type=int, default=None, help='Training examples')
    parser.add_argument('--val-size', type=int, default=None, help='Validation examples')
    parser.add_argument('--eval-size', type=int, default=None, help='Evaluation examples')
    parser.add_argument('--epochs', type=int, default=None, help='Training epochs')
    parser.add_argument('--lr', type=float, default=None, help='Initial learning rate')
    parser.add_argument('--batch-size', type=int, default=None, help='Mini-batch size')


def create_argument_parser() -> argparse.ArgumentParser:
    """
    Create and configure argument parser for CLI.

    Returns:
        Configured ArgumentParser instance
    """
    parser = argparse.ArgumentParser(
        prog='orderscout',
        description='Discover learning-friendly target orders for decoder transformers',
        epilog='Example: orderscout --out-dir runs/relu13 search --task relu --len 13 --depth 3'
    )
    parser.add_argument('--seed', type=int, default=None, help='Global seed (default: 0)')
    parser.add_argument('--out-dir', type=str, default=None,
                        help='Output directory (default: current directory)')
    parser.add_argument('--config', type=str, default=None, help='YAML run config file')
    parser.add_argument('--format', choices=['json', 'text'], default='text',
                        help='Output format (default: text)')
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    parser.add_argument('--quiet', '-q', action='store_true', help='Log warnings and errors only')
    parser.add_argument('--log-file', type=str, default=None,
                        help='Also append log records to this file')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    sub = parser.add_subparsers(dest='command', required=True, metavar='command')

    p = sub.add_parser('gen-data', help='Generate one dataset split')
    _add_task_args(p)
    p.add_argument('--size', type=int, default=None, help='Number of examples')
    p.add_argument('--split', choices=[s.value for s in Split], default='train')
    p.add_argument('--data-seed', type=int, default=None,
                   help='Split seed (default: 42 train, 7 validation, 123 eval)')
    p.add_argument('--out', type=str, default=None, help='Output JSONL path')

    p = sub.add_parser('make-perms', help='Build a candidate permutation set')
    p.add_argument('--kind', choices=['f', 'r', 'g', 'b'], required=True)
    p.add_argument('--len', type=int, required=True, help='Target length L')
    p.add_argument('--count', type=int, required=True, help='Set size T')
    p.add_argument('--block-len', type=int, default=5, help='Block length b for kind b')
    p.add_argument('--out', type=str, default=None, help='Output JSON path')

    p = sub.add_parser('train', help='Train a model on one target order')
    _add_task_args(p)
    _add_data_args(p)
    p.add_argument('--perm', type=str, default='identity',
                   help='identity, reverse, a comma list or a permutation file')
    p.add_argument('--soft-perm', choices=[m.value for m in SoftPermMode], default=None,
                   help='Learn a soft permutation jointly or alternately instead')

    p = sub.add_parser('profile', help='Rank candidate orders by early validation loss')
    _add_task_args(p)
    _add_data_args(p)
    p.add_argument('--perms', type=str, default='g',
                   help='Permutation file or set kind f/r/g/b (default: g)')
    p.add_argument('--count', type=int, default=None, help='Set size T for generated sets')
    p.add_argument('--block-len', type=int, default=5)
    p.add_argument('--profile-epochs', type=int, default=1, help='Mixed-training epochs E')
    p.add_argument('--retrain-ranks', type=int, default=0,
                   help='Retrain the top N ranks from scratch and record success')

    p = sub.add_parser('search', help='Hierarchical permutation search')
    _add_task_args(p)
    _add_data_args(p)
    p.add_argument('--depth', type=int, default=None, help='Global depth K (budget (K+1)!)')
    p.add_argument('--init', type=str, default='r',
                   help='Initial set: kind r/b/g/f or a permutation file (default: r)')
    p.add_argument('--count', type=int, default=None, help='Initial set size (default: (K+1)!)')
    p.add_argument('--block-len', type=int, default=5)
    p.add_argument('--profile-epochs', type=int, default=1)
    p.add_argument('--global-only', action='store_true', help='Skip the local stage')
    p.add_argument('--evaluate', action='store_true',
                   help='Retrain on the final order and report its success rate')

    p = sub.add_parser('es', help='Evolutionary-strategy baseline')
    _add_task_args(p)
    _add_data_args(p)
    p.add_argument('--pop', type=int, default=None, help='Population size')
    p.add_argument('--gens', type=int, default=None, help='Generations')
    p.add_argument('--fitness-epochs', type=int, default=None)

    for name, help_text in (('eval', 'Exact-match success of a checkpoint'),
                            ('sparsity', 'Attention entropy of a checkpoint')):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--checkpoint', type=str, required=True)
        _add_task_args(p)
        p.add_argument('--perm', type=str, default='identity')
        p.add_argument('--data', type=str, default=None, help='Saved eval dataset (JSONL)')
        p.add_argument('--eval-size', type=int, default=None)
        if name == 'sparsity':
            p.add_argument('--rows', type=int, default=64, help='Examples to capture')

    p = sub.add_parser('grid', help='Prod success by operand digit counts')
    p.add_argument('--checkpoint', type=str, required=True)
    p.add_argument('--digits', type=int, default=None, help='Largest digit count')
    p.add_argument('--samples', type=int, default=100, help='Samples per cell')
    p.add_argument('--perm', type=str, default='identity')
    p.add_argument('--zero-operands', action='store_true')

    p = sub.add_parser('report', help='Collect a run directory into plots and a manifest')
    p.add_argument('--run-dir', type=str, required=True)
    p.add_argument('--out', type=str, default=None, help='Report directory (default: run dir)')

    return parser


# ============================================================================
# Entry Point
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    """
    Main CLI entry point.

    Returns:
        Exit code (0 success, 1 library error, 2 usage error, 130 interrupted)

    Example:
        >>> sys.argv = ['orderscout', 'make-perms', '--kind', 'g', '--len', '5', '--count', '8']
        >>> exit_code = main()
    """
    parser = create_argument_parser()
    args = parser.parse_args(argv)

    setup_logging(verbose=args.verbose, quiet=args.quiet, log_file=args.log_file)
    logger.info(f"OrderScout v{__version__}: {args.command}")

    try:
        run_config = load_run_config(args.config) if args.config else RunConfig()
        run_config = apply_overrides(args, run_config)
        logger.debug(f"Run config: {run_config}")

        result = COMMANDS[args.command](args, run_config)

        if OutputFormat(args.format) == OutputFormat.JSON:
            output = format_json(result)
        else:
            output = format_text(result)
        print(output)
        return 0

    except OrderScoutError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(format_error(e), file=sys.stderr)
        return 1

    except KeyboardInterrupt:
        logger.info("Cancelled by user")
        print("\nCancelled by user", file=sys.stderr)
        return 130  # Standard exit code for SIGINT

    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(format_error(e), file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
