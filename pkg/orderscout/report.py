"""
Report emission: CSV tables, SVG plots and the run manifest.

Every CSV writer has a matching reader that parses the file back into the
value that was written.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .models import (  # noqa: E402
    AttentionStats,
    EsResult,
    LossProfile,
    LossProfileEntry,
    Permutation,
    RankPoint,
    ReportError,
    RunManifest,
    SearchTrace,
    TrainReport,
)

logger = logging.getLogger(__name__)

LOSS_PROFILE_CSV = "loss_profile.csv"
RANK_CURVE_CSV = "rank_curve.csv"
LENGTH_SWEEP_CSV = "length_sweep.csv"
DIGIT_GRID_CSV = "digit_grid.csv"
SPARSITY_CSV = "sparsity.csv"
SUCCESS_CSV = "success.csv"
MANIFEST_JSON = "manifest.json"


# ============================================================================
# CSV Tables
# ============================================================================

def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}")


def _perm_field(perm: Permutation) -> str:
    return " ".join(str(v) for v in perm.map)


def _parse_perm(text: str) -> Permutation:
    return Permutation(tuple(int(v) for v in text.split()))


def write_loss_profile_csv(profile: LossProfile, path: str) -> Path:
    out = Path(path)
    with _open_for_write(out) as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "perm_id", "loss", "permutation"])
        for rank, entry in enumerate(profile.entries, start=1):
            writer.writerow([rank, entry.perm_id, repr(entry.loss), _perm_field(entry.permutation)])
    return out


def read_loss_profile_csv(path: str, epochs: int = 1) -> LossProfile:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    entries = [
        LossProfileEntry(int(r["perm_id"]), _parse_perm(r["permutation"]), float(r["loss"]))
        for r in rows
    ]
    return LossProfile(entries=entries, epochs=epochs)


def write_rank_curve_csv(points: Sequence[RankPoint], path: str) -> Path:
    out = Path(path)
    with _open_for_write(out) as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "perm_id", "loss", "success"])
        for p in points:
            writer.writerow([p.rank, p.perm_id, repr(p.loss), repr(p.success)])
    return out


def read_rank_curve_csv(path: str) -> List[RankPoint]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [
            RankPoint(int(r["rank"]), int(r["perm_id"]), float(r["loss"]), float(r["success"]))
            for r in csv.DictReader(handle)
        ]


def write_length_sweep_csv(curves: Dict[str, List[Tuple[int, float]]], path: str) -> Path:
    out = Path(path)
    with _open_for_write(out) as handle:
        writer = csv.writer(handle)
        writer.writerow(["order", "length", "success"])
        for name, points in curves.items():
            for length, success in points:
                writer.writerow([name, length, repr(success)])
    return out


def read_length_sweep_csv(path: str) -> Dict[str, List[Tuple[int, float]]]:
    curves: Dict[str, List[Tuple[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for r in csv.DictReader(handle):
            curves.setdefault(r["order"], []).append((int(r["length"]), float(r["success"])))
    return curves


def write_digit_grid_csv(grid: np.ndarray, path: str) -> Path:
    """Rows are digits of the first operand, columns of the second."""
    out = Path(path)
    with _open_for_write(out) as handle:
        writer = csv.writer(handle)
        writer.writerow(["digits"] + [str(j + 1) for j in range(grid.shape[1])])
        for i, row in enumerate(grid):
            writer.writerow([i + 1] + [repr(float(v)) for v in row])
    return out


def read_digit_grid_csv(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))[1:]
    return np.array([[float(v) for v in row[1:]] for row in rows])


def write_sparsity_csv(stats: Sequence[Tuple[str, AttentionStats]], path: str) -> Path:
    """One row per (label, layer, head) plus an `all` row per label."""
    out = Path(path)
    with _open_for_write(out) as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "layer", "head", "entropy"])
        for label, s in stats:
            for (layer, head), value in sorted(s.per_head.items()):
                writer.writerow([label, layer, head, repr(value)])
            writer.writerow([label, "all", "all", repr(s.aggregate)])
    return out


def read_sparsity_csv(path: str) -> List[Tuple[str, AttentionStats]]:
    grouped: Dict[str, AttentionStats] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for r in csv.DictReader(handle):
            stats = grouped.setdefault(r["label"], AttentionStats(per_head={}, aggregate=0.0))
            if r["layer"] == "all":
                stats.aggregate = float(r["entropy"])
            else:
                stats.per_head[(int(r["layer"]), int(r["head"]))] = float(r["entropy"])
    return list(grouped.items())


def write_success_csv(rates: Dict[str, float], path: str) -> Path:
    out = Path(path)
    with _open_for_write(out) as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "success"])
        for label, rate in rates.items():
            writer.writerow([label, repr(rate)])
    return out


def read_success_csv(path: str) -> Dict[str, float]:
    with open(path, newline="", encoding="utf-8") as handle:
        return {r["label"]: float(r["success"]) for r in csv.DictReader(handle)}


def write_train_log(report: TrainReport, out_dir: str) -> Tuple[Path, Path]:
    """train_log.csv (step, lr, loss) and train_summary.json."""
    out = Path(out_dir)
    log_path = out / "train_log.csv"
    with _open_for_write(log_path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "lr", "loss"])
        for step, (lr, loss) in enumerate(zip(report.learning_rates, report.step_losses)):
            writer.writerow([step, repr(lr), repr(loss)])

    summary_path = out / "train_summary.json"
    summary = {
        "steps": report.steps,
        "final_loss": report.final_loss,
        "epoch_val_losses": report.epoch_val_losses,
        "wall_clock_seconds": report.wall_clock_seconds,
        "checkpoint_path": report.checkpoint_path,
        "stage2_entropy": report.stage2_entropy,
        "warnings": report.warnings,
    }
    if report.perm_loss_trace is not None:
        summary["perm_loss_trace"] = {str(k): v for k, v in report.perm_loss_trace.items()}
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return log_path, summary_path


def read_train_log(path: str) -> Tuple[List[float], List[float]]:
    """(learning_rates, step_losses) from a train_log.csv."""
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    return [float(r["lr"]) for r in rows], [float(r["loss"]) for r in rows]


def write_es_history_csv(result: EsResult, path: str) -> Path:
    out = Path(path)
    with _open_for_write(out) as handle:
        writer = csv.writer(handle)
        writer.writerow(["generation", "best_fitness", "mean_fitness"])
        means = result.mean_history or [float("nan")] * len(result.history)
        for generation, (best, mean) in enumerate(zip(result.history, means)):
            writer.writerow([generation, repr(best), repr(mean)])
    return out


def trace_to_dict(trace: SearchTrace) -> Dict:
    return {
        "global_winner": trace.global_winner.to_list() if trace.global_winner else None,
        "final": trace.final.to_list() if trace.final else None,
        "warnings": trace.warnings,
        "entries": [
            {
                "stage": e.stage,
                "round": e.round,
                "candidate_count": e.candidate_count,
                "unique_count": e.unique_count,
                "base": e.base.to_list(),
                "step": e.step.to_list(),
                "winner": e.winner.to_list(),
                "loss": e.loss,
            }
            for e in trace.entries
        ],
    }


def write_trace_json(trace: SearchTrace, path: str) -> Path:
    out = Path(path)
    with _open_for_write(out) as handle:
        json.dump(trace_to_dict(trace), handle, indent=2)
    return out


# ============================================================================
# Plots
# ============================================================================

def _save(fig, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", bbox_inches="tight")
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}")
    finally:
        plt.close(fig)
    return path


def plot_loss_profile(profile: LossProfile, path: str, highlight: Optional[int] = 0) -> Path:
    """Validation loss against permutation id, one point per candidate."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ids = [e.perm_id for e in profile.entries]
    losses = [e.loss for e in profile.entries]
    ax.scatter(ids, losses, s=12, color="tab:blue")
    if highlight is not None and highlight in ids:
        ax.scatter([highlight], [losses[ids.index(highlight)]], s=40, color="tab:red",
                   label=f"id {highlight}")
        ax.legend()
    ax.set_xlabel("permutation id")
    ax.set_ylabel("validation loss")
    return _save(fig, Path(path))


def plot_rank_curve(points: Sequence[RankPoint], path: str) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([p.rank for p in points], [p.success for p in points], marker="o")
    ax.set_xlabel("loss rank")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    return _save(fig, Path(path))


def plot_length_sweep(curves: Dict[str, List[Tuple[int, float]]], path: str) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, points in curves.items():
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=name)
    ax.set_xlabel("target length")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    return _save(fig, Path(path))


def plot_digit_grid(grid: np.ndarray, path: str) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    image = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis", origin="lower")
    ticks = range(grid.shape[0])
    ax.set_xticks(list(ticks), [str(t + 1) for t in ticks])
    ax.set_yticks(list(ticks), [str(t + 1) for t in ticks])
    ax.set_xlabel("digits of b")
    ax.set_ylabel("digits of a")
    fig.colorbar(image, ax=ax, label="success rate")
    return _save(fig, Path(path))


def plot_attention(matrix: np.ndarray, path: str, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    image = ax.imshow(matrix, cmap="magma", vmin=0.0)
    ax.set_xlabel("key position")
    ax.set_ylabel("query position")
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax)
    return _save(fig, Path(path))


def plot_soft_permutation(matrix: np.ndarray, path: str) -> Path:
    return plot_attention(matrix, path, title="learned soft permutation")


# ============================================================================
# Manifest and Report
# ============================================================================

@dataclass
class ReportArtifacts:
    """Results collected from one run; any subset may be present."""
    loss_profile: Optional[LossProfile] = None
    rank_curve: Optional[List[RankPoint]] = None
    length_sweep: Optional[Dict[str, List[Tuple[int, float]]]] = None
    digit_grid: Optional[np.ndarray] = None
    sparsity: List[Tuple[str, AttentionStats]] = field(default_factory=list)
    success_rates: Dict[str, float] = field(default_factory=dict)


def build_manifest(
    configs: Optional[Dict] = None,
    seeds: Optional[Dict[str, int]] = None,
    dataset_hashes: Optional[Dict[str, str]] = None,
) -> RunManifest:
    return RunManifest(
        tool_version=__version__,
        configs=configs or {},
        seeds=seeds or {},
        dataset_hashes=dataset_hashes or {},
    )


def write_manifest(manifest: RunManifest, path: str) -> Path:
    out = Path(path)
    with _open_for_write(out) as handle:
        json.dump(asdict(manifest), handle, indent=2, default=str)
    return out


def read_manifest(path: str) -> RunManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(**data)


def emit_report(
    artifacts: ReportArtifacts,
    out_dir: str,
    manifest: Optional[RunManifest] = None,
) -> List[Path]:
    """
    Write every table and plot the artifacts support, then the manifest.

    Returns:
        Paths written, manifest last

    Raises:
        ReportError: If out_dir cannot be written
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"cannot create {out}: {e}")
    manifest = manifest or build_manifest()
    written: List[Path] = []

    if artifacts.loss_profile is not None:
        written.append(write_loss_profile_csv(artifacts.loss_profile, str(out / LOSS_PROFILE_CSV)))
        written.append(plot_loss_profile(artifacts.loss_profile, str(out / "loss_profile.svg")))
    if artifacts.rank_curve:
        written.append(write_rank_curve_csv(artifacts.rank_curve, str(out / RANK_CURVE_CSV)))
        written.append(plot_rank_curve(artifacts.rank_curve, str(out / "rank_curve.svg")))
    if artifacts.length_sweep:
        written.append(write_length_sweep_csv(artifacts.length_sweep, str(out / LENGTH_SWEEP_CSV)))
        written.append(plot_length_sweep(artifacts.length_sweep, str(out / "length_sweep.svg")))
    if artifacts.digit_grid is not None:
        written.append(write_digit_grid_csv(artifacts.digit_grid, str(out / DIGIT_GRID_CSV)))
        written.append(plot_digit_grid(artifacts.digit_grid, str(out / "digit_grid.svg")))
    if artifacts.sparsity:
        written.append(write_sparsity_csv(artifacts.sparsity, str(out / SPARSITY_CSV)))
    if artifacts.success_rates:
        written.append(write_success_csv(artifacts.success_rates, str(out / SUCCESS_CSV)))

    manifest.artifacts = sorted(set(manifest.artifacts) | {str(p) for p in written})
    written.append(write_manifest(manifest, str(out / MANIFEST_JSON)))
    logger.info(f"Report: {len(written)} files in {out}")
    return written


def collect_run_dir(run_dir: str) -> ReportArtifacts:
    """Read back whichever report tables a run directory holds."""
    root = Path(run_dir)
    if not root.is_dir():
        raise ReportError(f"run directory not found: {root}")
    artifacts = ReportArtifacts()
    if (root / LOSS_PROFILE_CSV).exists():
        artifacts.loss_profile = read_loss_profile_csv(str(root / LOSS_PROFILE_CSV))
    if (root / RANK_CURVE_CSV).exists():
        artifacts.rank_curve = read_rank_curve_csv(str(root / RANK_CURVE_CSV))
    if (root / LENGTH_SWEEP_CSV).exists():
        artifacts.length_sweep = read_length_sweep_csv(str(root / LENGTH_SWEEP_CSV))
    if (root / DIGIT_GRID_CSV).exists():
        artifacts.digit_grid = read_digit_grid_csv(str(root / DIGIT_GRID_CSV))
    if (root / SPARSITY_CSV).exists():
        artifacts.sparsity = read_sparsity_csv(str(root / SPARSITY_CSV))
    if (root / SUCCESS_CSV).exists():
        artifacts.success_rates = read_success_csv(str(root / SUCCESS_CSV))
    return artifacts
