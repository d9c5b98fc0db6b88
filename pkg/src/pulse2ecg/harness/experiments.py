"""Experiment orchestration: dataset generation, training runs, translation,
evaluation, ablations, and the degraded-input study.

Every run writes a `run.json` manifest recording the command, seed, config
hash, and the hashes of input/output artifacts, so results can be
reproduced from checkpoints alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .. import pairsio
from ..errors import DataError, MetricError, UsageError
from ..metrics import MetricsReport, alignment_diagnostics, fid, frechet_distance_mean, mae, rmse
from ..probe import ProbeNet, embed, train_probe
from ..qrs import detect_qrs, heart_rate
from ..rng import CH_CORRUPT, segment_rng, torch_generator
from ..stage1 import Stage1Config, load_stage1, save_stage1, train_stage1
from ..stage2 import FlowConfig, SamplerConfig, load_stage2, save_stage2, train_stage2, translate
from ..synthgen import SynthParams, corrupt, make_dataset
from ..types import ECG, PPG, SegmentPair, Waveform
from .config import config_hash, file_hash
from .plots import write_hr_scatter, write_loss_curve, write_overlays

TRANSLATE_CHUNK = 64


def write_run_manifest(out_dir, command: str, cfg, seed: int, inputs: dict, outputs: dict) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "seed": seed,
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "config": dataclasses.asdict(cfg) if dataclasses.is_dataclass(cfg) else cfg,
        "inputs": {k: {"path": str(p), "hash": file_hash(p)} for k, p in inputs.items()},
        "outputs": {k: {"path": str(p), "hash": file_hash(p)} for k, p in outputs.items()},
    }
    with open(out_dir / "run.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def synth_dataset(out_dir, params: SynthParams, af_fraction: float = 0.0) -> list[SegmentPair]:
    """Generate a PAIRS1 dataset; af_fraction of segments use the AF rhythm."""
    if not 0.0 <= af_fraction <= 1.0:
        raise UsageError("af-fraction must be in [0, 1]")
    n_af = int(round(params.n_segments * af_fraction))
    n_rest = params.n_segments - n_af
    normal = make_dataset(replace(params, af_mode=False, n_segments=n_rest)) if n_rest else []
    af = make_dataset(replace(params, af_mode=True, n_segments=n_af, seed=params.seed + 1)) if n_af else []
    # interleave so any contiguous split keeps roughly the same class balance
    pairs: list[SegmentPair] = []
    ia = ib = 0
    for k in range(params.n_segments):
        take_af = af and (not normal or (k % 2 == 1 and ib < len(af)) or ia >= len(normal))
        if take_af and ib < len(af):
            pairs.append(af[ib])
            ib += 1
        else:
            pairs.append(normal[ia])
            ia += 1
    pairsio.write_pairs(out_dir, pairs, extra_meta={"params": dataclasses.asdict(params), "af_fraction": af_fraction})
    return pairs


def preprocess_raw(npz_path, out_dir) -> int:
    """Raw .npz recording {ppg, ecg, ppg_fs, ecg_fs[, subject_id]} -> PAIRS1."""
    from ..signals import preprocess_pair

    path = Path(npz_path)
    if not path.is_file():
        raise DataError(f"raw input not found: {path}")
    data = np.load(path, allow_pickle=False)
    for key in ("ppg", "ecg", "ppg_fs", "ecg_fs"):
        if key not in data:
            raise DataError(f"raw input {path} is missing array {key!r}")
    subject = str(data["subject_id"]) if "subject_id" in data else path.stem
    ppg = Waveform(np.asarray(data["ppg"], dtype=np.float64), float(data["ppg_fs"]), PPG, subject)
    ecg = Waveform(np.asarray(data["ecg"], dtype=np.float64), float(data["ecg_fs"]), ECG, subject)
    pairs = preprocess_pair(ppg, ecg)
    pairsio.write_pairs(out_dir, pairs, extra_meta={"source": str(path)})
    return len(pairs)


def run_train_stage1(dataset_dir, cfg: Stage1Config, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = pairsio.read_pairs(dataset_dir)
    model, history = train_stage1(pairs, cfg)
    ckpt = out_dir / "stage1.pfe1"
    save_stage1(ckpt, model, seed=cfg.seed, iteration=cfg.iters)
    write_loss_curve(history, out_dir / "stage1_loss.csv")
    write_run_manifest(
        out_dir, "train-stage1", cfg, cfg.seed,
        inputs={"dataset_manifest": Path(dataset_dir) / "manifest.json"},
        outputs={"stage1": ckpt},
    )
    return ckpt


def run_train_stage2(dataset_dir, stage1_ckpt, cfg: FlowConfig, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = pairsio.read_pairs(dataset_dir)
    stage1 = load_stage1(stage1_ckpt)
    cfg = replace(cfg, latent_len=stage1.cfg.latent_len, latent_channels=stage1.cfg.latent_channels)
    flow, ema, history = train_stage2(pairs, stage1, cfg)
    ckpt = out_dir / "stage2.pfe1"
    save_stage2(ckpt, flow, ema, seed=cfg.seed, iteration=cfg.iters)
    write_loss_curve(history, out_dir / "stage2_loss.csv")
    write_run_manifest(
        out_dir, "train-stage2", cfg, cfg.seed,
        inputs={"dataset_manifest": Path(dataset_dir) / "manifest.json", "stage1": Path(stage1_ckpt)},
        outputs={"stage2": ckpt},
    )
    return ckpt


def _load_models(stage1_ckpt, stage2_ckpt):
    stage1 = load_stage1(stage1_ckpt)
    flow, ema = load_stage2(stage2_ckpt)
    return stage1, ema.ema_model(flow)


def translate_pairs(
    pairs: list[SegmentPair],
    stage1,
    flow_ema,
    T: int,
    seed: int,
    corrupt_kind: str | None = None,
    severity: float = 0.0,
) -> list[SegmentPair]:
    """Translate each pair's PPG into a synthetic ECG (optionally corrupting the PPG first)."""
    sources = []
    for i, pair in enumerate(pairs):
        w = pair.ppg
        if corrupt_kind is not None:
            w = corrupt(w, corrupt_kind, severity, segment_rng(seed, i, CH_CORRUPT))
        sources.append(w)
    gen = torch_generator(seed)
    out: list[SegmentPair] = []
    sampler = SamplerConfig(T)
    for lo in range(0, len(sources), TRANSLATE_CHUNK):
        chunk = sources[lo : lo + TRANSLATE_CHUNK]
        x = np.stack([w.samples for w in chunk])
        y = translate(x, stage1, flow_ema, sampler, gen)
        y = y.astype(np.float32).astype(np.float64)
        for w, row, pair in zip(chunk, y, pairs[lo : lo + TRANSLATE_CHUNK]):
            ecg = Waveform(row, w.fs, ECG, w.subject_id)
            out.append(SegmentPair(ppg=w.with_samples(w.samples.copy()), ecg=ecg, label=pair.label))
    return out


def run_translate(dataset_dir, stage1_ckpt, stage2_ckpt, T: int, seed: int, out_dir,
                  corrupt_kind: str | None = None, severity: float = 0.0) -> list[SegmentPair]:
    stage1, flow_ema = _load_models(stage1_ckpt, stage2_ckpt)
    pairs = pairsio.read_pairs(dataset_dir)
    translated = translate_pairs(pairs, stage1, flow_ema, T, seed, corrupt_kind, severity)
    pairsio.write_pairs(
        out_dir,
        translated,
        extra_meta={"translated": True, "T": T, "seed": seed,
                    "corrupt": corrupt_kind, "severity": severity,
                    "note": "ecg channel holds model output (not z-scored)"},
    )
    write_run_manifest(
        out_dir, "translate", {"T": T, "corrupt": corrupt_kind, "severity": severity}, seed,
        inputs={"dataset_manifest": Path(dataset_dir) / "manifest.json",
                "stage1": Path(stage1_ckpt), "stage2": Path(stage2_ckpt)},
        outputs={"manifest": Path(out_dir) / "manifest.json"},
    )
    return translated


def _labels_of(pairs: list[SegmentPair]) -> np.ndarray:
    return np.array([1 if "af" in p.label else 0 for p in pairs], dtype=np.int64)


def build_embedder(real_pairs: list[SegmentPair], seed: int) -> tuple[ProbeNet, str]:
    """Feature extractor for the embedding-set metric: the AF probe when both
    classes exist in the reference set, otherwise a seeded untrained probe."""
    labels = _labels_of(real_pairs)
    ecg = np.stack([p.ecg.samples for p in real_pairs])
    if len(np.unique(labels)) == 2:
        net = train_probe(ecg, labels, seed=seed)
        return net, f"probe-trained-seed{seed}"
    torch.manual_seed(seed)
    net = ProbeNet()
    net.eval()
    return net, f"probe-init-seed{seed}"


def evaluate_pairs(
    real_pairs: list[SegmentPair],
    gen_pairs: list[SegmentPair],
    T: int,
    seed: int,
    embedder: ProbeNet | None = None,
    extractor_id: str = "",
) -> tuple[MetricsReport, dict]:
    """Waveform, distribution, and heart-rate metrics for translated ECGs."""
    if len(real_pairs) != len(gen_pairs) or not real_pairs:
        raise DataError("evaluation needs non-empty, equally sized real and generated sets")
    real = np.stack([p.ecg.samples for p in real_pairs])
    gen = np.stack([p.ecg.samples for p in gen_pairs])
    if embedder is None:
        embedder, extractor_id = build_embedder(real_pairs, seed)
    hr_pairs = []
    hr_err = []
    skipped = 0
    fs = real_pairs[0].fs
    for xr, xg in zip(real, gen):
        try:
            hr_r = heart_rate(detect_qrs(xr, fs), fs)
            hr_g = heart_rate(detect_qrs(xg, fs), fs)
        except MetricError:
            skipped += 1
            continue
        hr_pairs.append((hr_r, hr_g))
        hr_err.append(abs(hr_r - hr_g))
    if not hr_err:
        raise MetricError("no pair had a defined heart rate on both sides")
    report = MetricsReport(
        mae=mae(real, gen),
        rmse=rmse(real, gen),
        fd=frechet_distance_mean(real, gen, fs),
        fid=fid(embed(embedder, real), embed(embedder, gen)),
        mae_hr=float(np.mean(hr_err)),
        n_segments=len(real_pairs),
        T=T,
        seed=seed,
        skipped_hr_pairs=skipped,
        extractor_id=extractor_id,
    )
    return report, {"hr_pairs": hr_pairs, "real": real, "gen": gen}


def run_eval(real_dir, gen_dir, seed: int, out_dir, T: int | None = None, plots: bool = True) -> MetricsReport:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    real_pairs = pairsio.read_pairs(real_dir)
    gen_pairs = pairsio.read_pairs(gen_dir)
    gen_meta = pairsio.read_manifest(gen_dir).get("meta", {})
    if T is None:
        T = int(gen_meta.get("T", 0))
    report, extras = evaluate_pairs(real_pairs, gen_pairs, T, seed)
    (out_dir / "metrics.json").write_text(report.to_json(), encoding="utf-8")
    if plots:
        write_hr_scatter(extras["hr_pairs"], out_dir / "hr_scatter.csv")
        write_overlays(extras["real"], extras["gen"], out_dir / "overlays.csv")
    write_run_manifest(
        out_dir, "eval", {"T": T}, seed,
        inputs={"real_manifest": Path(real_dir) / "manifest.json",
                "gen_manifest": Path(gen_dir) / "manifest.json"},
        outputs={"metrics": out_dir / "metrics.json"},
    )
    return report


def run_ablate_steps(dataset_dir, stage1_ckpt, stage2_ckpt, T_list, seed: int, out_dir) -> dict[int, MetricsReport]:
    """Sampling-step sweep: one MetricsReport per T, shared embedder."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage1, flow_ema = _load_models(stage1_ckpt, stage2_ckpt)
    real_pairs = pairsio.read_pairs(dataset_dir)
    embedder, extractor_id = build_embedder(real_pairs, seed)
    reports: dict[int, MetricsReport] = {}
    for T in T_list:
        gen_pairs = translate_pairs(real_pairs, stage1, flow_ema, T, seed)
        report, _ = evaluate_pairs(real_pairs, gen_pairs, T, seed, embedder, extractor_id)
        reports[T] = report
        (out_dir / f"metrics_T{T}.json").write_text(report.to_json(), encoding="utf-8")
    summary = {str(T): json.loads(r.to_json()) for T, r in reports.items()}
    (out_dir / "ablation.json").write_text(json.dumps(summary, indent=1, sort_keys=True), encoding="utf-8")
    write_run_manifest(
        out_dir, "ablate-steps", {"T_list": list(T_list)}, seed,
        inputs={"dataset_manifest": Path(dataset_dir) / "manifest.json",
                "stage1": Path(stage1_ckpt), "stage2": Path(stage2_ckpt)},
        outputs={"ablation": out_dir / "ablation.json"},
    )
    return reports


def run_robustness(dataset_dir, stage1_ckpt, stage2_ckpt, kind: str, severity: float,
                   T: int, seed: int, out_dir) -> dict:
    """Degraded-input study: clean vs corrupted PPG through the same model."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage1, flow_ema = _load_models(stage1_ckpt, stage2_ckpt)
    real_pairs = pairsio.read_pairs(dataset_dir)
    embedder, extractor_id = build_embedder(real_pairs, seed)
    results = {}
    for name, ck, sev in (("clean", None, 0.0), ("corrupted", kind, severity)):
        gen_pairs = translate_pairs(real_pairs, stage1, flow_ema, T, seed, ck, sev)
        report, _ = evaluate_pairs(real_pairs, gen_pairs, T, seed, embedder, extractor_id)
        results[name] = report
        (out_dir / f"metrics_{name}.json").write_text(report.to_json(), encoding="utf-8")
    summary = {
        "kind": kind,
        "severity": severity,
        "clean": json.loads(results["clean"].to_json()),
        "corrupted": json.loads(results["corrupted"].to_json()),
    }
    (out_dir / "robustness.json").write_text(json.dumps(summary, indent=1, sort_keys=True), encoding="utf-8")
    write_run_manifest(
        out_dir, "robustness", {"kind": kind, "severity": severity, "T": T}, seed,
        inputs={"dataset_manifest": Path(dataset_dir) / "manifest.json",
                "stage1": Path(stage1_ckpt), "stage2": Path(stage2_ckpt)},
        outputs={"robustness": out_dir / "robustness.json"},
    )
    return summary


def run_diagnose_latent(dataset_dir, stage1_ckpt, out_dir, seed: int = 0) -> dict:
    """Numeric latent-alignment diagnostics over a dataset."""
    from ..stage1 import pooled_posterior_means

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage1 = load_stage1(stage1_ckpt)
    pairs = pairsio.read_pairs(dataset_dir)
    if not pairs:
        raise DataError("dataset is empty")
    ppg = np.stack([p.ppg.samples for p in pairs])
    ecg = np.stack([p.ecg.samples for p in pairs])
    diag = alignment_diagnostics(pooled_posterior_means(stage1, ppg), pooled_posterior_means(stage1, ecg))
    (out_dir / "latent_diagnostics.json").write_text(json.dumps(diag, indent=1, sort_keys=True), encoding="utf-8")
    write_run_manifest(
        out_dir, "diagnose-latent", None, seed,
        inputs={"dataset_manifest": Path(dataset_dir) / "manifest.json", "stage1": Path(stage1_ckpt)},
        outputs={"diagnostics": out_dir / "latent_diagnostics.json"},
    )
    return diag
