"""Desk-profile calibration: trains the full pipeline once on synthetic data
and prints the measurements used to pin regression bounds (reconstruction
MSE, translated-ECG HR error, probe AUROC, FID-vs-steps trend, alignment
ablation, corruption study). Writes calibration.json next to the run dir.
"""

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from pulse2ecg.harness.experiments import synth_dataset, translate_pairs, evaluate_pairs, build_embedder
from pulse2ecg.metrics import alignment_diagnostics
from pulse2ecg.probe import evaluate_probe, train_probe
from pulse2ecg.rng import torch_generator
from pulse2ecg.stage1 import (
    Stage1Config, Stage1Model, dataset_tensors, encode_latents, loss_stage1,
    pooled_posterior_means, train_stage1,
)
from pulse2ecg.stage2 import FlowConfig, train_stage2, translate
from pulse2ecg.synthgen import SynthParams

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/desk_cal")
OUT.mkdir(parents=True, exist_ok=True)
report = {}

t_all = time.time()
t0 = time.time()
params = SynthParams(n_segments=2200, seed=123, noise_std=0.03, hrv_std_s=0.03)
pairs = synth_dataset(OUT / "ds", params, af_fraction=0.5)
train_pairs, held_pairs = pairs[:2000], pairs[2000:]
report["dataset_s"] = round(time.time() - t0, 1)
print(f"[cal] dataset: {len(pairs)} pairs in {report['dataset_s']}s", flush=True)

ppg_tr, ecg_tr = dataset_tensors(train_pairs)
ppg_he, ecg_he = dataset_tensors(held_pairs)


def recon_mse(model, x):
    with torch.no_grad():
        z = encode_latents(model, x)
        rec = model.decode(z, "ecg" if x is ecg_he else "ppg")
        return float(((rec - x) ** 2).mean())


# stage 1 with periodic held-out evaluation
cfg1 = Stage1Config(batch=24, iters=2500, lr=1e-3, widths=(16, 32, 32, 64, 64), seed=0)
torch.manual_seed(cfg1.seed)
model = Stage1Model(cfg1)
gen = torch_generator(cfg1.seed + 1)
opt = torch.optim.AdamW(model.parameters(), lr=cfg1.lr)
t0 = time.time()
traj = []
for step in range(cfg1.iters):
    idx = torch.randint(0, ppg_tr.shape[0], (cfg1.batch,), generator=gen)
    total, _ = loss_stage1(ppg_tr[idx], ecg_tr[idx], model, cfg1, gen)
    opt.zero_grad()
    total.backward()
    opt.step()
    if (step + 1) % 500 == 0:
        model.eval()
        m_e, m_p = recon_mse(model, ecg_he), recon_mse(model, ppg_he)
        traj.append({"step": step + 1, "ecg_mse": round(m_e, 4), "ppg_mse": round(m_p, 4),
                     "min_per_iter_ms": round((time.time() - t0) / (step + 1) * 1000)})
        print(f"[cal] stage1 step {step+1}: ecg_mse={m_e:.4f} ppg_mse={m_p:.4f}", flush=True)
        model.train()
model.eval()
report["stage1"] = {"iters": cfg1.iters, "time_s": round(time.time() - t0, 1), "traj": traj}

# stage 2
cfg2 = FlowConfig(batch=32, iters=3000, lr=3e-4, seed=0,
                  latent_len=cfg1.latent_len, latent_channels=cfg1.latent_channels)
t0 = time.time()
flow, ema, hist2 = train_stage2(train_pairs, model, cfg2)
flow_ema = ema.ema_model(flow)
report["stage2"] = {"iters": cfg2.iters, "time_s": round(time.time() - t0, 1),
                    "loss_first": round(float(hist2[:50].mean()), 3),
                    "loss_last": round(float(hist2[-50:].mean()), 3)}
print(f"[cal] stage2 trained in {report['stage2']['time_s']}s "
      f"loss {report['stage2']['loss_first']} -> {report['stage2']['loss_last']}", flush=True)

# translated metrics on held-out
t0 = time.time()
embedder, extractor_id = build_embedder(train_pairs, seed=0)
gen_pairs = translate_pairs(held_pairs, model, flow_ema, T=10, seed=0)
rep10, extras = evaluate_pairs(held_pairs, gen_pairs, T=10, seed=0, embedder=embedder, extractor_id=extractor_id)
report["eval_T10"] = json.loads(rep10.to_json())
report["eval_T10_time_s"] = round(time.time() - t0, 1)
print(f"[cal] T=10 metrics: {rep10.to_json()}", flush=True)

# probe AUROC on translated held-out
probe = train_probe(np.stack([p.ecg.samples for p in train_pairs]),
                    [1 if "af" in p.label else 0 for p in train_pairs], seed=0)
gen_ecg = np.stack([p.ecg.samples for p in gen_pairs])
labels_held = [1 if "af" in p.label else 0 for p in held_pairs]
auroc_gen = evaluate_probe(probe, gen_ecg, labels_held)
auroc_real = evaluate_probe(probe, np.stack([p.ecg.samples for p in held_pairs]), labels_held)
report["probe"] = {"auroc_real": round(auroc_real, 4), "auroc_translated": round(auroc_gen, 4)}
print(f"[cal] probe AUROC real={auroc_real:.3f} translated={auroc_gen:.3f}", flush=True)

# FID across step counts
fid_trend = {}
for T in (5, 10, 25):
    gp = translate_pairs(held_pairs, model, flow_ema, T=T, seed=0)
    r, _ = evaluate_pairs(held_pairs, gp, T=T, seed=0, embedder=embedder, extractor_id=extractor_id)
    fid_trend[T] = {"fid": round(r.fid, 4), "mae_hr": round(r.mae_hr, 3), "mae": round(r.mae, 4)}
    print(f"[cal] T={T}: fid={r.fid:.4f} mae_hr={r.mae_hr:.3f}", flush=True)
report["fid_trend"] = fid_trend

# corruption study
gen_corr = translate_pairs(held_pairs, model, flow_ema, T=10, seed=0, corrupt_kind="burst", severity=1.0)
rep_corr, _ = evaluate_pairs(held_pairs, gen_corr, T=10, seed=0, embedder=embedder, extractor_id=extractor_id)
report["burst"] = {"mae_hr_clean": report["eval_T10"]["mae_hr"], "mae_hr_corrupted": round(rep_corr.mae_hr, 3)}
print(f"[cal] burst: clean mae_hr={report['burst']['mae_hr_clean']} corrupted={report['burst']['mae_hr_corrupted']}", flush=True)

# alignment ablation (short runs, with and without the align term)
t0 = time.time()
abl = {}
sub = train_pairs[:512]
for name, w in (("with_align", 1.0), ("without_align", 0.0)):
    c = Stage1Config(batch=24, iters=800, lr=1e-3, widths=(16, 32, 32, 64, 64), seed=5, w_align=w)
    m_abl, _ = train_stage1(sub, c)
    diag = alignment_diagnostics(pooled_posterior_means(m_abl, ppg_he.numpy()),
                                 pooled_posterior_means(m_abl, ecg_he.numpy()))
    abl[name] = {k: round(v, 5) for k, v in diag.items()}
    print(f"[cal] ablation {name}: {abl[name]}", flush=True)
report["alignment_ablation"] = abl
report["ablation_time_s"] = round(time.time() - t0, 1)

report["total_s"] = round(time.time() - t_all, 1)
(OUT / "calibration.json").write_text(json.dumps(report, indent=1))
print(json.dumps(report, indent=1), flush=True)
