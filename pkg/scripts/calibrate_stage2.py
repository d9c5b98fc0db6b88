"""Stage-2 calibration v2: smaller/faster flow, longer training, with the
translated-HR trajectory recorded at checkpoints to pick the desk iteration
count."""

import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

from pulse2ecg.harness.experiments import build_embedder, evaluate_pairs, synth_dataset, translate_pairs
from pulse2ecg.metrics import mae_hr
from pulse2ecg.probe import evaluate_probe, train_probe
from pulse2ecg.rng import torch_generator
from pulse2ecg.stage1 import Stage1Config, dataset_tensors, encode_latents, train_stage1
from pulse2ecg.stage2 import EmaState, FlowConfig, FlowField, euler_sample, loss_stage2
from pulse2ecg.synthgen import SynthParams

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "/tmp/desk_cal2")
OUT.mkdir(parents=True, exist_ok=True)
report = {}

params = SynthParams(n_segments=2200, seed=123, noise_std=0.03, hrv_std_s=0.03)
pairs = synth_dataset(OUT / "ds", params, af_fraction=0.5)
train_pairs, held_pairs = pairs[:2000], pairs[2000:]
ppg_he, ecg_he = dataset_tensors(held_pairs)
real_held = np.stack([p.ecg.samples for p in held_pairs])

t0 = time.time()
cfg1 = Stage1Config(batch=24, iters=2000, lr=1e-3, widths=(16, 32, 32, 64, 64), seed=0)
stage1, hist1 = train_stage1(train_pairs, cfg1)
report["stage1_time_s"] = round(time.time() - t0, 1)

with torch.no_grad():
    rec = stage1.decode(encode_latents(stage1, ecg_he), "ecg")
report["recon_mse"] = round(float(((rec - ecg_he) ** 2).mean()), 4)
rec_hr, rec_skip = mae_hr(real_held, rec.numpy())
report["recon_mae_hr"] = round(rec_hr, 3)
print(f"[cal2] stage1 {report['stage1_time_s']}s recon_mse={report['recon_mse']} "
      f"recon_mae_hr={report['recon_mae_hr']} (skipped {rec_skip})", flush=True)

cfg2 = FlowConfig(d_model=64, d_ff=128, n_heads=4, n_blocks=4, batch=16, k_times=2,
                  lr=1e-3, iters=9000, seed=0,
                  latent_len=cfg1.latent_len, latent_channels=cfg1.latent_channels)
c_all = encode_latents(stage1, dataset_tensors(train_pairs)[0])
y_all = encode_latents(stage1, dataset_tensors(train_pairs)[1])
y_he = encode_latents(stage1, ecg_he)

torch.manual_seed(cfg2.seed)
flow = FlowField(cfg2)
ema = EmaState(flow, cfg2.ema_decay)
gen = torch_generator(cfg2.seed + 1)
opt = torch.optim.Adam(flow.parameters(), lr=cfg2.lr)
t0 = time.time()
traj = []
for step in range(cfg2.iters):
    idx = torch.randint(0, c_all.shape[0], (cfg2.batch,), generator=gen)
    loss = loss_stage2(y_all[idx], c_all[idx], flow, cfg2.k_times, gen)
    opt.zero_grad()
    loss.backward()
    torch.nn.utils.clip_grad_norm_(flow.parameters(), cfg2.clip_norm)
    opt.step()
    if (step + 1) % cfg2.ema_every == 0:
        ema.update(flow)
    if (step + 1) % 1500 == 0:
        fe = ema.ema_model(flow)
        gp = translate_pairs(held_pairs, stage1, fe, T=10, seed=0)
        v, skip = mae_hr(real_held, np.stack([p.ecg.samples for p in gp]))
        c_he = encode_latents(stage1, ppg_he)
        xT = euler_sample(c_he, fe, 10, torch_generator(33))
        lat = float(((xT - y_he) ** 2).mean())
        traj.append({"step": step + 1, "mae_hr": round(v, 3), "skipped": skip,
                     "latent_mse": round(lat, 4), "loss": round(float(loss.detach()), 2),
                     "ms_per_iter": round((time.time() - t0) / (step + 1) * 1000)})
        print(f"[cal2] stage2 step {step+1}: mae_hr={v:.3f} latent_mse={lat:.4f} "
              f"loss={float(loss.detach()):.1f} ({traj[-1]['ms_per_iter']} ms/iter)", flush=True)
        flow.train()
report["stage2_time_s"] = round(time.time() - t0, 1)
report["stage2_traj"] = traj

flow.eval()
flow_ema = ema.ema_model(flow)
embedder, extractor_id = build_embedder(train_pairs, seed=0)
fid_trend = {}
for T in (5, 10, 25):
    gp = translate_pairs(held_pairs, stage1, flow_ema, T=T, seed=0)
    r, _ = evaluate_pairs(held_pairs, gp, T=T, seed=0, embedder=embedder, extractor_id=extractor_id)
    fid_trend[T] = {"fid": round(r.fid, 3), "mae_hr": round(r.mae_hr, 3),
                    "mae": round(r.mae, 4), "rmse": round(r.rmse, 4), "fd": round(r.fd, 3),
                    "skipped": r.skipped_hr_pairs}
    print(f"[cal2] T={T}: {fid_trend[T]}", flush=True)
report["fid_trend"] = fid_trend

probe = train_probe(np.stack([p.ecg.samples for p in train_pairs]),
                    [1 if "af" in p.label else 0 for p in train_pairs], seed=0)
gp10 = translate_pairs(held_pairs, stage1, flow_ema, T=10, seed=0)
labels_held = [1 if "af" in p.label else 0 for p in held_pairs]
report["probe_auroc_translated"] = round(
    evaluate_probe(probe, np.stack([p.ecg.samples for p in gp10]), labels_held), 4
)
print(f"[cal2] probe auroc translated={report['probe_auroc_translated']}", flush=True)

gen_corr = translate_pairs(held_pairs, stage1, flow_ema, T=10, seed=0, corrupt_kind="burst", severity=1.0)
v_corr, _ = mae_hr(real_held, np.stack([p.ecg.samples for p in gen_corr]))
report["burst_mae_hr"] = round(v_corr, 3)
print(f"[cal2] burst corrupted mae_hr={v_corr:.3f}", flush=True)

(OUT / "calibration2.json").write_text(json.dumps(report, indent=1))
print(json.dumps(report, indent=1), flush=True)
