"""pulse2ecg: PPG-to-ECG translation with a shared cross-modal encoder and a
conditional latent rectified flow, plus synthetic paired data, preprocessing,
and a metrics/ablation harness."""

__version__ = "0.1.0"
