"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (bad files/signals),
3 numeric or training error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..errors import DataError, NumericError, UsageError
from ..synthgen import SynthParams
from . import experiments
from .config import load_config_file, make_flow_config, make_stage1_config

DEFAULT_OUT_ROOT = os.environ.get("PULSE2ECG_OUT", "runs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _out_dir(args, default_name: str) -> Path:
    return Path(args.out) if args.out else Path(DEFAULT_OUT_ROOT) / default_name


def build_parser() -> _Parser:
    p = _Parser(prog="pulse2ecg", description="PPG-to-ECG translation pipeline")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out_name):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help=f"output directory (default {DEFAULT_OUT_ROOT}/{out_name})")
        sp.add_argument("--config", help="JSON config file; CLI flags override its values")

    sp = sub.add_parser("synth", help="generate a synthetic PAIRS1 dataset")
    common(sp, "synth")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--hr", type=float, default=75.0)
    sp.add_argument("--hrv", type=float, default=0.02)
    sp.add_argument("--noise", type=float, default=0.02)
    sp.add_argument("--ptt", type=float, default=0.25)
    sp.add_argument("--af-fraction", type=float, default=0.0)

    sp = sub.add_parser("preprocess", help="preprocess a raw .npz recording into PAIRS1")
    common(sp, "preprocess")
    sp.add_argument("raw", help="npz file with ppg, ecg, ppg_fs, ecg_fs arrays")

    sp = sub.add_parser("train-stage1", help="train the shared encoder and decoders")
    common(sp, "stage1")
    sp.add_argument("dataset")
    sp.add_argument("--profile", default="desk", choices=["desk", "paper"])
    sp.add_argument("--iters", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)

    sp = sub.add_parser("train-stage2", help="train the latent flow on a frozen stage 1")
    common(sp, "stage2")
    sp.add_argument("dataset")
    sp.add_argument("--stage1", required=True)
    sp.add_argument("--profile", default="desk", choices=["desk", "paper"])
    sp.add_argument("--iters", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)

    sp = sub.add_parser("translate", help="translate dataset PPG into synthetic ECG files")
    common(sp, "translate")
    sp.add_argument("dataset")
    sp.add_argument("--stage1", required=True)
    sp.add_argument("--stage2", required=True)
    sp.add_argument("--steps", type=int, default=10, help="Euler step count T")

    sp = sub.add_parser("eval", help="evaluate translated ECGs against the real dataset")
    common(sp, "eval")
    sp.add_argument("real")
    sp.add_argument("generated")

    sp = sub.add_parser("ablate-steps", help="sweep the sampler step count")
    common(sp, "ablate")
    sp.add_argument("dataset")
    sp.add_argument("--stage1", required=True)
    sp.add_argument("--stage2", required=True)
    sp.add_argument("--T", default="5,10,25", help="comma-separated step counts")

    sp = sub.add_parser("robustness", help="clean vs corrupted-PPG evaluation")
    common(sp, "robustness")
    sp.add_argument("dataset")
    sp.add_argument("--stage1", required=True)
    sp.add_argument("--stage2", required=True)
    sp.add_argument("--kind", default="burst", choices=["wander", "burst", "dropout"])
    sp.add_argument("--severity", type=float, default=1.0)
    sp.add_argument("--steps", type=int, default=10)

    sp = sub.add_parser("diagnose-latent", help="latent-alignment diagnostics")
    common(sp, "diagnose")
    sp.add_argument("dataset")
    sp.add_argument("--stage1", required=True)

    return p


def _dispatch(args) -> int:
    if not getattr(args, "command", None):
        raise UsageError("no command given (try --help)")
    file_cfg = load_config_file(args.config) if getattr(args, "config", None) else {}
    seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))

    if args.command == "synth":
        synth_values = dict(file_cfg.get("synth", {}))
        synth_values.update(
            hr_bpm=args.hr, hrv_std_s=args.hrv, noise_std=args.noise,
            ptt_s=args.ptt, n_segments=args.n, seed=seed,
        )
        params = SynthParams(**synth_values)
        out = _out_dir(args, "synth")
        pairs = experiments.synth_dataset(out, params, af_fraction=args.af_fraction)
        print(f"wrote {len(pairs)} pairs to {out}")
    elif args.command == "preprocess":
        out = _out_dir(args, "preprocess")
        n = experiments.preprocess_raw(args.raw, out)
        print(f"wrote {n} pairs to {out}")
    elif args.command == "train-stage1":
        cfg = make_stage1_config(args.profile, file_cfg.get("stage1"),
                                 iters=args.iters, batch=args.batch, lr=args.lr, seed=seed)
        out = _out_dir(args, "stage1")
        ckpt = experiments.run_train_stage1(args.dataset, cfg, out)
        print(f"stage-1 checkpoint: {ckpt}")
    elif args.command == "train-stage2":
        cfg = make_flow_config(args.profile, file_cfg.get("stage2"),
                               iters=args.iters, batch=args.batch, lr=args.lr, seed=seed)
        out = _out_dir(args, "stage2")
        ckpt = experiments.run_train_stage2(args.dataset, args.stage1, cfg, out)
        print(f"stage-2 checkpoint: {ckpt}")
    elif args.command == "translate":
        out = _out_dir(args, "translate")
        pairs = experiments.run_translate(args.dataset, args.stage1, args.stage2, args.steps, seed, out)
        print(f"translated {len(pairs)} segments into {out}")
    elif args.command == "eval":
        out = _out_dir(args, "eval")
        report = experiments.run_eval(args.real, args.generated, seed, out)
        print(report.to_json())
    elif args.command == "ablate-steps":
        try:
            t_list = [int(x) for x in args.T.split(",") if x.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --T list {args.T!r}: {exc}") from exc
        if not t_list:
            raise UsageError("--T list is empty")
        out = _out_dir(args, "ablate")
        reports = experiments.run_ablate_steps(args.dataset, args.stage1, args.stage2, t_list, seed, out)
        for t in t_list:
            print(f"T={t}: {reports[t].to_json()}")
    elif args.command == "robustness":
        out = _out_dir(args, "robustness")
        summary = experiments.run_robustness(
            args.dataset, args.stage1, args.stage2, args.kind, args.severity, args.steps, seed, out
        )
        print(json.dumps(summary, indent=1, sort_keys=True))
    elif args.command == "diagnose-latent":
        out = _out_dir(args, "diagnose")
        diag = experiments.run_diagnose_latent(args.dataset, args.stage1, out, seed)
        print(json.dumps(diag, indent=1, sort_keys=True))
    else:
        raise UsageError("no command given (try --help)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
