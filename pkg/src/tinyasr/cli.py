"""Command line entry points.

    tinyasr synth     generate the synthetic child/parent corpora
    tinyasr simplify  strip diacritics from a manifest's transcripts
    tinyasr train     train a single stage
    tinyasr plan      run a staged preset or a plan config
    tinyasr eval      score a checkpoint against a manifest
    tinyasr decode    print greedy transcriptions
    tinyasr inspect   summarize a checkpoint

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .alphabet import AlphabetError, build_alphabet
from .ctc import CtcError, greedy_decode
from .data import (
    DataError,
    Sample,
    SynthConfig,
    Utterance,
    make_batches,
    read_manifest,
    simplify_manifest,
    synth_corpus,
)
from .rng import stream
from .frontend import AudioError, extract_features, load_wav
from .metrics import evaluate
from .model import ModelError, build_model, forward, micro_config
from .optim import OptimError
from .transfer import (
    PRESET_NAMES,
    CheckpointError,
    StagePlan,
    StageSpec,
    TransferError,
    build_preset,
    load_checkpoint,
    parse_plan,
    run_plan,
    run_stage,
    transfer_init,
    write_plan,
)

_ERRORS = (AlphabetError, AudioError, CtcError, DataError, ModelError, OptimError,
           CheckpointError, TransferError, OSError, ValueError)


def _corpus_seed(seed: int, corpus: str) -> int:
    return int(stream(seed, "corpus", corpus).integers(0, 2**63))


def _cmd_synth(args) -> int:
    out = Path(args.out)
    child_cfg = SynthConfig(accented_variants=args.accents)
    parent_cfg = SynthConfig(accented_variants=0, tone_offset_hz=60.0)
    for split, n in (("train", args.n_train), ("dev", args.n_dev)):
        synth_corpus(child_cfg, n, _corpus_seed(args.seed, "child"), out / "child", split)
        synth_corpus(parent_cfg, n, _corpus_seed(args.seed, "parent"), out / "parent", split)
    sim = out / "child_simplified"
    sim.mkdir(parents=True, exist_ok=True)
    for split in ("train", "dev"):
        simplify_manifest(out / "child" / f"{split}.jsonl", sim / f"{split}.jsonl")
    print(f"wrote child, child_simplified, parent corpora under {out}")
    return 0


def _cmd_simplify(args) -> int:
    simplify_manifest(args.manifest, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_train(args) -> int:
    alphabet = build_alphabet(args.alphabet)
    if args.ckpt:
        bundle = load_checkpoint(args.ckpt)
        model = transfer_init(bundle.model, alphabet, args.policy, args.seed)
    else:
        model = build_model(micro_config(alphabet.n_logits), seed=args.seed)
    spec = StageSpec(
        name=args.stage_name,
        train_manifest=args.manifest,
        dev_manifest=args.dev_manifest or args.manifest,
        alphabet=args.alphabet,
        steps=args.steps,
        lr=args.lr,
        warmup=args.warmup,
        freeze_steps=args.freeze_steps,
        policy="scratch" if not args.ckpt else args.policy,
        batch_size=args.batch_size,
        eval_every=args.eval_every,
        cutout=not args.no_cutout,
    )
    _, res = run_stage(model, spec, args.out, args.seed, wall_clock=args.timing)
    print(f"stage {res.name}: wer={res.final_wer:.4f} cer={res.final_cer:.4f}")
    print(f"checkpoint: {res.checkpoint}")
    print(f"log: {res.log_path}")
    return 0


def _cmd_plan(args) -> int:
    if bool(args.preset) == bool(args.config):
        raise TransferError("give exactly one of --preset or --config")
    if args.preset:
        if not args.data:
            raise TransferError("--preset needs --data")
        kwargs = {}
        if args.steps is not None:
            kwargs["steps"] = args.steps
        if args.freeze_steps is not None:
            kwargs["freeze_steps"] = args.freeze_steps
        plan = build_preset(args.preset.replace("-", "_"), args.data, args.seed, **kwargs)
    else:
        plan = parse_plan(args.config)
        if args.seed is not None:
            plan = StagePlan(name=plan.name, seed=args.seed, stages=plan.stages,
                             model_preset=plan.model_preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_plan(out / "plan.ini", plan)
    report = run_plan(plan, out, wall_clock=args.timing)
    for st in report["stages"]:
        print(f"stage {st['name']}: wer={st['final_wer']:.4f} cer={st['final_cer']:.4f}")
    print(f"final: wer={report['final_wer']:.4f} cer={report['final_cer']:.4f}")
    print(f"report: {out / 'report.json'}")
    return 0


def _cmd_eval(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    utts = read_manifest(args.manifest)
    res = evaluate(bundle.model, utts, bundle.alphabet, bundle.fe_cfg,
                   batch_size=args.batch_size)
    print(f"wer={res.wer:.4f} cer={res.cer:.4f}")
    return 0


def _cmd_decode(args) -> int:
    if bool(args.manifest) == bool(args.wav):
        raise DataError("give exactly one of --manifest or --wav")
    bundle = load_checkpoint(args.ckpt)
    model, alphabet, fe_cfg = bundle.model, bundle.alphabet, bundle.fe_cfg
    if args.wav:
        paths = [args.wav]
    else:
        paths = [u.audio_filepath for u in read_manifest(args.manifest)]
    samples = []
    for i, p in enumerate(paths):
        wav = load_wav(p, expected_sample_rate=fe_cfg.sample_rate)
        feats = extract_features(wav, fe_cfg)
        utt = Utterance(audio_filepath=p, duration=len(wav.samples) / wav.sample_rate, text="")
        samples.append(Sample(index=i, utt=utt, feats=feats, labels=np.zeros(0, np.int64)))
    lines = []
    for batch in make_batches(samples, args.batch_size, seed=0, epoch=0, train=False):
        logits, out_lens = forward(model, batch.feats, batch.feat_lens)
        for b, idx in enumerate(batch.indices):
            hyp = greedy_decode(logits[b], int(out_lens[b]), alphabet)
            lines.append(f"{samples[idx].utt.audio_filepath}\t{hyp}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_inspect(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    model = bundle.model
    n_params = sum(t.size for t in model.tensors.values())
    info = {
        "stage": bundle.stage,
        "step": model.step,
        "alphabet_size": bundle.alphabet.size,
        "blank_id": bundle.alphabet.blank_id,
        "n_labels": model.cfg.n_labels,
        "n_tensors": len(model.tensors),
        "n_parameters": int(n_params),
        "has_optimizer_state": bundle.optim is not None,
        "kernel_backend": _kernels.backend_name(),
    }
    print(json.dumps(info, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tinyasr",
                                 description="Desk-scale CTC speech recognition.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-dev", type=int, default=50)
    p.add_argument("--accents", type=int, default=4,
                   help="how many base symbols get an accented variant")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("simplify", help="strip diacritics from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_simplify)

    p = sub.add_parser("train", help="train a single stage")
    p.add_argument("--manifest", required=True, help="training manifest (JSONL)")
    p.add_argument("--dev-manifest", help="defaults to the training manifest")
    p.add_argument("--alphabet", default="czech")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--warmup", type=int, default=40)
    p.add_argument("--freeze-steps", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--no-cutout", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt", help="initialize from this checkpoint")
    p.add_argument("--policy", default="encoder_only", choices=["all", "encoder_only"],
                   help="how to inherit from --ckpt")
    p.add_argument("--stage-name", default="train")
    p.add_argument("--timing", action="store_true",
                   help="record real wall seconds in the CSV log")
    p.set_defaults(fn=_cmd_train)

    preset_choices = list(PRESET_NAMES) + [n.replace("_", "-") for n in PRESET_NAMES]
    p = sub.add_parser("plan", help="run a staged training plan")
    p.add_argument("--preset", choices=sorted(preset_choices),
                   help="one of the staged recipes")
    p.add_argument("--config", help="plan config (INI) instead of --preset")
    p.add_argument("--data", help="corpus directory for --preset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, help="override preset stage length")
    p.add_argument("--freeze-steps", type=int, help="override preset freeze length")
    p.add_argument("--timing", action="store_true",
                   help="record real wall seconds in the CSV logs (breaks "
                        "byte-reproducibility across runs)")
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("eval", help="score a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("decode", help="print greedy transcriptions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", help="decode every file in this manifest")
    p.add_argument("--wav", help="decode a single wav file")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--out", help="write TSV here instead of stdout")
    p.set_defaults(fn=_cmd_decode)

    p = sub.add_parser("inspect", help="summarize a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(fn=_cmd_inspect)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
