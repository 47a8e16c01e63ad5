"""Checkpoints, staged training plans, and transfer initialization.

A plan is an ordered list of stages. The first stage starts from scratch;
each later stage inherits the previous model either wholesale (``all``, same
label inventory) or encoder-only (``encoder_only``, fresh decoder for a new
alphabet). A stage can freeze the encoder for its first k updates so the new
decoder settles before the shared trunk moves.

Checkpoints are a small binary container: magic, version, a canonical JSON
header (model/frontend config, alphabet, step, stage, tensor table), then the
tensor payload as little-endian float32 in sorted name order. Saving a loaded
checkpoint reproduces it byte for byte.
"""

from __future__ import annotations

import configparser
import json
import math
import struct
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .alphabet import Alphabet, build_alphabet
from .augment import CutoutConfig
from .ctc import ctc_loss, greedy_decode, required_frames
from .data import DataError, load_samples, make_batches, read_manifest
from .frontend import FrontendConfig
from .metrics import corpus_rates
from .model import (
    CONFIG_PRESETS,
    BlockConfig,
    Model,
    ModelConfig,
    _build_units,
    backward,
    build_model,
    fingerprint,
    forward,
    output_length,
    set_trainable,
    swap_decoder,
)
from .optim import OptimConfig, OptimState, novograd_step
from .rng import stream

MAGIC = b"TASR"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class TransferError(RuntimeError):
    pass


def _header_json(model: Model, alphabet: Alphabet, fe_cfg: FrontendConfig,
                 stage: str | None, optim: OptimState | None) -> bytes:
    names = sorted(model.tensors)
    header = {
        "alphabet": list(alphabet.symbols),
        "frontend": asdict(fe_cfg),
        "model": asdict(model.cfg),
        "stage": stage,
        "step": model.step,
        "tensors": [[n, list(model.tensors[n].shape)] for n in names],
        "optim": None,
    }
    if optim is not None:
        onames = sorted(optim.m)
        header["optim"] = {
            "cfg": asdict(optim.cfg),
            "step": optim.step,
            "tensors": [[n, list(optim.m[n].shape)] for n in onames],
            "v": [optim.v[n] for n in onames],
        }
    return json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def save_checkpoint(path, model: Model, alphabet: Alphabet,
                    fe_cfg: FrontendConfig | None = None, stage: str | None = None,
                    optim: OptimState | None = None) -> None:
    if model.dtype != np.float32:
        raise CheckpointError("only float32 models are checkpointed")
    if model.cfg.n_labels != alphabet.n_logits:
        raise CheckpointError(
            f"model emits {model.cfg.n_labels} labels but alphabet needs {alphabet.n_logits}"
        )
    fe_cfg = fe_cfg or FrontendConfig()
    header = _header_json(model, alphabet, fe_cfg, stage, optim)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for name in sorted(model.tensors):
            f.write(np.ascontiguousarray(model.tensors[name], dtype="<f4").tobytes())
        if optim is not None:
            for name in sorted(optim.m):
                f.write(np.ascontiguousarray(optim.m[name], dtype="<f8").tobytes())


@dataclass
class CheckpointBundle:
    model: Model
    alphabet: Alphabet
    fe_cfg: FrontendConfig
    stage: str | None
    optim: OptimState | None


def _model_cfg_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["blocks"] = tuple(BlockConfig(**b) for b in d["blocks"])
    return ModelConfig(**d)


def load_checkpoint(path) -> CheckpointBundle:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}") from None
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    if 16 + hlen > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from None

    cfg = _model_cfg_from_dict(header["model"])
    expected = {name: tuple(shape) for u in _build_units(cfg) for name, shape, _ in u.param_specs()}
    listed = {name: tuple(shape) for name, shape in header["tensors"]}
    if set(listed) != set(expected):
        odd = sorted(set(listed) ^ set(expected))
        raise CheckpointError(f"{path}: tensor table does not match architecture: {odd}")
    for name, shape in listed.items():
        if shape != expected[name]:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {shape}, architecture wants {expected[name]}"
            )

    off = 16 + hlen
    tensors: dict[str, np.ndarray] = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = 4 * count
        if off + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated payload at tensor {name!r}")
        tensors[name] = np.frombuffer(blob, "<f4", count=count, offset=off).reshape(shape).copy()
        off += nbytes

    optim = None
    if header.get("optim"):
        oh = header["optim"]
        ocfg_d = dict(oh["cfg"])
        optim = OptimState(cfg=OptimConfig(**ocfg_d), step=int(oh["step"]))
        for (name, shape), v in zip(oh["tensors"], oh["v"]):
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = 8 * count
            if off + nbytes > len(blob):
                raise CheckpointError(f"{path}: truncated optimizer payload at {name!r}")
            optim.m[name] = np.frombuffer(blob, "<f8", count=count, offset=off).reshape(shape).copy()
            optim.v[name] = float(v)
            off += nbytes
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")

    alphabet = Alphabet(symbols=tuple(header["alphabet"]))
    fe_cfg = FrontendConfig(**header["frontend"])
    model = Model(
        cfg=cfg,
        tensors=tensors,
        trainable={n: True for n in tensors},
        mode="eval",
        step=int(header["step"]),
        dtype=np.float32,
        _units=_build_units(cfg),
    )
    return CheckpointBundle(model=model, alphabet=alphabet, fe_cfg=fe_cfg,
                            stage=header.get("stage"), optim=optim)


def transfer_init(source, alphabet: Alphabet, policy: str, seed: int) -> Model:
    """Model for the next stage: either the source verbatim or its encoder
    with a freshly initialized decoder sized for the new alphabet. ``source``
    is a Model or a loaded CheckpointBundle."""
    if isinstance(source, CheckpointBundle):
        source = source.model
    if policy == "all":
        if source.cfg.n_labels != alphabet.n_logits:
            raise TransferError(
                f"policy 'all' needs matching label counts: model c4 emits "
                f"{source.cfg.n_labels}, alphabet needs {alphabet.n_logits}"
            )
        out = Model(
            cfg=source.cfg,
            tensors={n: t.copy() for n, t in source.tensors.items()},
            trainable={n: True for n in source.tensors},
            mode=source.mode,
            step=source.step,
            dtype=source.dtype,
            _units=_build_units(source.cfg),
        )
        return out
    if policy == "encoder_only":
        return swap_decoder(source, alphabet, seed)
    raise TransferError(f"unknown transfer policy {policy!r}")


# --- stage plans -----------------------------------------------------------


@dataclass(frozen=True)
class StageSpec:
    name: str
    train_manifest: str
    dev_manifest: str
    alphabet: str
    steps: int
    lr: float
    warmup: int = 40
    freeze_steps: int = 0
    policy: str = "scratch"  # scratch | all | encoder_only
    batch_size: int = 8
    eval_every: int = 100
    cutout: bool = True

    def __post_init__(self):
        if self.policy not in ("scratch", "all", "encoder_only"):
            raise TransferError(f"stage {self.name!r}: unknown policy {self.policy!r}")
        if self.steps < 0:
            raise TransferError(f"stage {self.name!r}: steps must be non-negative")
        if not 0 <= self.freeze_steps <= self.steps:
            raise TransferError(f"stage {self.name!r}: freeze_steps outside [0, steps]")
        if self.policy == "scratch" and self.freeze_steps:
            raise TransferError(f"stage {self.name!r}: nothing to freeze when starting fresh")


@dataclass(frozen=True)
class StagePlan:
    name: str
    seed: int
    stages: tuple[StageSpec, ...]
    model_preset: str = "micro"

    def __post_init__(self):
        if not self.stages:
            raise TransferError("plan has no stages")
        if self.stages[0].policy != "scratch":
            raise TransferError("first stage must have policy 'scratch'")
        if any(s.policy == "scratch" for s in self.stages[1:]):
            raise TransferError("only the first stage may start from scratch")
        if self.model_preset not in CONFIG_PRESETS:
            raise TransferError(f"unknown model preset {self.model_preset!r}")
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise TransferError("stage names must be unique")


_STAGE_BOOLS = {"cutout"}
_STAGE_INTS = {"steps", "warmup", "freeze_steps", "batch_size", "eval_every"}
_STAGE_FLOATS = {"lr"}


def parse_plan(path) -> StagePlan:
    cp = configparser.ConfigParser(interpolation=None)
    if not cp.read(path, encoding="utf-8"):
        raise TransferError(f"cannot read plan config {path}")
    if "plan" not in cp:
        raise TransferError(f"{path}: missing [plan] section")
    p = cp["plan"]
    try:
        stage_names = [s.strip() for s in p["stages"].split(",") if s.strip()]
        stages = []
        for sn in stage_names:
            sec = f"stage:{sn}"
            if sec not in cp:
                raise TransferError(f"{path}: missing [{sec}] section")
            kwargs: dict = {"name": sn}
            for key, raw in cp[sec].items():
                if key in _STAGE_BOOLS:
                    kwargs[key] = cp[sec].getboolean(key)
                elif key in _STAGE_INTS:
                    kwargs[key] = cp[sec].getint(key)
                elif key in _STAGE_FLOATS:
                    kwargs[key] = cp[sec].getfloat(key)
                elif key in ("train_manifest", "dev_manifest", "alphabet", "policy"):
                    kwargs[key] = raw
                else:
                    raise TransferError(f"{path}: [{sec}] has unknown key {key!r}")
            stages.append(StageSpec(**kwargs))
        return StagePlan(
            name=p["name"],
            seed=p.getint("seed"),
            stages=tuple(stages),
            model_preset=p.get("model", "micro"),
        )
    except (KeyError, ValueError) as e:
        raise TransferError(f"{path}: bad plan config: {e}") from None


def write_plan(path, plan: StagePlan) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp["plan"] = {
        "name": plan.name,
        "seed": str(plan.seed),
        "model": plan.model_preset,
        "stages": ", ".join(s.name for s in plan.stages),
    }
    for s in plan.stages:
        cp[f"stage:{s.name}"] = {
            "train_manifest": s.train_manifest,
            "dev_manifest": s.dev_manifest,
            "alphabet": s.alphabet,
            "steps": str(s.steps),
            "lr": repr(s.lr),
            "warmup": str(s.warmup),
            "freeze_steps": str(s.freeze_steps),
            "policy": s.policy,
            "batch_size": str(s.batch_size),
            "eval_every": str(s.eval_every),
            "cutout": str(s.cutout).lower(),
        }
    with open(path, "w", encoding="utf-8") as f:
        cp.write(f)


# --- training loop ---------------------------------------------------------


def _eval_model(model: Model, samples, alphabet: Alphabet, batch_size: int) -> tuple[float, float]:
    prev = model.mode
    model.set_mode("eval")
    refs, hyps = [], []
    for batch in make_batches(samples, batch_size, seed=0, epoch=0, train=False):
        logits, out_lens = forward(model, batch.feats, batch.feat_lens)
        for b, t in enumerate(batch.targets):
            refs.append(alphabet.decode(t))
            hyps.append(greedy_decode(logits[b], int(out_lens[b]), alphabet))
    model.set_mode(prev)
    res = corpus_rates(list(zip(refs, hyps)))
    return res.wer, res.cer


def _check_feasible(samples, cfg: ModelConfig) -> None:
    for s in samples:
        t_out = output_length(s.feats.valid_len, cfg)
        need = required_frames(s.labels)
        if t_out < need:
            raise DataError(
                f"{s.utt.audio_filepath}: {t_out} output frames cannot emit "
                f"{len(s.labels)} labels (needs {need})"
            )


@dataclass
class StageResult:
    name: str
    history: list[dict]
    checkpoint: str
    log_path: str
    encoder_frozen_identical: bool | None
    final_wer: float
    final_cer: float
    initial_wer: float
    min_wer: float
    elapsed_s: float


def _log_row(rows: list[dict], step: int, loss: float, lr: float, wer: float,
             cer: float, wall_s: float) -> None:
    rows.append({"step": step, "loss": loss, "lr": lr, "wer": wer, "cer": cer,
                 "wall_s": wall_s})


def _write_log(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,loss,lr,wer,cer,wall_s\n")
        for r in rows:
            f.write(
                f"{r['step']},{r['loss']:.6f},{r['lr']:.8f},"
                f"{r['wer']:.6f},{r['cer']:.6f},{r['wall_s']:.3f}\n"
            )


def run_stage(model: Model, spec: StageSpec, out_dir, seed: int,
              fe_cfg: FrontendConfig | None = None, on_step=None,
              wall_clock: bool = False) -> tuple[Model, StageResult]:
    """Train ``model`` through one stage; writes a CSV log and a checkpoint.

    Dev error rates are logged at step 0, every ``eval_every`` updates, at the
    unfreeze boundary, and at the final step. The logged loss is the mean
    training loss since the previous row.

    The wall_s column stays 0.000 unless ``wall_clock`` is set: same-seed runs
    must reproduce the log byte for byte, and elapsed time is the one quantity
    that cannot. Real timing always lands in the stage result and the plan
    report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fe_cfg = fe_cfg or FrontendConfig()
    alphabet = build_alphabet(spec.alphabet)
    if model.cfg.n_labels != alphabet.n_logits:
        raise TransferError(
            f"stage {spec.name!r}: model emits {model.cfg.n_labels} labels, "
            f"alphabet {spec.alphabet!r} needs {alphabet.n_logits}"
        )
    train_samples = load_samples(read_manifest(spec.train_manifest), alphabet, fe_cfg)
    dev_samples = load_samples(read_manifest(spec.dev_manifest), alphabet, fe_cfg)
    _check_feasible(train_samples, model.cfg)

    optim = OptimState(OptimConfig(lr=spec.lr, warmup_steps=spec.warmup))
    cut_cfg = CutoutConfig() if spec.cutout else None

    frozen = spec.freeze_steps > 0
    fp_start = fp_end = None
    if frozen:
        set_trainable(model, "encoder", False)
        fp_start = fingerprint(model, "encoder")

    rows: list[dict] = []
    t0 = time.perf_counter()

    def _elapsed() -> float:
        return time.perf_counter() - t0 if wall_clock else 0.0

    if spec.steps > 0:
        wer, cer = _eval_model(model, dev_samples, alphabet, spec.batch_size)
        _log_row(rows, 0, math.nan, 0.0, wer, cer, _elapsed())

    ckpt_path = out_dir / f"{spec.name}.ckpt"
    window: list[float] = []
    epoch = 0
    batches = make_batches(train_samples, spec.batch_size, seed, epoch, True, cut_cfg)
    model.set_mode("train")
    for step in range(1, spec.steps + 1):
        batch = next(batches, None)
        if batch is None:
            epoch += 1
            batches = make_batches(train_samples, spec.batch_size, seed, epoch, True, cut_cfg)
            batch = next(batches)
        logits, out_lens, cache = forward(model, batch.feats, batch.feat_lens, return_cache=True)
        try:
            loss, dlogits = ctc_loss(logits, out_lens, batch.targets)
            if not math.isfinite(loss):
                raise TransferError(f"stage {spec.name!r}: loss diverged at step {step}")
            grads = backward(model, cache, dlogits)
            lr = novograd_step(model, grads, optim)
        except Exception:
            save_checkpoint(out_dir / f"{spec.name}.aborted.ckpt", model, alphabet,
                            fe_cfg, stage=spec.name, optim=optim)
            raise
        model.step += 1
        window.append(loss)
        if on_step is not None:
            on_step(step, loss, model)

        boundary = frozen and step == spec.freeze_steps
        if boundary:
            fp_end = fingerprint(model, "encoder")
            set_trainable(model, "encoder", True)
            frozen = False
        if step % spec.eval_every == 0 or step == spec.steps or boundary:
            wer, cer = _eval_model(model, dev_samples, alphabet, spec.batch_size)
            model.set_mode("train")
            _log_row(rows, step, float(np.mean(window)), lr, wer, cer, _elapsed())
            window = []

    model.set_mode("eval")
    save_checkpoint(ckpt_path, model, alphabet, fe_cfg, stage=spec.name, optim=optim)
    log_path = out_dir / f"{spec.name}.csv"
    _write_log(log_path, rows)
    result = StageResult(
        name=spec.name,
        history=rows,
        checkpoint=str(ckpt_path),
        log_path=str(log_path),
        encoder_frozen_identical=(fp_start == fp_end) if fp_start is not None else None,
        final_wer=rows[-1]["wer"] if rows else math.nan,
        final_cer=rows[-1]["cer"] if rows else math.nan,
        initial_wer=rows[0]["wer"] if rows else math.nan,
        min_wer=min(r["wer"] for r in rows) if rows else math.nan,
        elapsed_s=time.perf_counter() - t0,
    )
    return model, result


def run_plan(plan: StagePlan, out_dir, fe_cfg: FrontendConfig | None = None,
             on_step=None, wall_clock: bool = False) -> dict:
    """Run every stage in order, wiring each stage's model into the next.

    Writes per-stage logs and checkpoints plus a ``report.json`` summarizing
    error rates at the stage boundaries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fe_cfg = fe_cfg or FrontendConfig()
    model: Model | None = None
    prev_alphabet: Alphabet | None = None
    results: list[StageResult] = []
    report: dict = {"plan": plan.name, "seed": plan.seed, "stages": []}
    for spec in plan.stages:
        alphabet = build_alphabet(spec.alphabet)
        if model is None:
            cfg = CONFIG_PRESETS[plan.model_preset](alphabet.n_logits)
            model = build_model(cfg, seed=plan.seed)
        else:
            if spec.policy == "all" and prev_alphabet.symbols != alphabet.symbols:
                raise TransferError(
                    f"stage {spec.name!r}: policy 'all' needs the same symbols as the "
                    f"previous stage"
                )
            swap_seed = int(stream(plan.seed, "stage", spec.name).integers(0, 2**63))
            model = transfer_init(model, alphabet, spec.policy, swap_seed)
        model, res = run_stage(model, spec, out_dir, plan.seed, fe_cfg,
                               on_step=on_step, wall_clock=wall_clock)
        results.append(res)
        prev_alphabet = alphabet
        report["stages"].append(
            {
                "name": spec.name,
                "alphabet": spec.alphabet,
                "policy": spec.policy,
                "steps": spec.steps,
                "freeze_steps": spec.freeze_steps,
                "checkpoint": res.checkpoint,
                "log": res.log_path,
                "initial_wer": res.initial_wer,
                "final_wer": res.final_wer,
                "final_cer": res.final_cer,
                "min_wer": res.min_wer,
                "encoder_frozen_identical": res.encoder_frozen_identical,
                "elapsed_s": round(res.elapsed_s, 3),
            }
        )
    report["final_wer"] = results[-1].final_wer
    report["final_cer"] = results[-1].final_cer
    with open(out_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, ensure_ascii=False)
        f.write("\n")
    return report


# --- presets ----------------------------------------------------------------

PRESET_NAMES = ("baseline_cs", "simcs_cs", "en_cs", "en_simcs_cs")


def build_preset(preset: str, data_dir, seed: int, steps: int = 1500,
                 freeze_steps: int = 60, warmup: int = 40, batch_size: int = 8,
                 eval_every: int = 100, lr_scratch: float = 0.01,
                 lr_fine: float = 0.001) -> StagePlan:
    """Standard staged recipes over a corpus directory laid out as
    ``child/``, ``child_simplified/``, ``parent/`` (train.jsonl + dev.jsonl
    each). Every preset ends with the same full-alphabet budget so their
    outcomes are comparable."""
    data_dir = Path(data_dir)

    def man(sub: str) -> tuple[str, str]:
        return str(data_dir / sub / "train.jsonl"), str(data_dir / sub / "dev.jsonl")

    common = {"batch_size": batch_size, "eval_every": eval_every, "warmup": warmup}
    child_tr, child_dev = man("child")
    sim_tr, sim_dev = man("child_simplified")
    par_tr, par_dev = man("parent")

    def full(policy: str, freeze: int, lr: float) -> StageSpec:
        return StageSpec(name="full", train_manifest=child_tr, dev_manifest=child_dev,
                         alphabet="czech", steps=steps, lr=lr, freeze_steps=freeze,
                         policy=policy, **common)

    if preset == "baseline_cs":
        stages = (full("scratch", 0, lr_scratch),)
    elif preset == "simcs_cs":
        stages = (
            StageSpec(name="simplified", train_manifest=sim_tr, dev_manifest=sim_dev,
                      alphabet="czech_simplified", steps=steps, lr=lr_scratch,
                      policy="scratch", **common),
            full("encoder_only", freeze_steps, lr_fine),
        )
    elif preset == "en_cs":
        stages = (
            StageSpec(name="parent", train_manifest=par_tr, dev_manifest=par_dev,
                      alphabet="english", steps=steps, lr=lr_scratch,
                      policy="scratch", **common),
            full("encoder_only", freeze_steps, lr_fine),
        )
    elif preset == "en_simcs_cs":
        stages = (
            StageSpec(name="parent", train_manifest=par_tr, dev_manifest=par_dev,
                      alphabet="english", steps=steps, lr=lr_scratch,
                      policy="scratch", **common),
            StageSpec(name="simplified", train_manifest=sim_tr, dev_manifest=sim_dev,
                      alphabet="czech_simplified", steps=steps, lr=lr_scratch,
                      policy="all", **common),
            full("encoder_only", freeze_steps, lr_fine),
        )
    else:
        raise TransferError(f"unknown preset {preset!r}; choose from {PRESET_NAMES}")
    return StagePlan(name=preset, seed=seed, stages=stages)
