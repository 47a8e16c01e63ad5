"""Shared corpora and trained-run fixtures.

The expensive fixtures are session-scoped: synthetic corpora are generated
once, and the multi-seed preset runs that several tests read from are trained
once and shared.
"""

import pytest

from tinyasr import cli
from tinyasr.data import SynthConfig, simplify_manifest, synth_corpus
from tinyasr.transfer import build_preset, run_plan


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """12 train / 6 dev short utterances for fast pipeline tests."""
    root = tmp_path_factory.mktemp("tiny")
    cfg = SynthConfig(max_symbols=5)
    train = synth_corpus(cfg, 12, 100, root, split="train")
    dev = synth_corpus(cfg, 6, 100, root, split="dev")
    simplify_manifest(train, root / "train_simple.jsonl")
    simplify_manifest(dev, root / "dev_simple.jsonl")
    return {"root": root, "train": train, "dev": dev,
            "train_simple": str(root / "train_simple.jsonl"),
            "dev_simple": str(root / "dev_simple.jsonl")}


@pytest.fixture(scope="session")
def tone_corpus(tmp_path_factory):
    """200 train / 50 dev corpus over the 8 unaccented symbols."""
    root = tmp_path_factory.mktemp("tone")
    cfg = SynthConfig(accented_variants=0)
    train = synth_corpus(cfg, 200, 3, root, split="train")
    dev = synth_corpus(cfg, 50, 3, root, split="dev")
    return {"root": root, "train": train, "dev": dev}


@pytest.fixture(scope="session")
def accent_corpus(tmp_path_factory):
    """Full 8+4-symbol corpus layout (child / child_simplified / parent).

    Generated through the CLI so the directory layout matches what `plan`
    presets expect: 300 train / 100 dev utterances per language.
    """
    root = tmp_path_factory.mktemp("accent")
    rc = cli.main(["synth", "--out", str(root), "--seed", "5",
                   "--n-train", "300", "--n-dev", "100"])
    assert rc == 0
    return root


@pytest.fixture(scope="session")
def transfer_reports(accent_corpus, tmp_path_factory):
    """baseline_cs and simcs_cs reports for seeds 1..3.

    One training pass feeds every test that compares staged transfer against
    the scratch baseline, so the six runs happen only once per session.
    """
    out = tmp_path_factory.mktemp("transfer_runs")
    reports = {}
    for preset in ("baseline_cs", "simcs_cs"):
        for seed in (1, 2, 3):
            plan = build_preset(preset, accent_corpus, seed=seed, eval_every=50)
            reports[(preset, seed)] = run_plan(plan, out / f"{preset}_s{seed}")
    return reports
