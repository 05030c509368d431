"""Pipeline configuration (TOML) and end-to-end orchestration.

One committed config file captures a full reproducible run. All stage seeds
are derived from a single root seed (overridable via the ``LAYERFORGE_SEED``
environment variable), so per-section seed keys are rejected. Paths resolve
relative to the config file's directory.

Stages run in order synth -> train -> sample-on-test -> eval; a stage whose
outputs already exist is skipped unless ``force`` is set, and any failure
halts the run with the stage name attached.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version dependent
    import tomli as tomllib

from .bench import benchmark
from .flow import TrainConfig, train
from .model import ModelConfig, init_state, load_checkpoint
from .sampler import SamplerConfig, sample
from .synth import SynthSpec, build_dataset, load_triplet, read_manifest, save_png
from .validation import derive_seed

__all__ = ["PipelineConfig", "PipelineError", "load_config", "validate_config", "run_pipeline"]

ENV_SEED = "LAYERFORGE_SEED"

_SECTION_KEYS = {
    "synth": {
        "subtask", "width", "height", "count_train", "count_test",
        "alpha_lo", "alpha_hi", "fg_lo", "fg_hi", "source", "corpus_fg", "corpus_bg",
    },
    "model": {
        "dim", "heads", "blocks", "mlp_ratio", "patch", "prompt_tokens",
        "pe_cloning", "frame_gap", "time_dim",
    },
    "train": {"steps", "batch_size", "lr", "beta1", "beta2", "adam_eps", "checkpoint_every"},
    "sampler": {"method", "steps", "eta"},
}
_TOP_KEYS = {"root_seed", "workdir", "synth", "model", "train", "sampler"}


class PipelineError(RuntimeError):
    """Stage failure; carries the stage name for error reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@dataclass
class PipelineConfig:
    workdir: Path
    root_seed: int
    synth: SynthSpec
    model: ModelConfig
    train: TrainConfig
    sampler: SamplerConfig


def _parse_toml(path) -> dict:
    with open(path, "rb") as f:
        return tomllib.load(f)


def _range_pair(section: dict, lo_key: str, hi_key: str):
    lo, hi = section.get(lo_key), section.get(hi_key)
    if lo is None and hi is None:
        return None
    if lo is None or hi is None:
        raise ValueError(f"{lo_key} and {hi_key} must be given together")
    return (float(lo), float(hi))


def _build(raw: dict, env: dict) -> tuple[PipelineConfig | None, list[str]]:
    violations: list[str] = []
    for key in raw:
        if key not in _TOP_KEYS:
            violations.append(f"{key}: unknown key")
    for section, keys in _SECTION_KEYS.items():
        for key in raw.get(section, {}):
            if key not in keys:
                violations.append(f"{section}.{key}: unknown key")
    if "workdir" not in raw:
        violations.append("workdir: required")
    if violations:
        return None, violations

    root_seed = int(raw.get("root_seed", 0))
    if ENV_SEED in env:
        try:
            root_seed = int(env[ENV_SEED])
        except ValueError:
            violations.append(f"{ENV_SEED}: not an integer: {env[ENV_SEED]!r}")
            return None, violations

    s = raw.get("synth", {})
    m = raw.get("model", {})
    t = raw.get("train", {})
    p = raw.get("sampler", {})

    def build(section, ctor):
        try:
            return ctor()
        except (ValueError, TypeError) as e:
            violations.append(f"{section}: {e}")
            return None

    model_cfg = build("model", lambda: ModelConfig(
        dim=int(m.get("dim", 64)),
        heads=int(m.get("heads", 4)),
        blocks=int(m.get("blocks", 2)),
        mlp_ratio=float(m.get("mlp_ratio", 2.0)),
        patch=int(m.get("patch", 4)),
        prompt_tokens=int(m.get("prompt_tokens", 4)),
        pe_cloning=str(m.get("pe_cloning", "offset")),
        frame_gap=int(m.get("frame_gap", 2)),
        time_dim=int(m.get("time_dim", 64)),
        seed=derive_seed(root_seed, "model"),
    ))
    synth_spec = build("synth", lambda: SynthSpec(
        subtask=str(s.get("subtask", "occlusion")),
        width=int(s.get("width", 32)),
        height=int(s.get("height", 32)),
        count_train=int(s.get("count_train", 8)),
        count_test=int(s.get("count_test", 2)),
        alpha_range=_range_pair(s, "alpha_lo", "alpha_hi"),
        fg_size_range=_range_pair(s, "fg_lo", "fg_hi"),
        source=str(s.get("source", "procedural")),
        corpus_fg=s.get("corpus_fg"),
        corpus_bg=s.get("corpus_bg"),
        seed=derive_seed(root_seed, "synth"),
        patch=model_cfg.patch if model_cfg else 4,
    ))
    train_cfg = build("train", lambda: TrainConfig(
        steps=int(t.get("steps", 2000)),
        batch_size=int(t.get("batch_size", 1)),
        lr=float(t.get("lr", 1e-4)),
        beta1=float(t.get("beta1", 0.9)),
        beta2=float(t.get("beta2", 0.999)),
        adam_eps=float(t.get("adam_eps", 1e-8)),
        seed=derive_seed(root_seed, "train"),
        checkpoint_every=int(t.get("checkpoint_every", 0)),
    ))
    sampler_cfg = build("sampler", lambda: SamplerConfig(
        method=str(p.get("method", "euler")),
        steps=int(p.get("steps", 16)),
        eta=float(p.get("eta", 0.0)),
        seed=derive_seed(root_seed, "sample"),
    ))
    if violations:
        return None, violations

    for section, cfg in (("synth", synth_spec), ("model", model_cfg), ("train", train_cfg), ("sampler", sampler_cfg)):
        try:
            cfg.validate()
        except ValueError as e:
            # patch divisibility is reported once below, naming both fields
            if section == "synth" and "multiple of patch" in str(e):
                continue
            violations.append(f"{section}: {e}")
    if synth_spec.width % model_cfg.patch or synth_spec.height % model_cfg.patch:
        violations.append(
            f"synth.width/synth.height and model.patch: resolution "
            f"{synth_spec.width}x{synth_spec.height} not divisible by patch {model_cfg.patch}"
        )
    if violations:
        return None, violations
    return PipelineConfig(Path("."), root_seed, synth_spec, model_cfg, train_cfg, sampler_cfg), []


def load_config(path, env: dict | None = None) -> PipelineConfig:
    """Parse and validate a pipeline config; raises ValueError listing violations."""
    env = dict(os.environ) if env is None else env
    raw = _parse_toml(path)
    cfg, violations = _build(raw, env)
    if violations:
        raise ValueError(f"{path}: " + "; ".join(violations))
    workdir = (Path(path).parent / raw["workdir"]).resolve()
    return replace(cfg, workdir=workdir)


def validate_config(path, env: dict | None = None) -> list[str]:
    """Check every invariant of every sub-config; empty list means valid."""
    env = dict(os.environ) if env is None else env
    try:
        raw = _parse_toml(path)
    except tomllib.TOMLDecodeError as e:
        return [f"parse error: {e}"]
    _, violations = _build(raw, env)
    return violations


def run_pipeline(config_path, force: bool = False, log=print) -> dict:
    """Execute synth -> train -> sample -> eval; returns artifact paths.

    Idempotent: stages whose outputs exist are skipped unless ``force``.
    Raises :class:`PipelineError` naming the failing stage.
    """
    try:
        cfg = load_config(config_path)
    except (ValueError, OSError) as e:
        raise PipelineError("config", str(e)) from e

    work = cfg.workdir
    dataset_dir = work / "dataset"
    manifest = dataset_dir / "manifest.jsonl"
    ckpt = work / "checkpoints" / "model.ckpt"
    loss_trace = work / "loss_trace.csv"
    samples_dir = work / "samples"
    report_csv = work / "report.csv"
    report_txt = work / "report.txt"
    work.mkdir(parents=True, exist_ok=True)

    # synth
    if manifest.exists() and not force:
        log(f"synth: skip ({manifest} exists)")
    else:
        try:
            summary = build_dataset(cfg.synth, dataset_dir)
            log(f"synth: {summary['n_train']} train / {summary['n_test']} test records")
        except Exception as e:
            raise PipelineError("synth", str(e)) from e

    # train
    if ckpt.exists() and loss_trace.exists() and not force:
        log(f"train: skip ({ckpt} exists)")
    else:
        try:
            rows = read_manifest(manifest)
            records = [
                (*load_triplet(manifest, row), row["subtask"])
                for row in rows
                if row["split"] == "train"
            ]
            state = init_state(cfg.model)
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            tcfg = replace(cfg.train, checkpoint_path=str(ckpt), loss_log=str(loss_trace))
            _, trace = train(state, records, tcfg)
            log(f"train: {len(trace)} steps, final loss {trace[-1].loss:.5f}")
        except Exception as e:
            raise PipelineError("train", str(e)) from e

    # sample on the test split
    try:
        test_rows = [r for r in read_manifest(manifest) if r["split"] == "test"]
    except Exception as e:
        raise PipelineError("sample", str(e)) from e
    expected = [
        (samples_dir / f"{row['id']}_fg.png", samples_dir / f"{row['id']}_bg.png")
        for row in test_rows
    ]
    if all(f.exists() and b.exists() for f, b in expected) and not force:
        log(f"sample: skip ({samples_dir} complete)")
    else:
        try:
            state, _ = load_checkpoint(ckpt)
            samples_dir.mkdir(parents=True, exist_ok=True)
            for row, (fg_out, bg_out) in zip(test_rows, expected):
                _, _, comp = load_triplet(manifest, row)
                per_record = replace(cfg.sampler, seed=derive_seed(cfg.sampler.seed, row["id"]))
                x_img, y_img = sample(state, comp, row["subtask"], per_record)
                save_png(fg_out, x_img)
                save_png(bg_out, y_img)
            log(f"sample: {len(test_rows)} test records decomposed")
        except Exception as e:
            raise PipelineError("sample", str(e)) from e

    # eval
    if report_csv.exists() and report_txt.exists() and not force:
        log(f"eval: skip ({report_csv} exists)")
    else:
        try:
            state, _ = load_checkpoint(ckpt)
            report = benchmark(
                manifest, state, cfg.sampler,
                out_csv=report_csv, table_path=report_txt, include_timing=False,
            )
            log("eval:\n" + report.table())
        except Exception as e:
            raise PipelineError("eval", str(e)) from e

    return {
        "manifest": manifest,
        "checkpoint": ckpt,
        "loss_trace": loss_trace,
        "samples": samples_dir,
        "report_csv": report_csv,
        "report_txt": report_txt,
    }
