import numpy as np
import pytest

from layerforge.bench import benchmark
from layerforge.blends import compose
from layerforge.model import ModelConfig, init_state
from layerforge.sampler import SamplerConfig
from layerforge.synth import SynthSpec, build_dataset, quantize, save_png

import json


@pytest.fixture(scope="module")
def xray_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("xray_ds")
    build_dataset(SynthSpec(subtask="xray", count_train=2, count_test=4, seed=11), root)
    return root / "manifest.jsonl"


def test_oracle_beats_quantization_bound(xray_manifest):
    report = benchmark(xray_manifest, None, SamplerConfig(), methods=("analytic-oracle", "identity"))
    assert report.mean_rmse("analytic-oracle") <= 1.5


def test_row_count_and_csv_columns(xray_manifest, tmp_path):
    out = tmp_path / "report.csv"
    report = benchmark(
        xray_manifest, None, SamplerConfig(),
        methods=("analytic-oracle", "identity"), out_csv=out,
    )
    assert len(report.rows) == 2 * 4
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "subtask,method,n,rmse,ssim,seconds"
    assert len(lines) == 1 + 8


def test_model_rows_require_state(xray_manifest):
    with pytest.raises(ValueError, match="model"):
        benchmark(xray_manifest, None, SamplerConfig())


def test_model_method_runs(xray_manifest):
    cfg = ModelConfig(dim=16, heads=2, blocks=1, patch=4, prompt_tokens=2, seed=0)
    state = init_state(cfg)
    report = benchmark(xray_manifest, state, SamplerConfig(steps=2, seed=1))
    methods = {r.method for r in report.rows}
    assert methods == {"model", "analytic-oracle", "identity"}
    assert report.mean_rmse("analytic-oracle") <= report.mean_rmse("model")


def test_identity_closed_form_on_constant_occlusion(tmp_path):
    # constant-alpha over blend: composite minus background is alpha*(A - B),
    # so the identity baseline scores 255 * alpha * |A - B| exactly
    h = w = 16
    alpha, a_val, b_val = 0.5, 0.8, 0.3
    fg = np.concatenate([np.full((h, w, 3), a_val), np.full((h, w, 1), alpha)], axis=-1)
    bg = np.full((h, w, 3), b_val)
    comp = compose(fg, bg, "occlusion")
    (tmp_path / "test").mkdir()
    save_png(tmp_path / "test" / "r_fg.png", quantize(fg))
    save_png(tmp_path / "test" / "r_bg.png", quantize(bg))
    save_png(tmp_path / "test" / "r_comp.png", quantize(comp))
    row = {
        "id": "const-0", "subtask": "occlusion", "mode": "occlusion", "split": "test",
        "fg_path": "test/r_fg.png", "bg_path": "test/r_bg.png", "comp_path": "test/r_comp.png",
    }
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text(json.dumps(row) + "\n")
    report = benchmark(manifest, None, SamplerConfig(), methods=("identity",))
    expected = 255.0 * alpha * abs(a_val - b_val)
    assert report.mean_rmse("identity") == pytest.approx(expected, rel=0.02)


def test_foreground_scoring_optional(xray_manifest, tmp_path):
    fg_csv = tmp_path / "fg.csv"
    benchmark(
        xray_manifest, None, SamplerConfig(),
        methods=("analytic-oracle", "identity"),
        score_foreground=True, fg_csv=fg_csv,
    )
    lines = fg_csv.read_text().strip().splitlines()
    assert lines[0] == "subtask,method,n,rmse,ssim,seconds"
    assert len(lines) == 1 + 8


def test_empty_test_split_rejected(tmp_path):
    build_dataset(SynthSpec(subtask="cell", count_train=2, count_test=1, seed=0), tmp_path)
    manifest = tmp_path / "manifest.jsonl"
    rows = manifest.read_text().splitlines()
    kept = [r for r in rows if '"split": "train"' in r]
    manifest.write_text("\n".join(kept) + "\n")
    with pytest.raises(ValueError, match="test split"):
        benchmark(manifest, None, SamplerConfig(), methods=("identity",))


def test_timing_disabled_writes_zero_seconds(xray_manifest, tmp_path):
    out = tmp_path / "report.csv"
    benchmark(
        xray_manifest, None, SamplerConfig(),
        methods=("identity",), out_csv=out, include_timing=False,
    )
    for line in out.read_text().strip().splitlines()[1:]:
        assert line.endswith(",0.0000")
