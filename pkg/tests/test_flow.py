import numpy as np
import pytest

from layerforge.flow import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    flow_sample,
    gradcheck,
    loss_lce,
    make_probe,
    train,
)
from layerforge.model import ModelConfig, backward, init_state
from layerforge.synth import gen_procedural_background, gen_procedural_foreground


def small_config(**kw):
    base = dict(dim=32, heads=4, blocks=2, mlp_ratio=2.0, patch=4, prompt_tokens=2, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def tiny_records(n=4, res=16, subtask="occlusion"):
    records = []
    for i in range(n):
        fg = gen_procedural_foreground(100 + i, (res, res), subtask)
        bg = gen_procedural_background(200 + i, (res, res))
        from layerforge.blends import compose

        comp = compose(fg, bg, subtask)
        records.append((fg, bg, comp, subtask))
    return records


class TestFlowSample:
    def test_endpoints(self, rng):
        x0 = rng.standard_normal((8, 16))
        eps = rng.standard_normal((8, 16))
        xt, u = flow_sample(x0, eps, 0.0)
        np.testing.assert_array_equal(xt, x0)
        np.testing.assert_array_equal(u, eps - x0)
        xt, _ = flow_sample(x0, eps, 1.0)
        np.testing.assert_array_equal(xt, eps)

    def test_scalar_probe(self):
        xt, u = flow_sample(np.array(0.0), np.array(2.0), 0.5)
        assert xt == 1.0 and u == 2.0

    def test_rejects_bad_inputs(self, rng):
        with pytest.raises(ValueError, match="shape"):
            flow_sample(rng.standard_normal((4, 2)), rng.standard_normal((4, 3)), 0.5)
        with pytest.raises(ValueError, match="t must"):
            flow_sample(np.zeros(3), np.zeros(3), 1.5)


class TestLoss:
    def _probe(self, state, seed=0):
        return make_probe(state, seed=seed)

    def test_zero_model_with_matched_noise_has_zero_loss(self):
        # zero velocity head, and eps == x0 makes the target velocity zero
        state = init_state(small_config())
        p = self._probe(state)
        loss = loss_lce(state, p.z_seq, p.x0, p.y0, p.t, p.x0, p.y0, p.subtask)
        assert loss == 0.0

    def test_zero_model_closed_form(self):
        state = init_state(small_config())
        p = self._probe(state)
        loss = loss_lce(state, p.z_seq, p.x0, p.y0, p.t, p.eps_x, p.eps_y, p.subtask)
        ux = p.eps_x - p.x0
        uy = p.eps_y - p.y0
        expected = np.mean(ux * ux) + np.mean(uy * uy)
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_homogeneity_for_zero_model(self):
        state = init_state(small_config())
        p = self._probe(state)
        l1 = loss_lce(state, p.z_seq, p.x0, p.y0, p.t, p.eps_x, p.eps_y, p.subtask)
        l2 = loss_lce(state, p.z_seq, 2 * p.x0, 2 * p.y0, p.t, 2 * p.eps_x, 2 * p.eps_y, p.subtask)
        assert np.sqrt(l2) == pytest.approx(2 * np.sqrt(l1), rel=1e-9)

    def test_loss_nonnegative_random_state(self, rng):
        state = init_state(small_config(), zero_init_heads=False)
        p = self._probe(state, seed=3)
        assert loss_lce(state, p.z_seq, p.x0, p.y0, p.t, p.eps_x, p.eps_y, p.subtask) >= 0.0


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        state = init_state(small_config(), zero_init_heads=False)
        p = make_probe(state)
        cache = {}
        from layerforge.model import forward
        from layerforge.codec import TokenSequence

        xt, _ = flow_sample(p.x0, p.eps_x, p.t)
        yt, _ = flow_sample(p.y0, p.eps_y, p.t)
        forward(state, p.z_seq,
                TokenSequence(xt, 4, 4, "foreground"),
                TokenSequence(yt, 4, 4, "background"),
                p.t, p.subtask, cache)
        grads = backward(state, cache, np.zeros_like(xt), np.zeros_like(yt))
        for name, g in grads.items():
            assert not g.any(), name

    def test_unused_prompt_rows_have_zero_grad(self):
        from conftest import open_gates

        state = open_gates(init_state(small_config(), zero_init_heads=False))
        p = make_probe(state)
        _, grads = loss_lce(state, p.z_seq, p.x0, p.y0, p.t, p.eps_x, p.eps_y,
                            state.config.subtasks[0], return_grads=True)
        table = grads["prompt.table"]
        assert table[0].any()
        assert not table[1:].any()


class TestGradcheck:
    def test_small_model_within_tolerance(self):
        state = init_state(small_config(seed=3), zero_init_heads=False)
        assert gradcheck(state, n_coords=250, seed=1) <= 1e-3

    def test_linear_model_is_nearly_exact(self):
        state = init_state(small_config(blocks=0, seed=3), zero_init_heads=False)
        assert gradcheck(state, n_coords=250, seed=2) <= 1e-6

    def test_rejects_zero_coords(self):
        state = init_state(small_config())
        with pytest.raises(ValueError, match="n_coords"):
            gradcheck(state, n_coords=0)


class TestTrain:
    def test_determinism(self, tmp_path):
        records = tiny_records()
        cfg = TrainConfig(steps=20, lr=1e-3, seed=11)
        s1 = init_state(small_config(patch=4))
        s1, t1 = train(s1, records, cfg)
        s2 = init_state(small_config(patch=4))
        s2, t2 = train(s2, records, cfg)
        assert [(r.step, r.t, r.loss, r.grad_norm) for r in t1] == [
            (r.step, r.t, r.loss, r.grad_norm) for r in t2
        ]
        for name in s1.params:
            np.testing.assert_array_equal(s1.params[name], s2.params[name])

    def test_zero_learning_rate_leaves_state_unchanged(self):
        records = tiny_records()
        state = init_state(small_config(), zero_init_heads=False)
        before = {k: v.copy() for k, v in state.params.items()}
        state, trace = train(state, records, TrainConfig(steps=10, lr=0.0, seed=5))
        for name in before:
            np.testing.assert_array_equal(state.params[name], before[name])
        assert len(trace) == 10

    def test_loss_decreases_on_tiny_problem(self):
        records = tiny_records()
        state = init_state(small_config())
        state, trace = train(state, records, TrainConfig(steps=300, lr=2e-3, seed=7))
        first = np.mean([r.loss for r in trace[:50]])
        last = np.mean([r.loss for r in trace[-50:]])
        assert last < first

    def test_uniform_timestep_sampling(self):
        # pass-through model keeps 10k steps cheap; the t draws are the
        # training loop's own
        records = tiny_records(n=2, res=8)
        state = init_state(small_config(blocks=0, dim=8, heads=2, patch=4, time_dim=8))
        state, trace = train(state, records, TrainConfig(steps=10_000, lr=0.0, seed=3))
        mean_t = np.mean([r.t for r in trace])
        assert abs(mean_t - 0.5) <= 0.02

    def test_divergence_aborts_and_keeps_last_good_checkpoint(self, tmp_path):
        records = tiny_records()
        state = init_state(small_config(), zero_init_heads=False)
        state.params["embed.z.w"][:] = 1e308  # embed matmul overflows to inf
        snapshot = {k: v.copy() for k, v in state.params.items()}
        ckpt = tmp_path / "diverged.ckpt"
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDiverged, match="step 1"):
                train(state, records, TrainConfig(steps=5, lr=1e-3, seed=0, checkpoint_path=str(ckpt)))
            assert ckpt.exists()
            from layerforge.model import load_checkpoint

            loaded, _ = load_checkpoint(ckpt)
            for name in snapshot:
                np.testing.assert_array_equal(
                    loaded.params[name], snapshot[name].astype(np.float32).astype(np.float64)
                )

    def test_loss_log_written(self, tmp_path):
        records = tiny_records()
        state = init_state(small_config())
        log = tmp_path / "trace.csv"
        train(state, records, TrainConfig(steps=5, lr=1e-3, seed=1, loss_log=str(log)))
        lines = log.read_text().strip().splitlines()
        assert lines[0] == "step,t,loss,grad_norm"
        assert len(lines) == 6

    def test_rejects_empty_records_and_bad_config(self):
        state = init_state(small_config())
        with pytest.raises(ValueError, match="records"):
            train(state, [], TrainConfig(steps=1))
        with pytest.raises(ValueError, match="steps"):
            train(state, tiny_records(), TrainConfig(steps=0))
        with pytest.raises(ValueError, match="lr"):
            TrainConfig(lr=-1e-3).validate()


class TestAdamState:
    def test_array_roundtrip(self):
        state = init_state(small_config(), zero_init_heads=False)
        opt = AdamState.for_params(state.params)
        opt.step = 17
        opt.m["head.x.w"][0, 0] = 1.25
        arrays = opt.to_arrays()
        back = AdamState.from_arrays(state.params, arrays)
        assert back.step == 17
        np.testing.assert_array_equal(back.m["head.x.w"], opt.m["head.x.w"])
