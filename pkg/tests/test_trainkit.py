import math

import numpy as np
import pytest

from edemajoint.encoders import classify, encode_image, init_params
from edemajoint.errors import ConfigError, IntegrityError, NumericError, ParameterError, ShapeError
from edemajoint.gradnet import GradientSet, ParameterStore
from edemajoint.trainkit import (LOG_COLUMNS, Checkpoint, OptimizerState, TrainConfig, adamw_step,
                                 checkpoint_bytes, checkpoint_from_bytes, config_from_dict,
                                 dump_config, infer_image, load_checkpoint, lr_at_step,
                                 metrics_csv, save_checkpoint, train, validate_config)
from edemajoint.trainkit.config import validate_dict

from conftest import TINY

TINY_MODEL = {k: v for k, v in TINY.items() if k != "image_size"}


def quick_config(**kw):
    base = dict(phase1_epochs=1, phase2_epochs=2, batch_size=4, lr_multiplier=50.0,
                model=TINY_MODEL, seed=3)
    base.update(kw)
    return config_from_dict(base)


def one_param(value):
    p = ParameterStore()
    p.add("theta", np.array([value]), "image_encoder")
    return p


class TestAdamW:
    def test_zero_gradient_no_decay(self):
        p = one_param(1.0)
        adamw_step(p, GradientSet(theta=np.zeros(1)), OptimizerState.zeros(p), 0.1, weight_decay=0.0)
        assert p["theta"][0] == 1.0

    def test_pure_decay(self):
        p = one_param(1.0)
        adamw_step(p, GradientSet(theta=np.zeros(1)), OptimizerState.zeros(p), 0.1,
                   weight_decay=0.01)
        assert p["theta"][0] == pytest.approx(0.999, abs=1e-15)

    def test_first_step(self):
        p = one_param(0.0)
        s = OptimizerState.zeros(p)
        adamw_step(p, GradientSet(theta=np.ones(1)), s, 0.1, weight_decay=0.0)
        assert p["theta"][0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)
        assert s.t == 1
        np.testing.assert_allclose(s.m["theta"], 0.1)
        np.testing.assert_allclose(s.v["theta"], 0.001)

    def test_two_steps_against_scalar_oracle(self):
        p, s = one_param(0.5), None
        s = OptimizerState.zeros(p)
        theta, m, v = 0.5, 0.0, 0.0
        for t, g in enumerate([0.3, -1.2], start=1):
            adamw_step(p, GradientSet(theta=np.array([g])), s, 0.01, weight_decay=0.1)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mh, vh = m / (1 - 0.9**t), v / (1 - 0.999**t)
            theta = theta - 0.01 * mh / (math.sqrt(vh) + 1e-8) - 0.01 * 0.1 * theta
        assert p["theta"][0] == pytest.approx(theta, abs=1e-15)

    def test_missing_gradient_leaves_parameter(self):
        p = one_param(2.0)
        p.add("other", np.ones(2), "text_encoder")
        adamw_step(p, GradientSet(theta=np.ones(1)), OptimizerState.zeros(p), 0.1)
        np.testing.assert_array_equal(p["other"], np.ones(2))

    def test_non_finite(self):
        p = one_param(1.0)
        with pytest.raises(NumericError):
            adamw_step(p, GradientSet(theta=np.array([np.nan])), OptimizerState.zeros(p), 0.1)


class TestSchedule:
    def test_knots(self):
        assert lr_at_step(10, 10, 100, 2e-5) == 2e-5
        assert lr_at_step(100, 10, 100, 2e-5) == 0.0
        assert lr_at_step(0, 10, 100, 2e-5) == 0.0

    def test_interpolation(self):
        assert lr_at_step(55, 10, 100, 2e-5) == pytest.approx(1e-5, abs=1e-20)
        assert lr_at_step(5, 10, 100, 2e-5) == pytest.approx(1e-5, abs=1e-20)

    def test_no_warmup(self):
        assert lr_at_step(0, 0, 10, 1.0) == 1.0

    @pytest.mark.parametrize("args", [(-1, 1, 10), (11, 1, 10), (0, 10, 10), (0, -1, 10)])
    def test_range(self, args):
        with pytest.raises(ParameterError):
            lr_at_step(*args, 1e-3)


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.phase1_epochs, c.phase2_epochs, c.batch_size) == (10, 50, 4)
        assert c.base_lr == 2e-5 and c.warmup_fraction == 0.1 and c.weight_decay == 0.01
        assert c.peak_lr == pytest.approx(2e-5 * c.lr_multiplier)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("")
        config, errors = validate_config(p)
        assert errors == [] and config == TrainConfig()

    def test_batch_size_zero(self):
        _, errors = validate_dict({"batch_size": 0})
        assert len(errors) == 1 and "batch_size" in errors[0]

    def test_errors_aggregate(self):
        _, errors = validate_dict({"batch_size": 0, "warmup_fraction": 1.5, "colour": "red",
                                   "model": {"depth": 3}})
        joined = "\n".join(errors)
        for key in ("batch_size", "warmup_fraction", "colour", "model.depth"):
            assert key in joined

    def test_bad_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("a: [1,\n")
        _, errors = validate_config(p)
        assert errors and "YAML" in errors[0]

    def test_dump_round_trip(self, tmp_path):
        c = quick_config(similarity="cosine")
        p = tmp_path / "c.yaml"
        p.write_text(dump_config(c))
        assert validate_config(p) == (c, [])

    def test_model_keys_validated(self):
        _, errors = validate_dict({"model": {"text_width": 30, "text_heads": 4}})
        assert errors


class TestCheckpoint:
    def make(self, tiny_model):
        p = init_params(tiny_model, seed=4)
        s = OptimizerState.zeros(p)
        s.t = 7
        for n in p:
            s.m[n] = p[n] * 0.5
        return Checkpoint(p, s, 7, quick_config(), {"<pad>": 0, "<bos>": 1})

    def test_round_trip(self, tiny_model, tmp_path):
        ck = self.make(tiny_model)
        save_checkpoint(ck, tmp_path / "m.ckpt")
        back = load_checkpoint(tmp_path / "m.ckpt")
        assert back.params.equals(ck.params)
        assert back.model == ck.model and back.config == ck.config
        assert back.step == 7 and back.optimizer.t == 7 and back.vocabulary == ck.vocabulary
        for n in ck.params:
            np.testing.assert_array_equal(back.optimizer.m[n], ck.optimizer.m[n])
            assert back.params.owner(n) == ck.params.owner(n)
        assert checkpoint_bytes(back) == checkpoint_bytes(ck)

    def test_truncated(self, tiny_model):
        data = checkpoint_bytes(self.make(tiny_model))
        with pytest.raises(IntegrityError):
            checkpoint_from_bytes(data[:-10])
        with pytest.raises(IntegrityError):
            checkpoint_from_bytes(data[:5])

    def test_flipped_bit(self, tiny_model):
        data = bytearray(checkpoint_bytes(self.make(tiny_model)))
        data[len(data) // 2] ^= 1
        with pytest.raises(IntegrityError, match="checksum"):
            checkpoint_from_bytes(bytes(data))

    def test_version(self, tiny_model):
        data = bytearray(checkpoint_bytes(self.make(tiny_model)))
        data[8] = 2
        with pytest.raises(IntegrityError, match="version"):
            checkpoint_from_bytes(bytes(data))


class TestTrain:
    def test_noop_schedule_is_initialisation(self, small_split):
        c = quick_config(phase1_epochs=0, phase2_epochs=0)
        r = train(c, small_split)
        assert r.log == [] and r.checkpoint.step == 0
        assert r.checkpoint.params.equals(init_params(r.checkpoint.model, c.seed))

    def test_deterministic(self, small_split):
        a = train(quick_config(), small_split)
        b = train(quick_config(), small_split)
        assert checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint)
        assert metrics_csv(a.log) == metrics_csv(b.log)

    def test_seed_matters(self, small_split):
        a = train(quick_config(phase1_epochs=0, phase2_epochs=1), small_split)
        b = train(quick_config(phase1_epochs=0, phase2_epochs=1, seed=4), small_split)
        assert not a.checkpoint.params.equals(b.checkpoint.params)

    def test_phase1_leaves_classifiers_untouched(self, small_split):
        c = quick_config(phase1_epochs=1, phase2_epochs=0)
        r = train(c, small_split)
        init = init_params(r.checkpoint.model, c.seed)
        for n in r.checkpoint.params:
            owner = r.checkpoint.params.owner(n)
            same = np.array_equal(r.checkpoint.params[n], init[n])
            assert same == (owner in ("image_classifier", "text_classifier")), n

    def test_step_counts_and_lr_trace(self, small_split):
        c = quick_config(phase1_epochs=1, phase2_epochs=2, batch_size=5)
        r = train(c, small_split)
        p1 = math.ceil(len(small_split) / 5)
        p2 = 2 * math.ceil(len(small_split.labeled) / 5)
        assert r.checkpoint.step == p1 + p2 == len(r.lr_trace)
        assert min(r.lr_trace) >= 0 and max(r.lr_trace) <= c.peak_lr
        assert [row["phase"] for row in r.log] == [1, 2, 2]

    def test_insufficient_labels(self, small_split):
        with pytest.raises(ConfigError):
            train(quick_config(batch_size=len(small_split.labeled) + 1), small_split)

    def test_validation_metrics_and_best(self, small_split):
        from edemajoint.synthgen import holdout_split
        tr, val = holdout_split(small_split, 8)
        r = train(quick_config(phase1_epochs=0, phase2_epochs=3), tr, val)
        rows = [row for row in r.log if row["phase"] == 2]
        assert all("macro_f1" in row for row in rows)
        assert r.best is not None and r.best.step <= r.checkpoint.step

    def test_image_only_touches_image_stream(self, small_split):
        c = quick_config(image_only=True, phase1_epochs=0, phase2_epochs=1)
        r = train(c, small_split)
        init = init_params(r.checkpoint.model, c.seed)
        for n in r.checkpoint.params.names("text_encoder") + r.checkpoint.params.names("text_classifier"):
            np.testing.assert_array_equal(r.checkpoint.params[n], init[n])

    def test_augment_runs(self, small_split):
        r = train(quick_config(phase1_epochs=0, phase2_epochs=1, augment_shift=2), small_split)
        assert np.isfinite(r.log[0]["loss"])

    def test_metrics_csv(self):
        text = metrics_csv([{"epoch": 1, "phase": 1, "loss": 0.5},
                            {"epoch": 1, "phase": 2, "loss": 0.25, "auc_0v123": 1.0,
                             "auc_01v23": None, "auc_012v3": 0.5, "macro_f1": 0.75}])
        lines = text.splitlines()
        assert lines[0] == ",".join(LOG_COLUMNS)
        assert lines[1] == "1,1,0.5,,,,"
        assert lines[2] == "1,2,0.25,1.0,,0.5,0.75"


class TestInferImage:
    def test_matches_manual_composition(self, tiny_params, small_split):
        img = small_split.examples[0].image
        np.testing.assert_array_equal(infer_image(tiny_params, img),
                                      classify(encode_image(img, tiny_params), tiny_params))

    def test_text_parameters_are_irrelevant(self, tiny_params, small_split):
        c = tiny_params.copy()
        for n in c.names("text_encoder") + c.names("text_classifier"):
            c.assign(n, np.zeros_like(c[n]))
        for e in small_split.examples[:5]:
            assert infer_image(c, e.image).tobytes() == infer_image(tiny_params, e.image).tobytes()

    def test_valid_distribution(self, tiny_params):
        imgs = np.random.default_rng(0).uniform(size=(100, 16, 16))
        probs = np.stack([infer_image(tiny_params, x) for x in imgs])
        np.testing.assert_allclose(probs.sum(1), 1.0, atol=1e-12)
        assert (probs >= 0).all()

    def test_shape(self, tiny_params):
        with pytest.raises(ShapeError):
            infer_image(tiny_params, np.zeros((32, 32)))
