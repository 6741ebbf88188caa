import numpy as np
import pytest

from edemajoint.encoders import init_params
from edemajoint.errors import DegenerateInputError, NumericError, ParameterError, ShapeError
from edemajoint.gradnet import (GradientSet, ParameterStore, finite_diff_check,
                                loss_and_gradients, tensor as T)
from edemajoint.objective import Batch, ObjectiveConfig, margin, sample_impostor_map
from edemajoint.rng import Rng


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        hi = f(x)
        x[i] = old - eps
        lo = f(x)
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, *arrays, atol=1e-7):
    """Compare the tape gradient of sum(w * build(*xs)) against central differences."""
    rng = np.random.default_rng(3)
    out_shape = build(*[T.Tensor(a) for a in arrays]).shape
    w = rng.normal(size=out_shape)

    def scalar(*xs):
        return float(np.sum(w * build(*[T.Tensor(x) for x in xs]).data))

    leaves = [T.Tensor(a.copy(), requires_grad=True) for a in arrays]
    T.tsum(T.mul(build(*leaves), T.Tensor(w))).backward()
    for k, a in enumerate(arrays):
        def f(x, k=k):
            xs = [b.copy() for b in arrays]
            xs[k] = x
            return scalar(*xs)
        np.testing.assert_allclose(leaves[k].grad, numeric_grad(f, a.copy()), atol=atol, rtol=1e-6)


@pytest.fixture
def r():
    return np.random.default_rng(11)


class TestPrimitives:
    def test_relu_gradient_at_points(self):
        x = T.Tensor(np.array([-1.0, 2.0]), requires_grad=True)
        T.tsum(T.relu(x)).backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_softmax_of_zeros(self):
        np.testing.assert_allclose(T.softmax(T.Tensor(np.zeros(4))).data, [0.25] * 4, atol=1e-15)

    def test_zero_kernel_conv(self, r):
        x = T.Tensor(r.normal(size=(2, 3, 8, 8)))
        out = T.conv2d(x, T.Tensor(np.zeros((4, 3, 3, 3))), T.Tensor(np.zeros(4)))
        assert out.shape == (2, 4, 8, 8) and not out.data.any()

    def test_conv_matches_direct_loop(self, r):
        x, w, b = r.normal(size=(1, 2, 5, 5)), r.normal(size=(3, 2, 3, 3)), r.normal(size=3)
        out = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride=2).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros((1, 3, 3, 3))
        for o in range(3):
            for i in range(3):
                for j in range(3):
                    ref[0, o, i, j] = np.sum(xp[0, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]) + b[o]
        np.testing.assert_allclose(out, ref, atol=1e-12)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_conv_gradients(self, r, stride):
        check_op(lambda x, w, b: T.conv2d(x, w, b, stride=stride),
                 r.normal(size=(2, 2, 6, 6)), r.normal(size=(3, 2, 3, 3)), r.normal(size=3))

    def test_conv_1x1_gradients(self, r):
        check_op(lambda x, w, b: T.conv2d(x, w, b, stride=2),
                 r.normal(size=(1, 2, 4, 4)), r.normal(size=(3, 2, 1, 1)), r.normal(size=3))

    def test_affine_gradients(self, r):
        check_op(T.affine, r.normal(size=(3, 4)), r.normal(size=(4, 2)), r.normal(size=2))

    def test_elementwise_gradients(self, r):
        a, b = r.normal(size=(3, 4)), r.uniform(0.5, 2.0, size=(3, 4))
        check_op(T.add, a, b)
        check_op(T.sub, a, b)
        check_op(T.mul, a, b)
        check_op(T.div, a, b)
        check_op(T.log, b)
        check_op(T.sqrt, b)
        check_op(lambda x: T.relu(x), a + np.sign(a) * 0.1)

    def test_broadcast_gradients(self, r):
        check_op(T.add, r.normal(size=(3, 4)), r.normal(size=(4,)))
        check_op(T.mul, r.normal(size=(2, 3, 4)), r.normal(size=(3, 1)))

    def test_reductions_and_reshapes(self, r):
        x = r.normal(size=(2, 3, 4))
        check_op(lambda t: T.tsum(t, axis=1), x)
        check_op(lambda t: T.mean(t, axis=(0, 2), keepdims=True), x)
        check_op(lambda t: T.transpose(t, (2, 0, 1)).reshape(4, 6), x)
        check_op(lambda t: t[:, 1:, ::2], x)
        check_op(lambda a, b: T.concat([a, b], axis=1), x, r.normal(size=(2, 2, 4)))

    def test_matmul_gradients(self, r):
        check_op(T.matmul, r.normal(size=(2, 3, 4)), r.normal(size=(2, 4, 5)))

    def test_embedding_gradient_accumulates_repeats(self, r):
        table = r.normal(size=(5, 3))
        ids = np.array([[1, 1, 4]])
        check_op(lambda t: T.embedding(ids, t), table)

    def test_global_avg_pool(self, r):
        check_op(T.global_avg_pool, r.normal(size=(2, 3, 4, 4)))

    def test_softmax_with_mask(self, r):
        mask = np.array([[True, True, False]])
        out = T.softmax(T.Tensor(r.normal(size=(2, 3))), mask=mask).data
        np.testing.assert_allclose(out.sum(-1), 1.0, atol=1e-15)
        assert not out[:, 2].any()
        check_op(lambda t: T.softmax(t, mask=mask), r.normal(size=(2, 3)))

    def test_layer_norm(self, r):
        check_op(T.layer_norm, r.normal(size=(3, 5)), r.normal(size=5), r.normal(size=5))

    def test_similarity_primitives(self, r):
        a, b = r.normal(size=(3, 4)), r.normal(size=(3, 4))
        check_op(T.dot, a, b)
        check_op(T.norm, a)
        check_op(T.cosine, a, b)

    def test_norm_of_zero_has_zero_subgradient(self):
        x = T.Tensor(np.zeros(3), requires_grad=True)
        T.norm(x).backward()
        np.testing.assert_array_equal(x.grad, 0.0)

    def test_cosine_zero_vector(self):
        with pytest.raises(DegenerateInputError):
            T.cosine(T.Tensor(np.zeros(2)), T.Tensor(np.ones(2)))

    def test_shape_error_names_operands(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
            T.add(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros(4)))
        with pytest.raises(ShapeError):
            T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_overflow_names_the_operation(self):
        with pytest.raises(NumericError, match="mul"):
            T.mul(T.Tensor(np.array([1e200])), T.Tensor(np.array([1e200])))

    def test_log_floor(self):
        out = T.log(T.Tensor(np.array([0.0])), floor=1e-12)
        np.testing.assert_allclose(out.data, np.log(1e-12))

    def test_shared_node_gradients_add(self):
        x = T.Tensor(np.array(3.0), requires_grad=True)
        T.mul(x, x).backward()
        assert x.grad == 6.0


class TestParameterStore:
    def test_order_and_owner(self):
        p = ParameterStore()
        p.add("b", np.zeros(2), "text_encoder")
        p.add("a", np.ones(3), "image_classifier")
        assert list(p) == ["b", "a"]
        assert p.names("image_classifier") == ["a"]
        assert p.size() == 5

    def test_duplicates_and_owner_validation(self):
        p = ParameterStore()
        p.add("w", np.zeros(2), "image_encoder")
        with pytest.raises(KeyError):
            p.add("w", np.zeros(2), "image_encoder")
        with pytest.raises(ValueError):
            p.add("v", np.zeros(2), "decoder")

    def test_shapes_are_fixed(self):
        p = ParameterStore()
        p.add("w", np.zeros(2), "image_encoder")
        with pytest.raises(ShapeError):
            p.assign("w", np.zeros(3))

    def test_copy_is_deep(self, tiny_params):
        c = tiny_params.copy()
        c["img.out.b"][0] += 1.0
        assert not c.equals(tiny_params)
        assert tiny_params.equals(tiny_params.copy())

    def test_every_owner_present(self, tiny_params):
        assert {tiny_params.owner(n) for n in tiny_params} == {
            "image_encoder", "text_encoder", "image_classifier", "text_classifier"}

    def test_gradient_set_default(self, tiny_params):
        g = GradientSet()
        np.testing.assert_array_equal(g.get_or_zero(tiny_params, "cls_img.b"), np.zeros(4))


def _batch(split, idx, n=None):
    n = len(split.examples) if n is None else n
    return Batch.from_examples(split.examples, idx, sample_impostor_map(n, Rng(0), 0))


class TestEngine:
    def test_zero_params_uniform_classification(self, small_split, tiny_params):
        zero = tiny_params.copy()
        for n in zero:
            zero.assign(n, np.zeros_like(zero[n]))
        batch = _batch(small_split, [0, 1, 2])
        loss, _ = loss_and_gradients(zero, batch, ObjectiveConfig())
        # every similarity is 0, so the ranking terms are 2*eta each
        etas = sum(2 * margin(batch.labels[i], batch.impostor_labels[i]) for i in range(3))
        np.testing.assert_allclose(loss, etas + 3 * 2 * np.log(4), atol=1e-12)

    def test_phase1_classifiers_unreachable(self, small_split, tiny_params):
        _, grads = loss_and_gradients(tiny_params, _batch(small_split, [0, 30, 31]),
                                      ObjectiveConfig(phase="embedding_only"))
        for n in tiny_params.names("image_classifier") + tiny_params.names("text_classifier"):
            assert n not in grads
            assert not grads.get_or_zero(tiny_params, n).any()

    def test_gradients_finite_and_shaped(self, small_split, tiny_params):
        _, grads = loss_and_gradients(tiny_params, _batch(small_split, [0, 1, 2, 3]),
                                      ObjectiveConfig())
        assert set(grads) <= set(tiny_params)
        for n, g in grads.items():
            assert g.shape == tiny_params[n].shape and np.isfinite(g).all()

    def test_forward_is_bit_deterministic(self, small_split, tiny_params):
        batch = _batch(small_split, [4, 5])
        a, _ = loss_and_gradients(tiny_params, batch, ObjectiveConfig())
        b, _ = loss_and_gradients(tiny_params, batch, ObjectiveConfig())
        assert a == b

    def test_gradient_linearity(self, small_split, tiny_params):
        b1, b2 = _batch(small_split, [0, 1]), _batch(small_split, [2, 3])
        _, g1 = loss_and_gradients(tiny_params, b1, ObjectiveConfig())
        _, g2 = loss_and_gradients(tiny_params, b2, ObjectiveConfig())
        # a batch is a sum of per-example terms, so the union batch's gradient is g1 + g2
        _, g12 = loss_and_gradients(tiny_params, _batch(small_split, [0, 1, 2, 3]), ObjectiveConfig())
        for n in g12:
            np.testing.assert_allclose(g12[n], g1.get_or_zero(tiny_params, n)
                                       + g2.get_or_zero(tiny_params, n), atol=1e-8)

    def test_finite_differences_on_model(self, small_split, tiny_model):
        params = init_params(tiny_model, seed=2, gain=np.sqrt(6.0))
        err = finite_diff_check(params, _batch(small_split, [0, 1]), ObjectiveConfig(),
                                epsilon=1e-6, max_coords=60)
        assert err <= 1e-4

    def test_quadratic_toy(self):
        p = ParameterStore()
        p.add("t", np.random.default_rng(0).normal(size=30), "image_encoder")

        def quad(ps):
            t = ps["t"]
            return 0.5 * float(t @ t), GradientSet(t=t.copy())

        assert finite_diff_check(p, loss_fn=quad, epsilon=1e-4) <= 1e-9

    @pytest.mark.parametrize("eps", [1e-8, 1e-2])
    def test_epsilon_range(self, tiny_params, eps):
        with pytest.raises(ParameterError):
            finite_diff_check(tiny_params, None, None, epsilon=eps)
