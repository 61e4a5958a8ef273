import numpy as np
import pytest

from twinseq.cells import StackConfig, init_stack, run_stack
from twinseq.core import ShapeError, count_ops, no_grad
from twinseq.data import FeatureSequence
from twinseq.eval import (
    SessionClosedError,
    StreamingSession,
    evaluate,
    frame_error_rate,
    posterior_to_likelihood,
    predict_offline,
    read_likelihoods,
    stream_utterance,
    strip_backward,
    write_likelihoods,
)


class TestFrameErrorRate:
    def test_all_correct(self):
        assert frame_error_rate(np.array([0, 1, 2]), [0, 1, 2]) == 0.0

    def test_one_of_four(self):
        assert frame_error_rate(np.array([0, 1, 2, 2]), [0, 1, 2, 3]) == 0.25

    def test_scores_use_lowest_id_on_ties(self):
        scores = np.array([[0.5, 0.5], [0.2, 0.8]])
        assert frame_error_rate(scores, [0, 1]) == 0.0

    def test_mask(self):
        assert frame_error_rate(np.array([0, 9]), [0, 1], mask=[True, False]) == 0.0

    def test_all_masked(self):
        with pytest.raises(ValueError):
            frame_error_rate(np.array([0, 1]), [0, 1], mask=[False, False])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            frame_error_rate(np.array([0, 1]), [0, 1, 2])


class TestLikelihood:
    def setup_method(self):
        rng = np.random.default_rng(0)
        p = rng.random((6, 4))
        self.post = p / p.sum(axis=1, keepdims=True)

    def test_uniform_priors_shift(self):
        out = posterior_to_likelihood(self.post, np.full(4, 0.25))
        np.testing.assert_allclose(out, np.log(self.post) + np.log(4), atol=1e-12)
        np.testing.assert_array_equal(out.argmax(1), self.post.argmax(1))

    def test_frequent_class_penalised(self):
        priors = np.array([0.7, 0.1, 0.1, 0.1])
        out = posterior_to_likelihood(self.post, priors)
        base = np.log(self.post)
        assert np.all(out[:, 0] - base[:, 0] < out[:, 1] - base[:, 1])

    def test_inverse(self):
        priors = np.array([0.4, 0.3, 0.2, 0.1])
        back = np.exp(posterior_to_likelihood(self.post, priors)) * priors
        np.testing.assert_allclose(back, self.post, atol=1e-9)

    def test_zero_prior(self):
        with pytest.raises(ValueError):
            posterior_to_likelihood(self.post, np.array([0.5, 0.5, 0.0, 0.0]))

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "lik.txt"
        write_likelihoods(path, [("a", self.post[:2]), ("b", self.post[2:])])
        back = read_likelihoods(path)
        assert [uid for uid, _ in back] == ["a", "b"]
        np.testing.assert_allclose(back[1][1], self.post[2:], rtol=1e-8)


def twin_model(input_size=4, seed=0, variant="ligru"):
    cfg = StackConfig(input_size=input_size, hidden_sizes=(6, 5), n_classes=7, variant=variant, mode="twin")
    return init_stack(cfg, seed, twin_init="independent")


class TestStrip:
    def test_outputs_identical(self):
        model = twin_model()
        stripped = strip_backward(model)
        rng = np.random.default_rng(1)
        with no_grad():
            for _ in range(10):
                x = rng.standard_normal((int(rng.integers(1, 15)), 4))
                a = run_stack(model, x).posteriors.numpy()
                b = run_stack(stripped, x).posteriors.numpy()
                np.testing.assert_array_equal(a, b)

    def test_structure_and_parameter_count(self):
        stripped = strip_backward(twin_model())
        assert stripped.backward is None and stripped.backward_classifier is None
        assert not any(n.startswith("backward") for n, _ in stripped.named_parameters())
        uni = init_stack(stripped.config, 3)
        assert stripped.count_parameters() == uni.count_parameters()

    def test_copy_is_independent(self):
        model = twin_model()
        stripped = strip_backward(model)
        model.forward[0].U["z"].data += 1.0
        assert not np.array_equal(model.forward[0].U["z"].data, stripped.forward[0].U["z"].data)

    def test_requires_twin(self):
        with pytest.raises(ValueError):
            strip_backward(strip_backward(twin_model()))

    def test_per_frame_op_count_matches_unidir(self):
        stripped = strip_backward(twin_model())
        uni = init_stack(stripped.config, 9)
        frames = np.random.default_rng(2).standard_normal((8, 4))
        with count_ops() as a:
            stream_utterance(stripped, frames)
        with count_ops() as b:
            stream_utterance(uni, frames)
        assert a == b


def forward_model(frame_dim, past, future, seed=0):
    cfg = StackConfig(input_size=frame_dim * (past + future + 1), hidden_sizes=(5,), n_classes=4,
                      variant="gru", mode="forward")
    return init_stack(cfg, seed)


class TestStreaming:
    def test_no_lookahead_emits_immediately(self):
        s = StreamingSession(forward_model(3, 0, 0))
        for i in range(4):
            out = s.push(np.ones(3))
            assert [e.t for e in out] == [i]
        assert s.finalize() == []

    def test_five_frame_lookahead(self):
        s = StreamingSession(forward_model(3, 0, 5), future=5)
        emitted = [len(s.push(np.zeros(3))) for _ in range(5)]
        assert emitted == [0] * 5
        out = s.push(np.zeros(3))
        assert [e.t for e in out] == [0]
        assert [e.t for e in s.finalize()] == [1, 2, 3, 4, 5]

    @pytest.mark.parametrize("past, future", [(0, 0), (0, 5), (2, 3), (1, 10)])
    def test_matches_offline_exactly(self, past, future):
        model = forward_model(3, past, future, seed=past + future)
        frames = np.random.default_rng(future).standard_normal((17, 3))
        np.testing.assert_array_equal(stream_utterance(model, frames, past, future),
                                      predict_offline(model, frames, past, future))

    def test_short_utterance(self):
        model = forward_model(2, 0, 5)
        frames = np.random.default_rng(0).standard_normal((2, 2))
        np.testing.assert_array_equal(stream_utterance(model, frames, 0, 5), predict_offline(model, frames, 0, 5))

    def test_emission_never_before_lookahead(self):
        s = StreamingSession(forward_model(2, 0, 3), future=3)
        for _ in range(20):
            s.push(np.zeros(2))
        s.finalize()
        # frame t + 3 (clipped to the last frame) must have been consumed
        assert all(consumed >= min(t + 3, 19) + 1 for t, consumed in s.log)
        assert len(s.log) == 20

    def test_use_after_finalize(self):
        s = StreamingSession(forward_model(2, 0, 0))
        s.finalize()
        with pytest.raises(SessionClosedError):
            s.push(np.zeros(2))
        with pytest.raises(SessionClosedError):
            s.finalize()

    def test_dimension_mismatch(self):
        s = StreamingSession(forward_model(2, 0, 0))
        with pytest.raises(ShapeError):
            s.push(np.zeros(3))

    def test_twin_model_rejected(self):
        with pytest.raises(ValueError):
            StreamingSession(twin_model())


class TestEvaluate:
    def test_matches_per_utterance_errors(self):
        model = twin_model(variant="gru")
        rng = np.random.default_rng(4)
        utts = [FeatureSequence(f"u{i}", rng.standard_normal((n, 4)), rng.integers(0, 7, n))
                for i, n in enumerate([5, 9, 3, 7])]
        res = evaluate(model, utts, batch_size=3)
        errors = sum(int((predict_offline(model, u.frames).argmax(1) != u.labels).sum()) for u in utts)
        assert res.errors == errors and res.n_frames == 24
        assert res.fer == errors / 24
        assert res.omega > 0

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate(twin_model(), [])
