import numpy as np
import pytest

from loglens.detectors import (
    AutoencoderDetector,
    BilstmAttentionDetector,
    CnnDetector,
    DetectorConfig,
    LstmForecastDetector,
    TransformerForecastDetector,
    Verdict,
    build_detector,
    combine_window_verdicts,
    load_detector,
    nearest_rank_quantile,
    save_detector,
    target_ranks,
)
from loglens.exceptions import StateError, TrainingError
from loglens.ingest import EventVocabulary
from loglens.rng import Rng
from loglens.sequencing import EventSequence, SemanticEncoder, Window


VOCAB = EventVocabulary(["alpha start", "beta step", "gamma done", "fatal error"])


def pattern_sequences(n=30, label="normal"):
    return [EventSequence([0, 1, 2] * 8, label, f"s{i}") for i in range(n)]


def random_sequences(rng, n, length=12, vocab_size=3, error_rate=0.0):
    seqs = []
    for i in range(n):
        events = [rng.integer(vocab_size) for _ in range(length)]
        label = "normal"
        if error_rate and rng.random() < error_rate:
            events[rng.integer(length)] = 3
            label = "anomaly"
        seqs.append(EventSequence(events, label, f"r{i}"))
    return seqs


def fast_lstm(**kw):
    defaults = dict(window_size=2, step_size=1, k=1, hidden=16, layers=1,
                    embed_dim=8, epochs=8, batch_size=32, lr=5e-3, seed=1)
    defaults.update(kw)
    return LstmForecastDetector(**defaults)


class TestTopKRule:
    def test_rank_three_with_k_two_is_anomalous(self):
        probs = np.array([[0.5, 0.3, 0.2]])
        rank = int(target_ranks(probs, np.array([2]))[0])
        assert rank == 3
        assert rank > 2          # anomalous at k=2
        assert not rank > 3      # normal at k=3

    def test_tie_with_kth_probability_counts_as_inside(self):
        probs = np.array([[0.4, 0.3, 0.3]])
        assert int(target_ranks(probs, np.array([2]))[0]) == 2

    def test_k_equal_class_count_never_anomalous(self):
        rng = Rng(4)
        probs = np.asarray([[rng.random() for _ in range(6)] for _ in range(50)])
        probs /= probs.sum(axis=1, keepdims=True)
        targets = np.asarray([rng.integer(6) for _ in range(50)])
        ranks = target_ranks(probs, targets)
        assert np.all(ranks <= 6)


class TestSequenceVerdict:
    def window(self, anomalous, score=1.0, position=0):
        return Verdict(level="window", anomalous=anomalous, score=score,
                       position=position)

    def test_all_normal(self):
        combined = combine_window_verdicts([self.window(False), self.window(False)])
        assert not combined.anomalous and combined.level == "sequence"

    def test_any_anomalous_window_marks_sequence(self):
        combined = combine_window_verdicts(
            [self.window(False, 1.0), self.window(True, 7.0, position=3)])
        assert combined.anomalous
        assert combined.score == 7.0
        assert combined.position == 3

    def test_empty_window_list_is_normal(self):
        assert not combine_window_verdicts([]).anomalous

    def test_monotone_in_added_anomalies(self):
        base = [self.window(True, 2.0)]
        assert combine_window_verdicts(base).anomalous
        assert combine_window_verdicts(base + [self.window(False)]).anomalous


class TestForecastTraining:
    def test_repeating_pattern_predicts_successor(self):
        det = fast_lstm(epochs=15).fit(pattern_sequences(), VOCAB)
        probs = det._window_probs(np.array([[0, 1]]), det.params_["input_table"])
        assert probs[0, 2] > 0.9

    def test_zero_epochs_leaves_params_at_init(self):
        det = fast_lstm(epochs=0)
        det.fit(pattern_sequences(), VOCAB)
        fresh = det._build_params(VOCAB)
        for name in det.params_.names():
            assert np.array_equal(det.params_[name].data, fresh[name].data)

    def test_same_seed_bit_identical_params(self):
        a = fast_lstm(epochs=3).fit(pattern_sequences(), VOCAB)
        b = fast_lstm(epochs=3).fit(pattern_sequences(), VOCAB)
        for name in a.params_.names():
            assert np.array_equal(a.params_[name].data, b.params_[name].data)

    def test_final_epoch_loss_not_above_first(self):
        det = fast_lstm(epochs=10).fit(pattern_sequences(), VOCAB)
        assert det.epoch_losses_[-1] <= det.epoch_losses_[0]

    def test_empty_window_set_raises(self):
        short = [EventSequence([0, 1], "normal", "s")]
        with pytest.raises(TrainingError):
            fast_lstm(window_size=5).fit(short, VOCAB)

    def test_short_sequences_verdicted_normal(self):
        det = fast_lstm(epochs=2).fit(pattern_sequences(), VOCAB)
        (verdict,) = det.predict([EventSequence([0, 1], None, "tiny")])
        assert not verdict.anomalous and verdict.score == 0.0

    def test_k_at_class_count_flags_nothing(self):
        det = fast_lstm(epochs=2).fit(pattern_sequences(), VOCAB)
        det.k = VOCAB.n_ids
        rng = Rng(9)
        wild = random_sequences(rng, 20, vocab_size=4)
        assert sum(v.anomalous for v in det.predict(wild)) == 0

    def test_topk_monotone_and_empty_at_vocab_size(self):
        det = fast_lstm(epochs=4).fit(pattern_sequences(), VOCAB)
        rng = Rng(10)
        test = random_sequences(rng, 30, vocab_size=4)
        previous = None
        for k in range(1, VOCAB.n_ids + 1):
            det.k = k
            flagged = {i for i, v in enumerate(det.predict(test)) if v.anomalous}
            if previous is not None:
                assert flagged <= previous
            previous = flagged
        assert previous == set()

    def test_transformer_learns_pattern(self):
        det = TransformerForecastDetector(
            window_size=2, k=1, hidden=16, layers=1, heads=2, embed_dim=8,
            epochs=15, batch_size=32, lr=5e-3, seed=1).fit(pattern_sequences(), VOCAB)
        bad = EventSequence([0, 1, 0] + [0, 1, 2] * 3, "anomaly", "bad")
        good = EventSequence([0, 1, 2] * 4, "normal", "good")
        assert det.predict([bad])[0].anomalous
        assert not det.predict([good])[0].anomalous


class TestSemanticMode:
    def semantic_detector(self, **kw):
        encoder = SemanticEncoder(VOCAB, dim=8, seed=5)
        return fast_lstm(encoder=encoder, **kw), encoder

    def test_input_table_frozen_through_training(self):
        det, encoder = self.semantic_detector(epochs=3)
        before = encoder.table_for(VOCAB).copy()
        det.fit(pattern_sequences(), VOCAB)
        assert np.array_equal(det.params_["input_table"].data, before)

    def test_extended_vocab_rows_used_without_retraining(self):
        det, _ = self.semantic_detector(epochs=3)
        det.fit(pattern_sequences(), VOCAB)
        extended = VOCAB.extended(["gamma done now"])
        seq = EventSequence([0, 1, 2, 0, 1, 4], None, "x")
        verdicts = det.predict([seq], vocab=extended)
        assert len(verdicts) == 1  # runs without retraining or index errors


class TestAutoencoder:
    def test_nearest_rank_quantile_definition(self):
        values = list(range(1, 101))
        assert nearest_rank_quantile(values, 0.95) == 95
        assert nearest_rank_quantile(values, 1.0) == 100
        assert nearest_rank_quantile([7.0], 0.5) == 7.0

    def fit_ae(self, **kw):
        defaults = dict(window_size=2, hidden=32, epochs=15, batch_size=32,
                        lr=5e-3, threshold_quantile=0.99, seed=1)
        defaults.update(kw)
        return AutoencoderDetector(**defaults).fit(pattern_sequences(), VOCAB)

    def test_training_windows_reconstruct_better_than_random(self):
        det = self.fit_ae(window_size=4)
        rng = Rng(2)
        wins = 0
        for _ in range(100):
            normal = Window(inputs=[0, 1, 2, 0], target=1, position=4)
            noise = Window(inputs=[rng.integer(4) for _ in range(4)], target=0,
                           position=4)
            if det.reconstruction_error(normal) <= det.reconstruction_error(noise):
                wins += 1
        assert wins >= 90

    def test_error_equal_to_threshold_is_normal(self):
        det = self.fit_ae()
        window = Window(inputs=[0, 1], target=2, position=2)
        det.threshold_ = det.reconstruction_error(window)
        assert not det.detect_window(window).anomalous
        det.threshold_ = det.reconstruction_error(window) / 2.0
        assert det.detect_window(window).anomalous

    def test_raising_quantile_never_increases_anomaly_count(self):
        rng = Rng(3)
        test = random_sequences(rng, 40, vocab_size=4)
        counts = []
        for q in (0.5, 0.8, 0.9, 0.99, 1.0):
            det = self.fit_ae(threshold_quantile=q, epochs=5)
            counts.append(sum(v.anomalous for v in det.predict(test)))
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_detect_without_threshold_raises(self):
        det = AutoencoderDetector(window_size=2)
        with pytest.raises(StateError):
            det.detect_window(Window(inputs=[0, 1], target=2, position=2))

    def test_determinism(self):
        a = self.fit_ae(epochs=3)
        b = self.fit_ae(epochs=3)
        assert a.threshold_ == b.threshold_
        for name in a.params_.names():
            assert np.array_equal(a.params_[name].data, b.params_[name].data)


class TestSupervised:
    def toy_data(self):
        rng = Rng(7)
        seqs = random_sequences(rng, 80, vocab_size=3)
        for i in range(0, 80, 4):
            seqs[i].events[rng.integer(len(seqs[i].events))] = 3
            seqs[i].label = "anomaly"
        return seqs

    def test_separable_labels_reach_high_accuracy(self):
        seqs = self.toy_data()
        for cls in (BilstmAttentionDetector, CnnDetector):
            det = cls(max_len=12, embed_dim=8, epochs=20, batch_size=32,
                      lr=1e-2, seed=1, **({"hidden": 16} if cls is BilstmAttentionDetector
                                          else {"n_filters": 16})).fit(seqs, VOCAB)
            verdicts = det.predict(seqs)
            accuracy = np.mean([v.anomalous == s.is_anomalous
                                for v, s in zip(verdicts, seqs)])
            assert accuracy >= 0.99, f"{cls.__name__} accuracy {accuracy}"

    def test_single_class_data_raises(self):
        with pytest.raises(TrainingError):
            BilstmAttentionDetector(max_len=8, epochs=1).fit(
                pattern_sequences(5), VOCAB)

    def test_zero_attention_weights_reduce_to_bias(self):
        seqs = self.toy_data()
        det = BilstmAttentionDetector(max_len=12, hidden=8, embed_dim=4,
                                      epochs=1, seed=1).fit(seqs, VOCAB)
        det.params_["attn.w"].data[:] = 0.0
        probs = [det.classify(s).score for s in seqs[:6]]
        assert np.allclose(probs, probs[0])  # depends only on the output bias
        b = det.params_["out.b"].data
        expected = np.exp(b[1]) / np.exp(b).sum()
        assert probs[0] == pytest.approx(expected)

    def test_attention_weights_in_open_unit_interval(self):
        seqs = self.toy_data()
        det = BilstmAttentionDetector(max_len=12, hidden=8, embed_dim=4,
                                      epochs=3, seed=1).fit(seqs, VOCAB)
        from loglens.autodiff import embedding_lookup, run_lstm, stack, concat, tanh
        ids = det._padded_ids(seqs[:4], det.vocab_size_)
        xs = [embedding_lookup(det.params_["input_table"], ids[:, t])
              for t in range(ids.shape[1])]
        fw = run_lstm(xs, det.params_, "fw", det.hidden)
        bw = run_lstm(list(reversed(xs)), det.params_, "bw", det.hidden)
        bw.reverse()
        hidden = stack([concat([f, b], axis=1) for f, b in zip(fw, bw)], axis=1)
        weights = tanh((hidden * det.params_["attn.w"]).sum(axis=2)).data
        assert np.all(np.abs(weights) < 1.0)

    def test_cnn_embedding_matrix_shape(self):
        seqs = self.toy_data()
        det = CnnDetector(max_len=12, n_filters=8, embed_dim=6, epochs=1,
                          seed=1).fit(seqs, VOCAB)
        assert det.params_["input_table"].shape == (len(VOCAB) + 1, 6)

    def test_probability_half_is_normal(self):
        verdict = Verdict(level="sequence", anomalous=0.5 > 0.5, score=0.5)
        assert not verdict.anomalous

    def test_classify_pure_function(self):
        seqs = self.toy_data()
        det = CnnDetector(max_len=12, n_filters=8, embed_dim=6, epochs=2,
                          seed=1).fit(seqs, VOCAB)
        v1 = det.classify(seqs[0])
        v2 = det.classify(seqs[0])
        assert v1 == v2

    def test_supervised_determinism(self):
        seqs = self.toy_data()
        runs = [CnnDetector(max_len=12, n_filters=8, embed_dim=6, epochs=2,
                            seed=9).fit(seqs, VOCAB) for _ in range(2)]
        for name in runs[0].params_.names():
            assert np.array_equal(runs[0].params_[name].data,
                                  runs[1].params_[name].data)


class TestPersistence:
    def test_round_trip_predictions_identical(self, tmp_path):
        config = DetectorConfig(family="lstm_forecast", k=1, window_size=2,
                                hidden=16, layers=1, embed_dim=8, epochs=4,
                                batch_size=32, seed=1)
        det = build_detector(config, VOCAB).fit(pattern_sequences(), VOCAB)
        save_detector(det, config, tmp_path / "model")
        loaded, loaded_config = load_detector(tmp_path / "model")
        assert loaded_config == config
        rng = Rng(11)
        test = random_sequences(rng, 10, vocab_size=4)
        original = det.predict(test)
        restored = loaded.predict(test)
        assert original == restored

    def test_semantic_round_trip_uses_stored_table(self, tmp_path):
        config = DetectorConfig(family="cnn", semantics=True, max_len=12,
                                hidden=8, embed_dim=8, epochs=2, batch_size=32,
                                seed=3)
        rng = Rng(13)
        seqs = random_sequences(rng, 40, vocab_size=3, error_rate=0.4)
        if not any(s.is_anomalous for s in seqs):
            seqs[0].label = "anomaly"
        det = build_detector(config, VOCAB).fit(seqs, VOCAB)
        save_detector(det, config, tmp_path / "model")
        loaded, _ = load_detector(tmp_path / "model")
        assert loaded.is_semantic
        assert loaded.predict(seqs[:5]) == det.predict(seqs[:5], vocab=None)

    def test_get_set_params(self):
        det = LstmForecastDetector(k=7)
        assert det.get_params()["k"] == 7
        det.set_params(k=3, hidden=32)
        assert det.k == 3 and det.hidden == 32
        with pytest.raises(ValueError):
            det.set_params(bogus=1)
