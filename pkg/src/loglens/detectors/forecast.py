"""Forecasting detectors: predict the next event id from the preceding window
and alert when the observed event falls outside the model's top-k guesses.

Two architectures share the training and decision logic: a stacked LSTM and a
Transformer encoder with multi-head self-attention. Both support index inputs
(a trainable event embedding) and semantic inputs (frozen word-average
vectors), and both emit their softmax over event ids, never over semantic
space.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from ..autodiff import (
    Adam,
    ParamSet,
    Tensor,
    attention_params,
    cross_entropy,
    embedding_lookup,
    linear,
    lstm_params,
    multihead_attention,
    relu,
    run_lstm,
    sinusoidal_encoding,
)
from ..exceptions import TrainingError
from ..ingest import EventVocabulary
from ..rng import Rng, derive_seed
from ..sequencing import EventSequence, Window, WindowSpec, make_windows
from .base import WINDOW, BaseDetector, Verdict, combine_window_verdicts, target_ranks

logger = logging.getLogger(__name__)


class _ForecastBase(BaseDetector):
    kind = "forecast"

    def _build_params(self, vocab: EventVocabulary) -> ParamSet:
        raise NotImplementedError

    def _logits(self, params: ParamSet, table, ids: np.ndarray) -> Tensor:
        raise NotImplementedError

    # training -------------------------------------------------------------

    def _collect_windows(self, sequences: list[EventSequence], clamp: int):
        spec = WindowSpec(self.window_size, self.step_size)
        inputs, targets = [], []
        for seq in sequences:
            for w in make_windows(seq, spec):
                inputs.append(self._encode_events(w.inputs, clamp))
                targets.append(w.target if w.target < clamp else clamp)
        if not inputs:
            return np.empty((0, self.window_size), dtype=np.int64), np.empty(0, dtype=np.int64)
        return np.asarray(inputs, dtype=np.int64), np.asarray(targets, dtype=np.int64)

    def fit(self, sequences: list[EventSequence], vocab: EventVocabulary):
        """Train next-event prediction on windows from (assumed normal)
        sequences; anomaly stripping is the caller's responsibility."""
        start = time.perf_counter()
        n = len(vocab)
        ids, targets = self._collect_windows(sequences, n)
        if ids.shape[0] == 0:
            raise TrainingError("no training windows: every sequence is too short")
        self.vocab_size_ = n
        self.n_classes_ = n + 1
        params = self._build_params(vocab)
        self.params_ = params
        self.epoch_losses_ = self._train_loop(params, ids, targets)
        self.training_seconds_ = time.perf_counter() - start
        return self

    def _train_loop(self, params: ParamSet, ids: np.ndarray,
                    targets: np.ndarray) -> list[float]:
        table = params["input_table"]
        optimizer = Adam(self.lr)
        order_rng = Rng(derive_seed(self.seed, self.family, "order"))
        losses = []
        count = ids.shape[0]
        for _ in range(self.epochs):
            perm = order_rng.permutation(count)
            total = 0.0
            for lo in range(0, count, self.batch_size):
                batch = perm[lo:lo + self.batch_size]
                loss = cross_entropy(self._logits(params, table, ids[batch]),
                                     targets[batch])
                params.zero_grad()
                loss.backward()
                optimizer.step(params)
                total += loss.item() * len(batch)
            losses.append(total / count)
        return losses

    # detection ------------------------------------------------------------

    def _window_probs(self, ids: np.ndarray, table) -> np.ndarray:
        logits = self._logits(self.params_, table, ids).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def detect_window(self, window: Window, vocab: EventVocabulary | None = None) -> Verdict:
        """Top-k verdict for one window: anomalous iff the observed target is
        not among the k most probable events (ties count as inside)."""
        self._require_fitted()
        table, clamp = self._input_table(vocab)
        ids = np.asarray([self._encode_events(window.inputs, clamp)], dtype=np.int64)
        target = window.target if window.target < self.vocab_size_ else self.vocab_size_
        probs = self._window_probs(ids, table)
        rank = int(target_ranks(probs, np.asarray([target]))[0])
        return Verdict(level=WINDOW, anomalous=rank > self.k, score=float(rank),
                       position=window.position)

    def predict(self, sequences: list[EventSequence],
                vocab: EventVocabulary | None = None) -> list[Verdict]:
        """Sequence-level verdicts: a sequence is anomalous iff any of its
        windows is; windowless (short) sequences are verdicted normal."""
        self._require_fitted()
        table, clamp = self._input_table(vocab)
        spec = WindowSpec(self.window_size, self.step_size)
        all_inputs, all_targets, bounds = [], [], []
        for seq in sequences:
            windows = make_windows(seq, spec)
            if not windows:
                # audit trail: short sequences carry no observable evidence
                logger.debug("sequence %s has %d events (<= window size %d); "
                             "verdicted normal", seq.origin, len(seq.events),
                             spec.window_size)
            start = len(all_inputs)
            for w in windows:
                all_inputs.append(self._encode_events(w.inputs, clamp))
                all_targets.append(w.target if w.target < self.vocab_size_
                                   else self.vocab_size_)
            bounds.append((start, len(all_inputs),
                           [w.position for w in windows]))

        ranks = np.empty(len(all_inputs), dtype=np.int64)
        if all_inputs:
            ids = np.asarray(all_inputs, dtype=np.int64)
            targets = np.asarray(all_targets, dtype=np.int64)
            for lo in range(0, len(ids), 1024):
                hi = min(lo + 1024, len(ids))
                probs = self._window_probs(ids[lo:hi], table)
                ranks[lo:hi] = target_ranks(probs, targets[lo:hi])

        verdicts = []
        for start, end, positions in bounds:
            window_verdicts = [
                Verdict(level=WINDOW, anomalous=int(r) > self.k, score=float(r),
                        position=pos)
                for r, pos in zip(ranks[start:end], positions)
            ]
            verdicts.append(combine_window_verdicts(window_verdicts))
        return verdicts


class LstmForecastDetector(_ForecastBase):
    """Stacked-LSTM next-event forecaster over event index or semantic
    inputs; the original forecasting formulation for log anomaly detection."""

    family = "lstm_forecast"

    def __init__(self, window_size: int = 10, step_size: int = 1, k: int = 10,
                 hidden: int = 64, layers: int = 2, embed_dim: int = 16,
                 epochs: int = 10, batch_size: int = 128, lr: float = 1e-3,
                 seed: int = 0, encoder=None):
        self.window_size = window_size
        self.step_size = step_size
        self.k = k
        self.hidden = hidden
        self.layers = layers
        self.embed_dim = embed_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.encoder = encoder

    def _build_params(self, vocab: EventVocabulary) -> ParamSet:
        ps = ParamSet(derive_seed(self.seed, self.family))
        if self.encoder is not None:
            ps.constant("input_table", self.encoder.table_for(vocab))
            in_dim = self.encoder.dim
        else:
            ps.uniform("input_table", (vocab.n_ids, self.embed_dim),
                       fan_in=self.embed_dim)
            in_dim = self.embed_dim
        for layer in range(self.layers):
            lstm_params(ps, f"lstm{layer}", in_dim, self.hidden)
            in_dim = self.hidden
        ps.uniform("out.w", (self.hidden, vocab.n_ids), fan_in=self.hidden)
        ps.zeros("out.b", (vocab.n_ids,))
        return ps

    def _logits(self, params: ParamSet, table, ids: np.ndarray) -> Tensor:
        xs = [embedding_lookup(table, ids[:, t]) for t in range(ids.shape[1])]
        for layer in range(self.layers):
            xs = run_lstm(xs, params, f"lstm{layer}", self.hidden)
        return linear(xs[-1], params["out.w"], params["out.b"])


class TransformerForecastDetector(_ForecastBase):
    """Transformer-encoder forecaster: sinusoidal positions, multi-head
    self-attention blocks with residuals, mean-pooled readout. No causal mask;
    the whole window jointly predicts one following event."""

    family = "transformer_forecast"

    def __init__(self, window_size: int = 10, step_size: int = 1, k: int = 10,
                 hidden: int = 64, layers: int = 2, heads: int = 4,
                 embed_dim: int = 16, epochs: int = 10, batch_size: int = 128,
                 lr: float = 1e-3, seed: int = 0, encoder=None):
        self.window_size = window_size
        self.step_size = step_size
        self.k = k
        self.hidden = hidden
        self.layers = layers
        self.heads = heads
        self.embed_dim = embed_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.encoder = encoder

    def _build_params(self, vocab: EventVocabulary) -> ParamSet:
        ps = ParamSet(derive_seed(self.seed, self.family))
        if self.encoder is not None:
            ps.constant("input_table", self.encoder.table_for(vocab))
            in_dim = self.encoder.dim
        else:
            ps.uniform("input_table", (vocab.n_ids, self.embed_dim),
                       fan_in=self.embed_dim)
            in_dim = self.embed_dim
        ps.uniform("proj.w", (in_dim, self.hidden), fan_in=in_dim)
        ps.zeros("proj.b", (self.hidden,))
        for layer in range(self.layers):
            attention_params(ps, f"block{layer}.attn", self.hidden)
            ps.uniform(f"block{layer}.ff.w1", (self.hidden, 2 * self.hidden),
                       fan_in=self.hidden)
            ps.zeros(f"block{layer}.ff.b1", (2 * self.hidden,))
            ps.uniform(f"block{layer}.ff.w2", (2 * self.hidden, self.hidden),
                       fan_in=2 * self.hidden)
            ps.zeros(f"block{layer}.ff.b2", (self.hidden,))
        ps.uniform("out.w", (self.hidden, vocab.n_ids), fan_in=self.hidden)
        ps.zeros("out.b", (vocab.n_ids,))
        return ps

    def _position_table(self, length: int) -> np.ndarray:
        cached = getattr(self, "_positions", None)
        if cached is None or cached.shape != (length, self.hidden):
            cached = sinusoidal_encoding(length, self.hidden)
            self._positions = cached
        return cached

    def _logits(self, params: ParamSet, table, ids: np.ndarray) -> Tensor:
        x = embedding_lookup(table, ids)                       # (B, m, d_in)
        x = linear(x, params["proj.w"], params["proj.b"])      # (B, m, H)
        x = x + Tensor(self._position_table(ids.shape[1]))
        for layer in range(self.layers):
            p = lambda name: params[f"block{layer}.{name}"]
            x = x + multihead_attention(x, self.heads, p("attn.wq"), p("attn.wk"),
                                        p("attn.wv"), p("attn.wo"))
            hidden = relu(linear(x, p("ff.w1"), p("ff.b1")))
            x = x + linear(hidden, p("ff.w2"), p("ff.b2"))
        pooled = x.mean(axis=1)
        return linear(pooled, params["out.w"], params["out.b"])
