"""Reconstruction-based detection: a dense autoencoder is trained to copy
normal windows; windows that reconstruct poorly are anomalous.

The decision threshold is the nearest-rank quantile of reconstruction errors
on a held-out slice of the (assumed normal) training windows.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..autodiff import Adam, ParamSet, Tensor, linear, mse, relu
from ..exceptions import StateError, TrainingError
from ..ingest import EventVocabulary
from ..rng import Rng, derive_seed
from ..sequencing import EventSequence, Window, WindowSpec, make_windows
from .base import WINDOW, BaseDetector, Verdict, combine_window_verdicts


def nearest_rank_quantile(values, q: float) -> float:
    """Nearest-rank quantile: the ceil(q*N)-th smallest value (1-based)."""
    ordered = sorted(float(v) for v in values)
    if not ordered:
        raise TrainingError("cannot take a quantile of an empty sample")
    if not 0.0 < q <= 1.0:
        raise ValueError("quantile must be in (0, 1]")
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


class AutoencoderDetector(BaseDetector):
    """Dense two-layer encoder/decoder over flattened window features.

    Index mode feeds one-hot rows per position, semantic mode the frozen
    template vectors; either way the bottleneck is ``hidden // 4`` wide and
    the loss is the mean squared reconstruction distance.
    """

    kind = "reconstruct"
    family = "autoencoder"

    def __init__(self, window_size: int = 10, step_size: int = 1,
                 hidden: int = 64, epochs: int = 10, batch_size: int = 128,
                 lr: float = 1e-3, threshold_quantile: float = 0.98,
                 validation_fraction: float = 0.1, seed: int = 0, encoder=None):
        self.window_size = window_size
        self.step_size = step_size
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.threshold_quantile = threshold_quantile
        self.validation_fraction = validation_fraction
        self.seed = seed
        self.encoder = encoder

    # features ---------------------------------------------------------------

    def _feature_rows(self, vocab: EventVocabulary | None) -> np.ndarray:
        """Per-event feature rows: identity (one-hot) or semantic vectors."""
        if self.encoder is not None and vocab is not None:
            return self.encoder.table_for(vocab)
        if self.is_semantic:
            return self.params_["input_table"].data
        return np.eye(self.vocab_size_ + 1)

    def _window_features(self, windows_ids: np.ndarray, rows: np.ndarray) -> np.ndarray:
        gathered = rows[windows_ids]                      # (N, m, d)
        return gathered.reshape(windows_ids.shape[0], -1)

    def _collect_ids(self, sequences: list[EventSequence], clamp: int
                     ) -> tuple[np.ndarray, np.ndarray]:
        """Window id matrix plus a mask of windows from believed-normal
        sequences (label missing or normal); only those calibrate the
        threshold."""
        spec = WindowSpec(self.window_size, self.step_size)
        ids, normal = [], []
        for seq in sequences:
            for w in make_windows(seq, spec):
                ids.append(self._encode_events(w.inputs, clamp))
                normal.append(not seq.is_anomalous)
        if not ids:
            return (np.empty((0, self.window_size), dtype=np.int64),
                    np.empty(0, dtype=bool))
        return np.asarray(ids, dtype=np.int64), np.asarray(normal, dtype=bool)

    # training ----------------------------------------------------------------

    def fit(self, sequences: list[EventSequence], vocab: EventVocabulary):
        start = time.perf_counter()
        n = len(vocab)
        self.vocab_size_ = n
        ids, normal_mask = self._collect_ids(sequences, n)
        if ids.shape[0] == 0:
            raise TrainingError("no training windows: every sequence is too short")

        params = ParamSet(derive_seed(self.seed, self.family))
        if self.encoder is not None:
            rows = self.encoder.table_for(vocab)
            params.constant("input_table", rows)
        else:
            rows = np.eye(n + 1)
        feature_dim = rows.shape[1] * self.window_size
        bottleneck = max(1, self.hidden // 4)
        # one-hot windows drive only window_size of the feature units, so the
        # first layer scales by the active count, not the nominal width
        active = self.window_size if self.encoder is None else feature_dim
        params.uniform("enc.w1", (feature_dim, self.hidden), fan_in=active)
        params.zeros("enc.b1", (self.hidden,))
        params.uniform("enc.w2", (self.hidden, bottleneck), fan_in=self.hidden)
        params.zeros("enc.b2", (bottleneck,))
        params.uniform("dec.w1", (bottleneck, self.hidden), fan_in=bottleneck)
        params.zeros("dec.b1", (self.hidden,))
        params.uniform("dec.w2", (self.hidden, feature_dim), fan_in=self.hidden)
        params.zeros("dec.b2", (feature_dim,))
        self.params_ = params
        self.feature_dim_ = feature_dim

        # hold out a normal validation slice for threshold calibration;
        # windows from labeled-anomalous sequences never calibrate it
        order_rng = Rng(derive_seed(self.seed, self.family, "order"))
        perm = order_rng.permutation(ids.shape[0])
        normal_positions = [i for i in perm if normal_mask[i]]
        if not normal_positions:
            raise TrainingError("validation slice is empty: no normal windows")
        val_count = max(1, int(round(self.validation_fraction * ids.shape[0])))
        val_positions = set(normal_positions[:val_count])
        val_ids = ids[sorted(val_positions)]
        train_ids = ids[[i for i in perm if i not in val_positions]]

        features = self._window_features(train_ids, rows)
        optimizer = Adam(self.lr)
        losses = []
        count = features.shape[0]
        for _ in range(self.epochs):
            epoch_perm = order_rng.permutation(count)
            total = 0.0
            for lo in range(0, count, self.batch_size):
                batch = features[epoch_perm[lo:lo + self.batch_size]]
                x = Tensor(batch)
                loss = mse(self._reconstruct(params, x), x)
                params.zero_grad()
                loss.backward()
                optimizer.step(params)
                total += loss.item() * batch.shape[0]
            losses.append(total / count if count else 0.0)
        self.epoch_losses_ = losses

        val_errors = self._errors_for_ids(val_ids, rows)
        self.threshold_ = nearest_rank_quantile(val_errors, self.threshold_quantile)
        self.training_seconds_ = time.perf_counter() - start
        return self

    def _reconstruct(self, params: ParamSet, x: Tensor) -> Tensor:
        h = relu(linear(x, params["enc.w1"], params["enc.b1"]))
        z = linear(h, params["enc.w2"], params["enc.b2"])
        h2 = relu(linear(z, params["dec.w1"], params["dec.b1"]))
        return linear(h2, params["dec.w2"], params["dec.b2"])

    def _reconstruct_np(self, x: np.ndarray) -> np.ndarray:
        p = self.params_
        h = np.maximum(x @ p["enc.w1"].data + p["enc.b1"].data, 0.0)
        z = h @ p["enc.w2"].data + p["enc.b2"].data
        h2 = np.maximum(z @ p["dec.w1"].data + p["dec.b1"].data, 0.0)
        return h2 @ p["dec.w2"].data + p["dec.b2"].data

    def _errors_for_ids(self, ids: np.ndarray, rows: np.ndarray) -> np.ndarray:
        if ids.shape[0] == 0:
            return np.empty(0)
        x = self._window_features(ids, rows)
        recon = self._reconstruct_np(x)
        return ((recon - x) ** 2).mean(axis=1)

    # detection -----------------------------------------------------------------

    def reconstruction_error(self, window: Window,
                             vocab: EventVocabulary | None = None) -> float:
        self._require_fitted()
        rows = self._feature_rows(vocab)
        clamp = len(vocab) if (self.encoder is not None and vocab is not None) \
            else self.vocab_size_
        ids = np.asarray([self._encode_events(window.inputs, clamp)], dtype=np.int64)
        return float(self._errors_for_ids(ids, rows)[0])

    def detect_window(self, window: Window,
                      vocab: EventVocabulary | None = None) -> Verdict:
        """Anomalous iff the reconstruction error strictly exceeds the
        calibrated threshold; the error itself is the score."""
        if getattr(self, "threshold_", None) is None:
            raise StateError("autoencoder threshold not set; fit the detector first")
        error = self.reconstruction_error(window, vocab)
        return Verdict(level=WINDOW, anomalous=error > self.threshold_,
                       score=error, position=window.position)

    def predict(self, sequences: list[EventSequence],
                vocab: EventVocabulary | None = None) -> list[Verdict]:
        if getattr(self, "threshold_", None) is None:
            raise StateError("autoencoder threshold not set; fit the detector first")
        rows = self._feature_rows(vocab)
        clamp = len(vocab) if (self.encoder is not None and vocab is not None) \
            else self.vocab_size_
        spec = WindowSpec(self.window_size, self.step_size)
        verdicts = []
        for seq in sequences:
            windows = make_windows(seq, spec)
            if not windows:
                verdicts.append(combine_window_verdicts([]))
                continue
            ids = np.asarray([self._encode_events(w.inputs, clamp) for w in windows],
                             dtype=np.int64)
            errors = self._errors_for_ids(ids, rows)
            window_verdicts = [
                Verdict(level=WINDOW, anomalous=float(e) > self.threshold_,
                        score=float(e), position=w.position)
                for e, w in zip(errors, windows)
            ]
            verdicts.append(combine_window_verdicts(window_verdicts))
        return verdicts
