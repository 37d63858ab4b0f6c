"""Shared detector machinery: estimator parameter handling, verdicts, and the
window-to-sequence decision rule."""

from __future__ import annotations

import inspect
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..exceptions import StateError
from ..ingest import EventVocabulary
from ..sequencing import EventSequence, SemanticEncoder, encode_indices

WINDOW = "window"
SEQUENCE = "sequence"


@dataclass
class Verdict:
    """Detection outcome at window or sequence level.

    ``score`` is family-specific: probability rank for forecasting,
    reconstruction error for the autoencoder, anomaly-class probability for
    supervised classifiers. ``position`` is the window's target index inside
    its sequence (window-level only).
    """

    level: str
    anomalous: bool
    score: float
    position: int | None = None


def combine_window_verdicts(verdicts: list[Verdict]) -> Verdict:
    """Sequence verdict: anomalous iff any window is; score is the max window
    score. An empty list (short sequence, no windows) is normal."""
    if not verdicts:
        return Verdict(level=SEQUENCE, anomalous=False, score=0.0)
    anomalous = any(v.anomalous for v in verdicts)
    score = max(v.score for v in verdicts)
    position = next((v.position for v in verdicts if v.anomalous), None)
    return Verdict(level=SEQUENCE, anomalous=anomalous, score=score, position=position)


def target_ranks(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Competition rank of each row's target probability (1 = most probable).

    Ties share the best rank, so a target tied with the k-th largest
    probability still counts as inside the top k.
    """
    target_p = probs[np.arange(len(targets)), targets]
    return 1 + (probs > target_p[:, None]).sum(axis=1)


class BaseDetector:
    """Estimator base: constructor arguments are hyperparameters, fitted state
    lives in trailing-underscore attributes, ``fit`` returns ``self``."""

    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [name for name in signature.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "BaseDetector":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items()
                         if k != "encoder")
        return f"{type(self).__name__}({args})"

    # fitted-state helpers -------------------------------------------------

    def _require_fitted(self) -> None:
        if getattr(self, "params_", None) is None:
            raise StateError(f"{type(self).__name__} is not fitted")

    @property
    def is_semantic(self) -> bool:
        if getattr(self, "encoder", None) is not None:
            return True
        return bool(getattr(self, "_loaded_semantic", False))

    def _input_table(self, vocab: EventVocabulary | None):
        """Input row matrix and the id space to encode events against.

        Semantic detectors given an (extended) vocabulary rebuild the frozen
        table from their encoder so unseen templates still get meaningful
        vectors; everything else clamps to the vocabulary seen at training.
        """
        encoder: SemanticEncoder | None = getattr(self, "encoder", None)
        if encoder is not None and vocab is not None:
            return Tensor(encoder.table_for(vocab)), len(vocab)
        return self.params_["input_table"], self.vocab_size_

    def _encode_events(self, events: list[int], clamp: int) -> list[int]:
        return encode_indices(events, clamp)

    def fit_predict(self, sequences: list[EventSequence], vocab: EventVocabulary,
                    **predict_kwargs) -> list[Verdict]:
        return self.fit(sequences, vocab).predict(sequences, **predict_kwargs)
