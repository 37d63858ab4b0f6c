from .base import (
    BaseDetector,
    Verdict,
    combine_window_verdicts,
    target_ranks,
)
from .forecast import LstmForecastDetector, TransformerForecastDetector
from .autoencoder import AutoencoderDetector, nearest_rank_quantile
from .supervised import BilstmAttentionDetector, CnnDetector
from .config import (
    DetectorConfig,
    FAMILIES,
    FORECAST_FAMILIES,
    SUPERVISED_FAMILIES,
    UNSUPERVISED_FAMILIES,
    build_detector,
    load_detector,
    make_encoder,
    save_detector,
)

__all__ = [
    "BaseDetector", "Verdict", "combine_window_verdicts", "target_ranks",
    "LstmForecastDetector", "TransformerForecastDetector",
    "AutoencoderDetector", "nearest_rank_quantile",
    "BilstmAttentionDetector", "CnnDetector",
    "DetectorConfig", "FAMILIES", "FORECAST_FAMILIES", "SUPERVISED_FAMILIES",
    "UNSUPERVISED_FAMILIES", "build_detector", "load_detector", "make_encoder",
    "save_detector",
]
