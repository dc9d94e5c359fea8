"""Time-to-go predictor package exports"""

from .dataset import (
    GeneratedDataset,
    Normalizer,
    TgoSample,
    generate_dataset,
    labels_from_trajectory,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .tgo_agent import (
    PredictorMetrics,
    TgoPredictor,
    evaluate_predictor,
    load_predictor,
    predict_tgo,
    save_predictor,
    train_predictor,
)
