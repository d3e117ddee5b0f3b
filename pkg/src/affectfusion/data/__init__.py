"""Feature/label ingestion, windowing, synthetic data and splits."""

from .dataset import (
    Sequence,
    Window,
    WindowedDataset,
    collate,
    list_feature_sequences,
    list_sequences,
    load_sequence,
    load_sequences,
    make_windows,
    split,
    window_starts,
    windows_from_sequences,
)
from .formats import (
    features_from_bytes,
    features_to_bytes,
    load_features,
    load_labels_expr,
    load_labels_va,
    write_features,
    write_labels_expr,
    write_labels_va,
)
from .synth import SyntheticSpec, synth_expr, synth_va, synthesize
