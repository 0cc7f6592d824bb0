"""Joint CTC-attention speech recognition toolkit."""

import json as _json

from ._letr import (
    BLANK,
    EOS,
    SOS,
    UNK,
    DataError,
    NumericError,
    Vocabulary,
    aef_align,
    cer,
    collapse,
    ctc_loss,
    edit_distance,
    gate,
    greedy_1best,
    prefix_beam_nbest,
    run_cli,
)
from . import _letr

__all__ = [
    "BLANK", "EOS", "SOS", "UNK", "DataError", "NumericError", "Vocabulary", "aef_align", "cer", "collapse",
    "ctc_loss", "edit_distance", "gate", "greedy_1best", "prefix_beam_nbest", "run_cli", "synth_corpus", "train",
]


def _config_text(config):
    if config is None:
        return "{}"
    return config if isinstance(config, str) else _json.dumps(config)


def synth_corpus(config=None):
    """Synthetic utterances as dicts with ``id``, ``text`` and ``features``."""
    return _letr.synth_corpus(_config_text(config))


def train(config=None):
    """Trains a model from a run config (dict or JSON text); returns per-epoch metrics."""
    return [_json.loads(line) for line in _letr.train(_config_text(config))]
