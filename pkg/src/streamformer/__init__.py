"""Sequence models that treat interchangeable symbols as parallel streams.

The model classes live in `model`, the logic task generators and oracles
in `logic`, and the audits (alpha-covariance, certification, heatmaps) in
`evaluation`.  `streamformer.cli` exposes the same workflows as a command
line tool.
"""
from .errors import ContractError, ResourceError
from .model import (FlatVocabTransformer, ModelConfig, Seq2SeqModel,
                    check_invariance, decode_beam, decode_greedy,
                    load_model, save_model)
from .streams import AlphaRenaming, Vocabulary

__all__ = [
    "AlphaRenaming", "ContractError", "FlatVocabTransformer",
    "ModelConfig", "ResourceError", "Seq2SeqModel", "Vocabulary",
    "check_invariance", "decode_beam", "decode_greedy", "load_model",
    "save_model",
]
