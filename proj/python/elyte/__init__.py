"""Molecular pretraining and electrolyte formulation property regression."""

from ._core import (
    Bundle,
    canonical_smiles,
    evaluate,
    predict,
    pretrain,
    selfies_to_smiles,
    selfies_tokens,
    smiles_to_selfies,
    train,
)

__all__ = [
    "Bundle",
    "canonical_smiles",
    "evaluate",
    "predict",
    "pretrain",
    "selfies_to_smiles",
    "selfies_tokens",
    "smiles_to_selfies",
    "train",
]
