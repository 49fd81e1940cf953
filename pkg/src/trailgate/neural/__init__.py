"""BiGRU + Transformer-encoder classifier written directly on numpy."""
from .layers import (BiGRU, Dense, Dropout, Embedding, EncoderBlock, GRUDirection, LayerNorm,
                     MultiHeadAttention, attention, gru_cell, softmax)
from .network import (NetConfig, NetParams, Network, cross_entropy, cross_entropy_grad,
                      dumps_params, load_params, loads_params, save_params)
from .optim import Adam, adam_update
from .training import NetClassifier, TrainLog, train

__all__ = [
    "Adam", "BiGRU", "Dense", "Dropout", "Embedding", "EncoderBlock", "GRUDirection", "LayerNorm",
    "MultiHeadAttention", "NetClassifier", "NetConfig", "NetParams", "Network", "TrainLog",
    "adam_update", "attention", "cross_entropy", "cross_entropy_grad", "dumps_params",
    "gru_cell", "load_params", "loads_params", "save_params", "softmax", "train",
]
