from src.gating.gate import (
    ControllerParams,
    GateConfig,
    GateDecision,
    cir,
    controller_forward,
    controller_hidden_width,
    cosine_similarity_batched,
    decide,
    gate_logit,
    hard_gate,
    make_gamma,
    relaxed_gate,
    temperature_at,
    threshold_logit,
)
from src.gating.noise import FrozenNoise, GumbelNoise, NoiseSource, ZeroNoise, block_rng, gumbel_sample

__all__ = [
    "ControllerParams",
    "FrozenNoise",
    "GateConfig",
    "GateDecision",
    "GumbelNoise",
    "NoiseSource",
    "ZeroNoise",
    "block_rng",
    "cir",
    "controller_forward",
    "controller_hidden_width",
    "cosine_similarity_batched",
    "decide",
    "gate_logit",
    "gumbel_sample",
    "hard_gate",
    "make_gamma",
    "relaxed_gate",
    "temperature_at",
    "threshold_logit",
]
