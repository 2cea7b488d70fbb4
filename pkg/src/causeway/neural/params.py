"""Parameter container for the relation-attention encoder-decoder.

The recurrent cell is a single gated unit (update gate z, reset gate r,
candidate state) for both encoder and decoder:

    z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
    r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
    g_t = tanh(Wh x_t + Uh (r_t * h_{t-1}) + bh)
    h_t = (1 - z_t) * h_{t-1} + z_t * g_t

Attention logits use a relation-specific hidden layer:

    logit_j = v . tanh(att_Wh h_j + att_Ws s_{i-1} + att_rel[r])

The decoder input is [embedding of previous token ; context vector], and
output logits are a linear projection of the decoder state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PARAM_FIELDS", "ModelDims", "init_params", "zero_grads", "params_nbytes"]

# Fixed field order: backends receive parameters/gradients as tuples in
# exactly this order.
PARAM_FIELDS = (
    "emb",
    "enc_Wz", "enc_Uz", "enc_bz",
    "enc_Wr", "enc_Ur", "enc_br",
    "enc_Wh", "enc_Uh", "enc_bh",
    "dec_Wz", "dec_Uz", "dec_bz",
    "dec_Wr", "dec_Ur", "dec_br",
    "dec_Wh", "dec_Uh", "dec_bh",
    "att_Wh", "att_Ws", "att_rel", "att_v",
    "out_W", "out_b",
)

EMBED_INIT_RANGE = 0.05  # also used for out-of-vocabulary pretrained rows


@dataclass(frozen=True)
class ModelDims:
    vocab: int
    relations: int
    embed: int
    hidden: int
    attention: int

    def shapes(self) -> dict[str, tuple[int, ...]]:
        V, R, E, H, A = self.vocab, self.relations, self.embed, self.hidden, self.attention
        D = E + H  # decoder input: token embedding + context
        gru = lambda inp: {"Wz": (H, inp), "Uz": (H, H), "bz": (H,),
                           "Wr": (H, inp), "Ur": (H, H), "br": (H,),
                           "Wh": (H, inp), "Uh": (H, H), "bh": (H,)}
        shapes: dict[str, tuple[int, ...]] = {"emb": (V, E)}
        shapes.update({f"enc_{k}": s for k, s in gru(E).items()})
        shapes.update({f"dec_{k}": s for k, s in gru(D).items()})
        shapes.update(
            {"att_Wh": (A, H), "att_Ws": (A, H), "att_rel": (R, A), "att_v": (A,),
             "out_W": (V, H), "out_b": (V,)}
        )
        return shapes


def init_params(dims: ModelDims, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Scaled-uniform initialization; embeddings use the flat +/-0.05 range
    expected for out-of-vocabulary rows."""
    params: dict[str, np.ndarray] = {}
    for name in PARAM_FIELDS:
        shape = dims.shapes()[name]
        if name == "emb":
            params[name] = rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, shape)
        elif name.endswith(("_bz", "_br", "_bh", "_b")) or name == "att_v":
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[-1]
            bound = np.sqrt(1.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, shape)
    # A zero att_v would zero every attention gradient path; give it the
    # same scaled init as the matrices.
    bound = np.sqrt(1.0 / dims.attention)
    params["att_v"] = rng.uniform(-bound, bound, dims.shapes()["att_v"])
    return params


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.items()}


def params_nbytes(params: dict[str, np.ndarray]) -> int:
    return sum(a.nbytes for a in params.values())
