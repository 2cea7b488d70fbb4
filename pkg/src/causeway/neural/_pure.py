"""Pure-numpy backend for the sequence model's hot kernels.

This is the reference implementation; ``_corekern`` (Cython) mirrors it
operation for operation.  Parameters and gradients travel as tuples in
``PARAM_FIELDS`` order.  All arrays are float64 and every function is
deterministic.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _gru_step(Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh, x, h_prev):
    z = _sigmoid(Wz @ x + Uz @ h_prev + bz)
    r = _sigmoid(Wr @ x + Ur @ h_prev + br)
    g = np.tanh(Wh @ x + Uh @ (r * h_prev) + bh)
    h = (1.0 - z) * h_prev + z * g
    return h, z, r, g


def _gru_back(Wz, Uz, Wr, Ur, Wh, Uh,
              gWz, gUz, gbz, gWr, gUr, gbr, gWh, gUh, gbh,
              x, h_prev, z, r, g, dh):
    """Backprop one gated step; returns (dx, dh_prev)."""
    dg = dh * z
    dz = dh * (g - h_prev)
    dh_prev = dh * (1.0 - z)

    da_g = dg * (1.0 - g * g)
    gWh += np.outer(da_g, x)
    gUh += np.outer(da_g, r * h_prev)
    gbh += da_g
    dx = Wh.T @ da_g
    u = Uh.T @ da_g
    dr = u * h_prev
    dh_prev = dh_prev + u * r

    da_r = dr * r * (1.0 - r)
    gWr += np.outer(da_r, x)
    gUr += np.outer(da_r, h_prev)
    gbr += da_r
    dx += Wr.T @ da_r
    dh_prev = dh_prev + Ur.T @ da_r

    da_z = dz * z * (1.0 - z)
    gWz += np.outer(da_z, x)
    gUz += np.outer(da_z, h_prev)
    gbz += da_z
    dx += Wz.T @ da_z
    dh_prev = dh_prev + Uz.T @ da_z
    return dx, dh_prev


def _log_softmax(y: np.ndarray) -> np.ndarray:
    m = y.max()
    s = y - m
    return s - np.log(np.exp(s).sum())


def encode(P: tuple, src: np.ndarray) -> np.ndarray:
    """Encoder states, shape (J, H); row J-1 doubles as the decoder init."""
    (emb,
     enc_Wz, enc_Uz, enc_bz, enc_Wr, enc_Ur, enc_br, enc_Wh, enc_Uh, enc_bh,
     *_rest) = P
    H = enc_Uz.shape[0]
    states = np.empty((len(src), H))
    h = np.zeros(H)
    for j, tok in enumerate(src):
        h, _, _, _ = _gru_step(
            enc_Wz, enc_Uz, enc_bz, enc_Wr, enc_Ur, enc_br, enc_Wh, enc_Uh, enc_bh,
            emb[tok], h,
        )
        states[j] = h
    return states


def _attention(att_Wh, att_Ws, att_rel, att_v, Henc, s_prev, rel):
    """Returns (weights, context, tanh activations)."""
    pre = Henc @ att_Wh.T + (att_Ws @ s_prev + att_rel[rel])  # (J, A)
    t = np.tanh(pre)
    logits = t @ att_v
    m = logits.max()
    e = np.exp(logits - m)
    a = e / e.sum()
    c = a @ Henc
    return a, c, t


def decode_step(P: tuple, Henc: np.ndarray, s_prev: np.ndarray, prev_tok: int, rel: int):
    """One decoder step: returns (log-probabilities over the vocabulary,
    new decoder state)."""
    (emb,
     _eWz, _eUz, _ebz, _eWr, _eUr, _ebr, _eWh, _eUh, _ebh,
     dec_Wz, dec_Uz, dec_bz, dec_Wr, dec_Ur, dec_br, dec_Wh, dec_Uh, dec_bh,
     att_Wh, att_Ws, att_rel, att_v, out_W, out_b) = P
    _, c, _ = _attention(att_Wh, att_Ws, att_rel, att_v, Henc, s_prev, rel)
    x = np.concatenate((emb[prev_tok], c))
    s, _, _, _ = _gru_step(
        dec_Wz, dec_Uz, dec_bz, dec_Wr, dec_Ur, dec_br, dec_Wh, dec_Uh, dec_bh,
        x, s_prev,
    )
    return _log_softmax(out_W @ s + out_b), s


def example_loss_grad(P: tuple, G: tuple | None, src: np.ndarray, rel: int,
                      dst_in: np.ndarray, dst_out: np.ndarray) -> float:
    """Teacher-forced token cross-entropy (sum over steps) for one example;
    when G is given, accumulates parameter gradients into it."""
    (emb,
     enc_Wz, enc_Uz, enc_bz, enc_Wr, enc_Ur, enc_br, enc_Wh, enc_Uh, enc_bh,
     dec_Wz, dec_Uz, dec_bz, dec_Wr, dec_Ur, dec_br, dec_Wh, dec_Uh, dec_bh,
     att_Wh, att_Ws, att_rel, att_v, out_W, out_b) = P
    J = len(src)
    I = len(dst_in)
    Hn = enc_Uz.shape[0]
    E = emb.shape[1]

    # Encoder forward, caching gate activations for backprop.
    enc_h = np.zeros((J + 1, Hn))
    enc_z = np.empty((J, Hn))
    enc_r = np.empty((J, Hn))
    enc_g = np.empty((J, Hn))
    for j in range(J):
        h, z, r, g = _gru_step(
            enc_Wz, enc_Uz, enc_bz, enc_Wr, enc_Ur, enc_br, enc_Wh, enc_Uh, enc_bh,
            emb[src[j]], enc_h[j],
        )
        enc_h[j + 1], enc_z[j], enc_r[j], enc_g[j] = h, z, r, g
    Henc = enc_h[1:]

    # Decoder forward.
    dec_s = np.empty((I + 1, Hn))
    dec_s[0] = enc_h[J]
    dec_z = np.empty((I, Hn))
    dec_r = np.empty((I, Hn))
    dec_g = np.empty((I, Hn))
    att_a = np.empty((I, J))
    att_t = np.empty((I, J, att_v.shape[0]))
    dec_x = np.empty((I, E + Hn))
    probs = np.empty((I, out_b.shape[0]))
    loss = 0.0
    for i in range(I):
        a, c, t = _attention(att_Wh, att_Ws, att_rel, att_v, Henc, dec_s[i], rel)
        att_a[i], att_t[i] = a, t
        x = np.concatenate((emb[dst_in[i]], c))
        dec_x[i] = x
        s, z, r, g = _gru_step(
            dec_Wz, dec_Uz, dec_bz, dec_Wr, dec_Ur, dec_br, dec_Wh, dec_Uh, dec_bh,
            x, dec_s[i],
        )
        dec_s[i + 1], dec_z[i], dec_r[i], dec_g[i] = s, z, r, g
        lp = _log_softmax(out_W @ s + out_b)
        probs[i] = np.exp(lp)
        loss -= lp[dst_out[i]]

    if G is None:
        return float(loss)

    (g_emb,
     g_enc_Wz, g_enc_Uz, g_enc_bz, g_enc_Wr, g_enc_Ur, g_enc_br,
     g_enc_Wh, g_enc_Uh, g_enc_bh,
     g_dec_Wz, g_dec_Uz, g_dec_bz, g_dec_Wr, g_dec_Ur, g_dec_br,
     g_dec_Wh, g_dec_Uh, g_dec_bh,
     g_att_Wh, g_att_Ws, g_att_rel, g_att_v, g_out_W, g_out_b) = G

    dHenc = np.zeros((J, Hn))
    ds = np.zeros(Hn)
    for i in range(I - 1, -1, -1):
        dy = probs[i].copy()
        dy[dst_out[i]] -= 1.0
        g_out_W += np.outer(dy, dec_s[i + 1])
        g_out_b += dy
        dh = out_W.T @ dy + ds

        dx, ds = _gru_back(
            dec_Wz, dec_Uz, dec_Wr, dec_Ur, dec_Wh, dec_Uh,
            g_dec_Wz, g_dec_Uz, g_dec_bz, g_dec_Wr, g_dec_Ur, g_dec_br,
            g_dec_Wh, g_dec_Uh, g_dec_bh,
            dec_x[i], dec_s[i], dec_z[i], dec_r[i], dec_g[i], dh,
        )
        g_emb[dst_in[i]] += dx[:E]
        dc = dx[E:]

        # Attention backward: context c = a @ Henc.
        a, t = att_a[i], att_t[i]
        da = Henc @ dc
        dHenc += np.outer(a, dc)
        dlogit = a * (da - float(a @ da))
        g_att_v += t.T @ dlogit
        dpre = (1.0 - t * t) * np.outer(dlogit, att_v)  # (J, A)
        g_att_Wh += dpre.T @ Henc
        dHenc += dpre @ att_Wh
        dq = dpre.sum(axis=0)
        g_att_Ws += np.outer(dq, dec_s[i])
        g_att_rel[rel] += dq
        ds = ds + att_Ws.T @ dq

    dh = ds  # gradient into the last encoder state (decoder init)
    for j in range(J - 1, -1, -1):
        dh = dh + dHenc[j]
        dx, dh = _gru_back(
            enc_Wz, enc_Uz, enc_Wr, enc_Ur, enc_Wh, enc_Uh,
            g_enc_Wz, g_enc_Uz, g_enc_bz, g_enc_Wr, g_enc_Ur, g_enc_br,
            g_enc_Wh, g_enc_Uh, g_enc_bh,
            emb[src[j]], enc_h[j], enc_z[j], enc_r[j], enc_g[j], dh,
        )
        g_emb[src[j]] += dx
    return float(loss)
