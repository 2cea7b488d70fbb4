# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the sequence model's hot kernels.

Mirrors ``_pure`` operation for operation; selected at import by
``causeway.neural.backend`` when available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

NAME = "cython"


cdef inline double sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void gru_forward_step(double[:, ::1] Wz, double[:, ::1] Uz, double[::1] bz,
                           double[:, ::1] Wr, double[:, ::1] Ur, double[::1] br,
                           double[:, ::1] Wh, double[:, ::1] Uh, double[::1] bh,
                           double[::1] x, double[::1] h_prev,
                           double[::1] z, double[::1] r, double[::1] g,
                           double[::1] h_out, double[::1] tmp) nogil:
    cdef Py_ssize_t H = Uz.shape[0]
    cdef Py_ssize_t D = Wz.shape[1]
    cdef Py_ssize_t i, j
    cdef double az, ar, ag
    for i in range(H):
        az = bz[i]
        ar = br[i]
        for j in range(D):
            az += Wz[i, j] * x[j]
            ar += Wr[i, j] * x[j]
        for j in range(H):
            az += Uz[i, j] * h_prev[j]
            ar += Ur[i, j] * h_prev[j]
        z[i] = sigmoid(az)
        r[i] = sigmoid(ar)
    for i in range(H):
        tmp[i] = r[i] * h_prev[i]
    for i in range(H):
        ag = bh[i]
        for j in range(D):
            ag += Wh[i, j] * x[j]
        for j in range(H):
            ag += Uh[i, j] * tmp[j]
        g[i] = tanh(ag)
        h_out[i] = (1.0 - z[i]) * h_prev[i] + z[i] * g[i]


cdef void gru_backward_step(double[:, ::1] Wz, double[:, ::1] Uz,
                            double[:, ::1] Wr, double[:, ::1] Ur,
                            double[:, ::1] Wh, double[:, ::1] Uh,
                            double[:, ::1] gWz, double[:, ::1] gUz, double[::1] gbz,
                            double[:, ::1] gWr, double[:, ::1] gUr, double[::1] gbr,
                            double[:, ::1] gWh, double[:, ::1] gUh, double[::1] gbh,
                            double[::1] x, double[::1] h_prev,
                            double[::1] z, double[::1] r, double[::1] g,
                            double[::1] dh, double[::1] dx, double[::1] dh_prev,
                            double[::1] da_g, double[::1] da_r, double[::1] da_z,
                            double[::1] tmp) nogil:
    cdef Py_ssize_t H = Uz.shape[0]
    cdef Py_ssize_t D = Wz.shape[1]
    cdef Py_ssize_t i, j
    cdef double u, dr
    for i in range(H):
        da_g[i] = dh[i] * z[i] * (1.0 - g[i] * g[i])
        dh_prev[i] = dh[i] * (1.0 - z[i])
        da_z[i] = dh[i] * (g[i] - h_prev[i]) * z[i] * (1.0 - z[i])
    for i in range(H):
        tmp[i] = r[i] * h_prev[i]
    for i in range(H):
        for j in range(D):
            gWh[i, j] += da_g[i] * x[j]
        for j in range(H):
            gUh[i, j] += da_g[i] * tmp[j]
        gbh[i] += da_g[i]
    for j in range(D):
        u = 0.0
        for i in range(H):
            u += Wh[i, j] * da_g[i]
        dx[j] = u
    # u_j = (Uh^T da_g)_j feeds both the reset gate and the carried state.
    for j in range(H):
        u = 0.0
        for i in range(H):
            u += Uh[i, j] * da_g[i]
        dr = u * h_prev[j]
        dh_prev[j] += u * r[j]
        da_r[j] = dr * r[j] * (1.0 - r[j])
    for i in range(H):
        for j in range(D):
            gWr[i, j] += da_r[i] * x[j]
            gWz[i, j] += da_z[i] * x[j]
        for j in range(H):
            gUr[i, j] += da_r[i] * h_prev[j]
            gUz[i, j] += da_z[i] * h_prev[j]
        gbr[i] += da_r[i]
        gbz[i] += da_z[i]
    for j in range(D):
        u = 0.0
        for i in range(H):
            u += Wr[i, j] * da_r[i] + Wz[i, j] * da_z[i]
        dx[j] += u
    for j in range(H):
        u = 0.0
        for i in range(H):
            u += Ur[i, j] * da_r[i] + Uz[i, j] * da_z[i]
        dh_prev[j] += u


cdef void attention_forward(double[:, ::1] att_Wh, double[:, ::1] att_Ws,
                            double[:, ::1] att_rel, double[::1] att_v,
                            double[:, ::1] Henc, double[::1] s_prev, Py_ssize_t rel,
                            double[::1] a, double[:, ::1] t, double[::1] c,
                            double[::1] q) nogil:
    cdef Py_ssize_t J = Henc.shape[0]
    cdef Py_ssize_t H = Henc.shape[1]
    cdef Py_ssize_t A = att_v.shape[0]
    cdef Py_ssize_t j, k, n
    cdef double acc, m, s
    for k in range(A):
        acc = att_rel[rel, k]
        for n in range(H):
            acc += att_Ws[k, n] * s_prev[n]
        q[k] = acc
    m = -1e300
    for j in range(J):
        acc = 0.0
        for k in range(A):
            s = q[k]
            for n in range(H):
                s += att_Wh[k, n] * Henc[j, n]
            s = tanh(s)
            t[j, k] = s
            acc += att_v[k] * s
        a[j] = acc
        if acc > m:
            m = acc
    s = 0.0
    for j in range(J):
        a[j] = exp(a[j] - m)
        s += a[j]
    for j in range(J):
        a[j] /= s
    for n in range(H):
        acc = 0.0
        for j in range(J):
            acc += a[j] * Henc[j, n]
        c[n] = acc


cdef void log_softmax(double[::1] y, double[::1] out) nogil:
    cdef Py_ssize_t V = y.shape[0]
    cdef Py_ssize_t i
    cdef double m = y[0]
    cdef double s = 0.0
    for i in range(1, V):
        if y[i] > m:
            m = y[i]
    for i in range(V):
        s += exp(y[i] - m)
    s = log(s)
    for i in range(V):
        out[i] = y[i] - m - s


def encode(tuple P, src):
    cdef double[:, ::1] emb = P[0]
    cdef double[:, ::1] enc_Wz = P[1]
    cdef double[:, ::1] enc_Uz = P[2]
    cdef double[::1] enc_bz = P[3]
    cdef double[:, ::1] enc_Wr = P[4]
    cdef double[:, ::1] enc_Ur = P[5]
    cdef double[::1] enc_br = P[6]
    cdef double[:, ::1] enc_Wh = P[7]
    cdef double[:, ::1] enc_Uh = P[8]
    cdef double[::1] enc_bh = P[9]
    cdef long[:] src_ids = np.ascontiguousarray(src, dtype=np.int64)
    cdef Py_ssize_t J = src_ids.shape[0]
    cdef Py_ssize_t H = enc_Uz.shape[0]
    states_np = np.empty((J, H))
    cdef double[:, ::1] states = states_np
    h_np = np.zeros(H)
    cdef double[::1] h = h_np
    z_np = np.empty(H); r_np = np.empty(H); g_np = np.empty(H)
    tmp_np = np.empty(H); hn_np = np.empty(H)
    cdef double[::1] z = z_np, r = r_np, g = g_np, tmp = tmp_np, hn = hn_np
    cdef Py_ssize_t j, n
    for j in range(J):
        gru_forward_step(enc_Wz, enc_Uz, enc_bz, enc_Wr, enc_Ur, enc_br,
                         enc_Wh, enc_Uh, enc_bh,
                         emb[src_ids[j]], h, z, r, g, hn, tmp)
        for n in range(H):
            h[n] = hn[n]
            states[j, n] = hn[n]
    return states_np


def decode_step(tuple P, Henc, s_prev, prev_tok, rel):
    cdef double[:, ::1] emb = P[0]
    cdef double[:, ::1] dec_Wz = P[10]
    cdef double[:, ::1] dec_Uz = P[11]
    cdef double[::1] dec_bz = P[12]
    cdef double[:, ::1] dec_Wr = P[13]
    cdef double[:, ::1] dec_Ur = P[14]
    cdef double[::1] dec_br = P[15]
    cdef double[:, ::1] dec_Wh = P[16]
    cdef double[:, ::1] dec_Uh = P[17]
    cdef double[::1] dec_bh = P[18]
    cdef double[:, ::1] att_Wh = P[19]
    cdef double[:, ::1] att_Ws = P[20]
    cdef double[:, ::1] att_rel = P[21]
    cdef double[::1] att_v = P[22]
    cdef double[:, ::1] out_W = P[23]
    cdef double[::1] out_b = P[24]

    cdef double[:, ::1] H_enc = np.ascontiguousarray(Henc)
    cdef double[::1] s0 = np.ascontiguousarray(s_prev)
    cdef Py_ssize_t J = H_enc.shape[0]
    cdef Py_ssize_t H = H_enc.shape[1]
    cdef Py_ssize_t A = att_v.shape[0]
    cdef Py_ssize_t E = emb.shape[1]
    cdef Py_ssize_t V = out_b.shape[0]
    cdef Py_ssize_t tok = prev_tok
    cdef Py_ssize_t r_id = rel

    a_np = np.empty(J); t_np = np.empty((J, A)); c_np = np.empty(H); q_np = np.empty(A)
    cdef double[::1] a = a_np, c = c_np, q = q_np
    cdef double[:, ::1] t = t_np
    attention_forward(att_Wh, att_Ws, att_rel, att_v, H_enc, s0, r_id, a, t, c, q)

    x_np = np.empty(E + H)
    cdef double[::1] x = x_np
    cdef Py_ssize_t n
    for n in range(E):
        x[n] = emb[tok, n]
    for n in range(H):
        x[E + n] = c[n]
    z_np = np.empty(H); rr_np = np.empty(H); g_np = np.empty(H)
    s_new_np = np.empty(H); tmp_np = np.empty(H)
    cdef double[::1] z = z_np, rr = rr_np, g = g_np, s_new = s_new_np, tmp = tmp_np
    gru_forward_step(dec_Wz, dec_Uz, dec_bz, dec_Wr, dec_Ur, dec_br,
                     dec_Wh, dec_Uh, dec_bh, x, s0, z, rr, g, s_new, tmp)
    y_np = np.empty(V)
    lp_np = np.empty(V)
    cdef double[::1] y = y_np, lp = lp_np
    cdef Py_ssize_t i, jj
    cdef double acc
    for i in range(V):
        acc = out_b[i]
        for jj in range(H):
            acc += out_W[i, jj] * s_new[jj]
        y[i] = acc
    log_softmax(y, lp)
    return lp_np, s_new_np


def example_loss_grad(tuple P, G, src, rel, dst_in, dst_out):
    cdef double[:, ::1] emb = P[0]
    cdef double[:, ::1] enc_Wz = P[1]
    cdef double[:, ::1] enc_Uz = P[2]
    cdef double[::1] enc_bz = P[3]
    cdef double[:, ::1] enc_Wr = P[4]
    cdef double[:, ::1] enc_Ur = P[5]
    cdef double[::1] enc_br = P[6]
    cdef double[:, ::1] enc_Wh = P[7]
    cdef double[:, ::1] enc_Uh = P[8]
    cdef double[::1] enc_bh = P[9]
    cdef double[:, ::1] dec_Wz = P[10]
    cdef double[:, ::1] dec_Uz = P[11]
    cdef double[::1] dec_bz = P[12]
    cdef double[:, ::1] dec_Wr = P[13]
    cdef double[:, ::1] dec_Ur = P[14]
    cdef double[::1] dec_br = P[15]
    cdef double[:, ::1] dec_Wh = P[16]
    cdef double[:, ::1] dec_Uh = P[17]
    cdef double[::1] dec_bh = P[18]
    cdef double[:, ::1] att_Wh = P[19]
    cdef double[:, ::1] att_Ws = P[20]
    cdef double[:, ::1] att_rel = P[21]
    cdef double[::1] att_v = P[22]
    cdef double[:, ::1] out_W = P[23]
    cdef double[::1] out_b = P[24]

    cdef long[:] src_ids = np.ascontiguousarray(src, dtype=np.int64)
    cdef long[:] in_ids = np.ascontiguousarray(dst_in, dtype=np.int64)
    cdef long[:] out_ids = np.ascontiguousarray(dst_out, dtype=np.int64)
    cdef Py_ssize_t rel_id = rel
    cdef Py_ssize_t J = src_ids.shape[0]
    cdef Py_ssize_t I = in_ids.shape[0]
    cdef Py_ssize_t H = enc_Uz.shape[0]
    cdef Py_ssize_t E = emb.shape[1]
    cdef Py_ssize_t A = att_v.shape[0]
    cdef Py_ssize_t V = out_b.shape[0]
    cdef Py_ssize_t D = E + H

    # Forward caches.
    enc_h_np = np.zeros((J + 1, H)); enc_z_np = np.empty((J, H))
    enc_r_np = np.empty((J, H)); enc_g_np = np.empty((J, H))
    cdef double[:, ::1] enc_h = enc_h_np, enc_z = enc_z_np, enc_r = enc_r_np, enc_g = enc_g_np
    tmp_np = np.empty(H)
    cdef double[::1] tmp = tmp_np
    cdef Py_ssize_t i, j, n, k
    for j in range(J):
        gru_forward_step(enc_Wz, enc_Uz, enc_bz, enc_Wr, enc_Ur, enc_br,
                         enc_Wh, enc_Uh, enc_bh,
                         emb[src_ids[j]], enc_h[j], enc_z[j], enc_r[j], enc_g[j],
                         enc_h[j + 1], tmp)
    cdef double[:, ::1] Henc = enc_h_np[1:]

    dec_s_np = np.empty((I + 1, H)); dec_z_np = np.empty((I, H))
    dec_r_np = np.empty((I, H)); dec_g_np = np.empty((I, H))
    att_a_np = np.empty((I, J)); att_t_np = np.empty((I, J, A))
    dec_x_np = np.empty((I, D)); probs_np = np.empty((I, V))
    q_np = np.empty(A); c_np = np.empty(H); y_np = np.empty(V); lp_np = np.empty(V)
    cdef double[:, ::1] dec_s = dec_s_np, dec_z = dec_z_np, dec_r = dec_r_np, dec_g = dec_g_np
    cdef double[:, ::1] att_a = att_a_np, dec_x = dec_x_np, probs = probs_np
    cdef double[:, :, ::1] att_t = att_t_np
    cdef double[::1] q = q_np, c = c_np, y = y_np, lp = lp_np
    cdef double loss = 0.0
    cdef double acc
    for n in range(H):
        dec_s[0, n] = enc_h[J, n]
    for i in range(I):
        attention_forward(att_Wh, att_Ws, att_rel, att_v, Henc, dec_s[i], rel_id,
                          att_a[i], att_t[i], c, q)
        for n in range(E):
            dec_x[i, n] = emb[in_ids[i], n]
        for n in range(H):
            dec_x[i, E + n] = c[n]
        gru_forward_step(dec_Wz, dec_Uz, dec_bz, dec_Wr, dec_Ur, dec_br,
                         dec_Wh, dec_Uh, dec_bh,
                         dec_x[i], dec_s[i], dec_z[i], dec_r[i], dec_g[i],
                         dec_s[i + 1], tmp)
        for k in range(V):
            acc = out_b[k]
            for n in range(H):
                acc += out_W[k, n] * dec_s[i + 1, n]
            y[k] = acc
        log_softmax(y, lp)
        for k in range(V):
            probs[i, k] = exp(lp[k])
        loss -= lp[out_ids[i]]

    if G is None:
        return loss

    cdef double[:, ::1] g_emb = G[0]
    cdef double[:, ::1] g_enc_Wz = G[1]
    cdef double[:, ::1] g_enc_Uz = G[2]
    cdef double[::1] g_enc_bz = G[3]
    cdef double[:, ::1] g_enc_Wr = G[4]
    cdef double[:, ::1] g_enc_Ur = G[5]
    cdef double[::1] g_enc_br = G[6]
    cdef double[:, ::1] g_enc_Wh = G[7]
    cdef double[:, ::1] g_enc_Uh = G[8]
    cdef double[::1] g_enc_bh = G[9]
    cdef double[:, ::1] g_dec_Wz = G[10]
    cdef double[:, ::1] g_dec_Uz = G[11]
    cdef double[::1] g_dec_bz = G[12]
    cdef double[:, ::1] g_dec_Wr = G[13]
    cdef double[:, ::1] g_dec_Ur = G[14]
    cdef double[::1] g_dec_br = G[15]
    cdef double[:, ::1] g_dec_Wh = G[16]
    cdef double[:, ::1] g_dec_Uh = G[17]
    cdef double[::1] g_dec_bh = G[18]
    cdef double[:, ::1] g_att_Wh = G[19]
    cdef double[:, ::1] g_att_Ws = G[20]
    cdef double[:, ::1] g_att_rel = G[21]
    cdef double[::1] g_att_v = G[22]
    cdef double[:, ::1] g_out_W = G[23]
    cdef double[::1] g_out_b = G[24]

    dHenc_np = np.zeros((J, H))
    ds_np = np.zeros(H); dh_np = np.empty(H); dx_np = np.empty(D)
    dhp_np = np.empty(H); dag_np = np.empty(H); dar_np = np.empty(H); daz_np = np.empty(H)
    dy_np = np.empty(V); da_np = np.empty(J); dlogit_np = np.empty(J); dq_np = np.empty(A)
    cdef double[:, ::1] dHenc = dHenc_np
    cdef double[::1] ds = ds_np, dh = dh_np, dx = dx_np, dhp = dhp_np
    cdef double[::1] dag = dag_np, dar = dar_np, daz = daz_np
    cdef double[::1] dy = dy_np, da = da_np, dlogit = dlogit_np, dq = dq_np
    cdef double adot, dpre, u
    cdef Py_ssize_t jj

    for i in range(I - 1, -1, -1):
        for k in range(V):
            dy[k] = probs[i, k]
        dy[out_ids[i]] -= 1.0
        for k in range(V):
            g_out_b[k] += dy[k]
            for n in range(H):
                g_out_W[k, n] += dy[k] * dec_s[i + 1, n]
        for n in range(H):
            acc = ds[n]
            for k in range(V):
                acc += out_W[k, n] * dy[k]
            dh[n] = acc

        gru_backward_step(dec_Wz, dec_Uz, dec_Wr, dec_Ur, dec_Wh, dec_Uh,
                          g_dec_Wz, g_dec_Uz, g_dec_bz, g_dec_Wr, g_dec_Ur, g_dec_br,
                          g_dec_Wh, g_dec_Uh, g_dec_bh,
                          dec_x[i], dec_s[i], dec_z[i], dec_r[i], dec_g[i],
                          dh, dx, dhp, dag, dar, daz, tmp)
        for n in range(H):
            ds[n] = dhp[n]
        for n in range(E):
            g_emb[in_ids[i], n] += dx[n]

        # Attention backward; dc = dx[E:].
        adot = 0.0
        for j in range(J):
            acc = 0.0
            for n in range(H):
                acc += Henc[j, n] * dx[E + n]
            da[j] = acc
            adot += att_a[i, j] * acc
            for n in range(H):
                dHenc[j, n] += att_a[i, j] * dx[E + n]
        for k in range(A):
            dq[k] = 0.0
        for j in range(J):
            dlogit[j] = att_a[i, j] * (da[j] - adot)
            for k in range(A):
                g_att_v[k] += dlogit[j] * att_t[i, j, k]
                dpre = (1.0 - att_t[i, j, k] * att_t[i, j, k]) * dlogit[j] * att_v[k]
                dq[k] += dpre
                for n in range(H):
                    g_att_Wh[k, n] += dpre * Henc[j, n]
                    dHenc[j, n] += dpre * att_Wh[k, n]
        for k in range(A):
            g_att_rel[rel_id, k] += dq[k]
            for n in range(H):
                g_att_Ws[k, n] += dq[k] * dec_s[i, n]
        for n in range(H):
            u = 0.0
            for k in range(A):
                u += att_Ws[k, n] * dq[k]
            ds[n] += u

    for n in range(H):
        dh[n] = ds[n]
    for j in range(J - 1, -1, -1):
        for n in range(H):
            dh[n] += dHenc[j, n]
        gru_backward_step(enc_Wz, enc_Uz, enc_Wr, enc_Ur, enc_Wh, enc_Uh,
                          g_enc_Wz, g_enc_Uz, g_enc_bz, g_enc_Wr, g_enc_Ur, g_enc_br,
                          g_enc_Wh, g_enc_Uh, g_enc_bh,
                          emb[src_ids[j]], enc_h[j], enc_z[j], enc_r[j], enc_g[j],
                          dh, dx, dhp, dag, dar, daz, tmp)
        for n in range(H):
            dh[n] = dhp[n]
        for n in range(E):
            g_emb[src_ids[j], n] += dx[n]
    return loss
