# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors ``_fallback`` exactly: same signatures, same tie-breaking, same
floating-point evaluation order in the Viterbi recursion.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def forward_backward(
    int n_nodes,
    cnp.int32_t[::1] arc_start,
    cnp.int32_t[::1] arc_end,
    double[::1] arc_score,
    double[::1] arc_acc,
    cnp.int32_t[::1] in_offsets,
    cnp.int32_t[::1] in_arcs,
    cnp.int32_t[::1] out_offsets,
    cnp.int32_t[::1] out_arcs,
):
    """Log-domain forward-backward with accuracy recursions.

    Returns (log_total, occ, c_arc, c_avg); see the fallback docstring.
    """
    cdef int n_arcs = arc_start.shape[0]
    cdef cnp.ndarray[double, ndim=1] alpha_arr = np.full(n_nodes, -INFINITY)
    cdef cnp.ndarray[double, ndim=1] alpha_acc_arr = np.zeros(n_nodes)
    cdef cnp.ndarray[double, ndim=1] beta_arr = np.full(n_nodes, -INFINITY)
    cdef cnp.ndarray[double, ndim=1] beta_acc_arr = np.zeros(n_nodes)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] alpha_acc = alpha_acc_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] beta_acc = beta_acc_arr

    cdef int node, i, a, s
    cdef double m, total, term, acc_num

    alpha[0] = 0.0
    for node in range(1, n_nodes):
        m = -INFINITY
        for i in range(in_offsets[node], in_offsets[node + 1]):
            a = in_arcs[i]
            term = alpha[arc_start[a]] + arc_score[a]
            if term > m:
                m = term
        if m == -INFINITY:
            continue
        total = 0.0
        for i in range(in_offsets[node], in_offsets[node + 1]):
            a = in_arcs[i]
            total += exp(alpha[arc_start[a]] + arc_score[a] - m)
        alpha[node] = m + log(total)
        acc_num = 0.0
        for i in range(in_offsets[node], in_offsets[node + 1]):
            a = in_arcs[i]
            s = arc_start[a]
            acc_num += (
                exp(alpha[s] + arc_score[a] - m) / total
            ) * (alpha_acc[s] + arc_acc[a])
        alpha_acc[node] = acc_num

    beta[n_nodes - 1] = 0.0
    for node in range(n_nodes - 2, -1, -1):
        m = -INFINITY
        for i in range(out_offsets[node], out_offsets[node + 1]):
            a = out_arcs[i]
            term = arc_score[a] + beta[arc_end[a]]
            if term > m:
                m = term
        if m == -INFINITY:
            continue
        total = 0.0
        for i in range(out_offsets[node], out_offsets[node + 1]):
            a = out_arcs[i]
            total += exp(arc_score[a] + beta[arc_end[a]] - m)
        beta[node] = m + log(total)
        acc_num = 0.0
        for i in range(out_offsets[node], out_offsets[node + 1]):
            a = out_arcs[i]
            s = arc_end[a]
            acc_num += (
                exp(arc_score[a] + beta[s] - m) / total
            ) * (arc_acc[a] + beta_acc[s])
        beta_acc[node] = acc_num

    cdef double log_total = alpha[n_nodes - 1]
    cdef cnp.ndarray[double, ndim=1] occ_arr = np.zeros(n_arcs)
    cdef cnp.ndarray[double, ndim=1] c_arc_arr = np.zeros(n_arcs)
    cdef double[::1] occ = occ_arr
    cdef double[::1] c_arc = c_arc_arr
    if log_total > -INFINITY:
        for a in range(n_arcs):
            occ[a] = exp(alpha[arc_start[a]] + arc_score[a] + beta[arc_end[a]] - log_total)
            c_arc[a] = alpha_acc[arc_start[a]] + arc_acc[a] + beta_acc[arc_end[a]]
    return float(log_total), occ_arr, c_arc_arr, float(alpha_acc[n_nodes - 1])


def accumulate_frame_state(
    int n_frames,
    int n_states,
    cnp.int32_t[::1] arc_t0,
    cnp.int32_t[::1] state_offsets,
    cnp.int32_t[::1] states,
    double[::1] weights,
):
    cdef cnp.ndarray[double, ndim=2] out_arr = np.zeros((n_frames, n_states))
    cdef double[:, ::1] out = out_arr
    cdef int n_arcs = arc_t0.shape[0]
    cdef int a, j, lo, hi
    cdef double w
    for a in range(n_arcs):
        lo = state_offsets[a]
        hi = state_offsets[a + 1]
        w = weights[a]
        for j in range(hi - lo):
            out[arc_t0[a] + j, states[lo + j]] += w
    return out_arr


def viterbi_segments(
    double[:, ::1] frame_scores,
    int num_phones,
    int states_per_phone,
    double[::1] log_init,
    double[:, ::1] log_bigram,
    int min_dur,
    int max_dur,
    double prior_scale,
):
    """Compiled twin of the fallback Viterbi; identical tie-breaking."""
    cdef int T = frame_scores.shape[0]
    cdef int n_states = frame_scores.shape[1]
    cdef int P = num_phones
    cdef int S = states_per_phone

    cdef cnp.ndarray[double, ndim=2] cum_arr = np.zeros((T + 1, n_states))
    cdef double[:, ::1] cum = cum_arr
    cdef int t, k, p, d, q, j, t0
    for t in range(T):
        for k in range(n_states):
            cum[t + 1, k] = cum[t, k] + frame_scores[t, k]

    cdef cnp.ndarray[double, ndim=1] scaled_init_arr = prior_scale * np.asarray(log_init)
    cdef cnp.ndarray[double, ndim=2] scaled_bigram_arr = prior_scale * np.asarray(log_bigram)
    cdef double[::1] scaled_init = scaled_init_arr
    cdef double[:, ::1] scaled_bigram = scaled_bigram_arr

    cdef cnp.ndarray[cnp.int32_t, ndim=2] bounds_arr = np.zeros(
        (max_dur + 1, S + 1), dtype=np.int32
    )
    cdef cnp.int32_t[:, ::1] bounds = bounds_arr
    for d in range(max_dur + 1):
        for j in range(S + 1):
            bounds[d, j] = (j * d) // S

    cdef cnp.ndarray[double, ndim=2] best_arr = np.full((T + 1, P), -INFINITY)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] back_dur_arr = np.zeros((T + 1, P), dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] back_prev_arr = np.full((T + 1, P), -1, dtype=np.int32)
    cdef double[:, ::1] best = best_arr
    cdef cnp.int32_t[:, ::1] back_dur = back_dur_arr
    cdef cnp.int32_t[:, ::1] back_prev = back_prev_arr

    cdef int base, best_d, best_q, d_hi, qa
    cdef double best_score, seg, cand, prev_best

    for t in range(min_dur, T + 1):
        for p in range(P):
            base = p * S
            best_score = -INFINITY
            best_d = 0
            best_q = -1
            d_hi = max_dur if max_dur < t else t
            for d in range(min_dur, d_hi + 1):
                t0 = t - d
                seg = 0.0
                for j in range(S):
                    seg += (
                        cum[t0 + bounds[d, j + 1], base + j]
                        - cum[t0 + bounds[d, j], base + j]
                    )
                if t0 == 0:
                    cand = scaled_init[p] + seg
                    if cand > best_score:
                        best_score = cand
                        best_d = d
                        best_q = -1
                else:
                    prev_best = -INFINITY
                    qa = 0
                    for q in range(P):
                        cand = best[t0, q] + scaled_bigram[q, p]
                        if cand > prev_best:
                            prev_best = cand
                            qa = q
                    cand = prev_best + seg
                    if cand > best_score:
                        best_score = cand
                        best_d = d
                        best_q = qa
            best[t, p] = best_score
            back_dur[t, p] = best_d
            back_prev[t, p] = best_q

    cdef int final_p = -1
    cdef double final_score = -INFINITY
    for p in range(P):
        if best[T, p] > final_score:
            final_score = best[T, p]
            final_p = p
    if final_p < 0:
        return (
            np.zeros(0, dtype=np.int32),
            np.zeros(0, dtype=np.int32),
            -INFINITY,
        )

    phones = []
    durs = []
    t = T
    p = final_p
    while t > 0:
        phones.append(p)
        d = back_dur[t, p]
        durs.append(d)
        q = back_prev[t, p]
        t -= d
        p = q
    phones.reverse()
    durs.reverse()
    return (
        np.array(phones, dtype=np.int32),
        np.array(durs, dtype=np.int32),
        float(final_score),
    )


def edit_distance(cnp.int32_t[::1] a, cnp.int32_t[::1] b):
    cdef int la = a.shape[0]
    cdef int lb = b.shape[0]
    if la == 0:
        return lb
    if lb == 0:
        return la
    cdef cnp.ndarray[cnp.int64_t, ndim=1] prev_arr = np.arange(lb + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] curr_arr = np.zeros(lb + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] curr = curr_arr
    cdef cnp.int64_t[::1] tmp
    cdef int i, j
    cdef cnp.int64_t sub, best
    cdef cnp.int32_t ai
    for i in range(1, la + 1):
        curr[0] = i
        ai = a[i - 1]
        for j in range(1, lb + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            best = prev[j] + 1
            if curr[j - 1] + 1 < best:
                best = curr[j - 1] + 1
            if sub < best:
                best = sub
            curr[j] = best
        tmp = prev
        prev = curr
        curr = tmp
    return int(prev[lb])
