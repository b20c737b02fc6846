"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled extension is unavailable. Semantics match
``_core`` exactly; discrete outcomes (Viterbi backtraces, edit distance)
are bit-identical, floating-point outputs agree to rounding.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def forward_backward(
    n_nodes,
    arc_start,
    arc_end,
    arc_score,
    arc_acc,
    in_offsets,
    in_arcs,
    out_offsets,
    out_arcs,
):
    """Log-domain forward-backward over a topologically numbered DAG.

    Computes per-arc occupancies plus the accuracy-weighted recursions:
    ``c_arc[a]`` is the expected path accuracy conditioned on passing
    through arc ``a`` and ``c_avg`` the unconditional expectation.

    Returns (log_total, occ, c_arc, c_avg).
    """
    n_arcs = arc_start.shape[0]
    alpha = np.full(n_nodes, NEG_INF)
    alpha_acc = np.zeros(n_nodes)
    alpha[0] = 0.0
    for node in range(1, n_nodes):
        arcs = in_arcs[in_offsets[node] : in_offsets[node + 1]]
        if arcs.size == 0:
            continue
        terms = alpha[arc_start[arcs]] + arc_score[arcs]
        m = terms.max()
        if m == NEG_INF:
            continue
        w = np.exp(terms - m)
        total = w.sum()
        alpha[node] = m + np.log(total)
        alpha_acc[node] = float(
            np.dot(w / total, alpha_acc[arc_start[arcs]] + arc_acc[arcs])
        )

    beta = np.full(n_nodes, NEG_INF)
    beta_acc = np.zeros(n_nodes)
    beta[n_nodes - 1] = 0.0
    for node in range(n_nodes - 2, -1, -1):
        arcs = out_arcs[out_offsets[node] : out_offsets[node + 1]]
        if arcs.size == 0:
            continue
        terms = arc_score[arcs] + beta[arc_end[arcs]]
        m = terms.max()
        if m == NEG_INF:
            continue
        w = np.exp(terms - m)
        total = w.sum()
        beta[node] = m + np.log(total)
        beta_acc[node] = float(
            np.dot(w / total, arc_acc[arcs] + beta_acc[arc_end[arcs]])
        )

    log_total = alpha[n_nodes - 1]
    occ = np.zeros(n_arcs)
    c_arc = np.zeros(n_arcs)
    if np.isfinite(log_total):
        occ = np.exp(alpha[arc_start] + arc_score + beta[arc_end] - log_total)
        c_arc = alpha_acc[arc_start] + arc_acc + beta_acc[arc_end]
    c_avg = float(alpha_acc[n_nodes - 1])
    return float(log_total), occ, c_arc, float(c_avg)


def accumulate_frame_state(n_frames, n_states, arc_t0, state_offsets, states, weights):
    """Scatter per-arc weights onto a [frames x states] grid.

    Arc ``a`` occupies frames ``arc_t0[a] + j`` with state
    ``states[state_offsets[a] + j]``; each such cell accumulates
    ``weights[a]``.
    """
    out = np.zeros((n_frames, n_states))
    n_arcs = arc_t0.shape[0]
    for a in range(n_arcs):
        lo = state_offsets[a]
        hi = state_offsets[a + 1]
        span = hi - lo
        t = np.arange(arc_t0[a], arc_t0[a] + span)
        np.add.at(out, (t, states[lo:hi]), weights[a])
    return out


def segment_state_bounds(duration, states_per_phone):
    """Frame boundaries of the even within-segment state allocation."""
    return [(j * duration) // states_per_phone for j in range(states_per_phone + 1)]


def viterbi_segments(
    frame_scores,
    num_phones,
    states_per_phone,
    log_init,
    log_bigram,
    min_dur,
    max_dur,
    prior_scale,
):
    """Best phone segmentation of a score matrix under a bigram prior.

    ``frame_scores`` is [T x num_phones*states_per_phone], already scaled.
    Within a segment of duration d, frames map onto the phone's states by
    the canonical even split. Ties break toward the lower phone id.

    Returns (phones, durations, score).
    """
    T, n_states = frame_scores.shape
    P, S = num_phones, states_per_phone
    cum = np.zeros((T + 1, n_states))
    np.cumsum(frame_scores, axis=0, out=cum[1:])
    scaled_init = prior_scale * log_init
    scaled_bigram = prior_scale * log_bigram
    bounds_by_dur = [segment_state_bounds(d, S) for d in range(max_dur + 1)]

    best = np.full((T + 1, P), NEG_INF)
    back_dur = np.zeros((T + 1, P), dtype=np.int32)
    back_prev = np.full((T + 1, P), -1, dtype=np.int32)

    for t in range(min_dur, T + 1):
        for p in range(P):
            base = p * S
            best_score = NEG_INF
            best_d = 0
            best_q = -1
            for d in range(min_dur, min(max_dur, t) + 1):
                t0 = t - d
                bounds = bounds_by_dur[d]
                seg = 0.0
                for j in range(S):
                    seg += cum[t0 + bounds[j + 1], base + j] - cum[t0 + bounds[j], base + j]
                if t0 == 0:
                    cand = scaled_init[p] + seg
                    if cand > best_score:
                        best_score = cand
                        best_d = d
                        best_q = -1
                else:
                    prev = best[t0] + scaled_bigram[:, p]
                    q = int(np.argmax(prev))
                    cand = prev[q] + seg
                    if cand > best_score:
                        best_score = cand
                        best_d = d
                        best_q = q
            best[t, p] = best_score
            back_dur[t, p] = best_d
            back_prev[t, p] = best_q

    final_p = -1
    final_score = NEG_INF
    for p in range(P):
        if best[T, p] > final_score:
            final_score = best[T, p]
            final_p = p
    if final_p < 0:
        return np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int32), NEG_INF

    phones = []
    durs = []
    t, p = T, final_p
    while t > 0:
        phones.append(p)
        d = int(back_dur[t, p])
        durs.append(d)
        p_next = int(back_prev[t, p])
        t -= d
        p = p_next
    phones.reverse()
    durs.reverse()
    return (
        np.array(phones, dtype=np.int32),
        np.array(durs, dtype=np.int32),
        float(final_score),
    )


def edit_distance(a, b):
    """Levenshtein distance between two int sequences."""
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = np.arange(lb + 1, dtype=np.int64)
    curr = np.zeros(lb + 1, dtype=np.int64)
    for i in range(1, la + 1):
        curr[0] = i
        ai = a[i - 1]
        for j in range(1, lb + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, sub)
        prev, curr = curr, prev
    return int(prev[lb])
