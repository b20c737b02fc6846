"""Synthetic sequence-labelling task with lattice supervision.

A small world model emits Gaussian frames from per-state cluster means.
Utterances are phone sequences with known segmentations; hypothesis
lattices hold the reference path plus decoded competitors. The training
criterion is expected path accuracy over the lattice (a minimum-risk
objective), with frame cross-entropy available for pre-training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, lattice as lat
from .curvature import CurvatureOperator
from .network import backprop, forward, softmax
from .params import GradientVector


@dataclass(frozen=True)
class WorldModel:
    """Generative parameters of the toy task.

    States are numbered ``phone * states_per_phone + j``. Bigram and
    initial phone log-probabilities double as the decoding prior.
    """

    num_phones: int
    states_per_phone: int
    input_dim: int
    emission_means: np.ndarray  # [num_states, input_dim]
    emission_scale: float
    log_init: np.ndarray  # [num_phones]
    log_bigram: np.ndarray  # [num_phones, num_phones]
    dur_min: int
    dur_max: int

    @property
    def num_states(self) -> int:
        return self.num_phones * self.states_per_phone


def make_world(
    num_phones=5,
    states_per_phone=2,
    input_dim=6,
    seed=0,
    separation=2.0,
    emission_scale=1.0,
    dur_min=3,
    dur_max=8,
):
    if dur_min < 1 or dur_max < dur_min:
        raise ValueError(f"bad duration range [{dur_min}, {dur_max}]")
    rng = np.random.default_rng(seed)
    k = num_phones * states_per_phone
    means = separation * rng.standard_normal((k, input_dim))
    init = 0.5 + rng.random(num_phones)
    bigram = 0.5 + rng.random((num_phones, num_phones))
    # discourage immediate repeats so competitor sequences stay phonetically
    # distinct from the reference more often
    np.fill_diagonal(bigram, 0.25)
    return WorldModel(
        num_phones=num_phones,
        states_per_phone=states_per_phone,
        input_dim=input_dim,
        emission_means=means,
        emission_scale=emission_scale,
        log_init=np.log(init / init.sum()),
        log_bigram=np.log(bigram / bigram.sum(axis=1, keepdims=True)),
        dur_min=dur_min,
        dur_max=dur_max,
    )


@dataclass(frozen=True, eq=False)
class Utterance:
    frames: np.ndarray  # [T, input_dim]
    ref_phones: np.ndarray  # [L]
    ref_durations: np.ndarray  # [L]
    ref_states: np.ndarray  # [T]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def segment_states(phone, duration, states_per_phone):
    """Canonical state labels for one phone segment (even split)."""
    bounds = _kernels.segment_state_bounds(duration, states_per_phone)
    out = np.empty(duration, dtype=np.int32)
    for j in range(states_per_phone):
        out[bounds[j] : bounds[j + 1]] = phone * states_per_phone + j
    return out


def generate_corpus(world, num_utterances, seed, min_phones=3, max_phones=6):
    """Sample utterances from the world model."""
    rng = np.random.default_rng(seed)
    p_init = np.exp(world.log_init)
    p_bigram = np.exp(world.log_bigram)
    utts = []
    for _ in range(num_utterances):
        length = int(rng.integers(min_phones, max_phones + 1))
        phones = np.empty(length, dtype=np.int32)
        phones[0] = rng.choice(world.num_phones, p=p_init)
        for i in range(1, length):
            phones[i] = rng.choice(world.num_phones, p=p_bigram[phones[i - 1]])
        durs = rng.integers(world.dur_min, world.dur_max + 1, size=length).astype(np.int32)
        states = np.concatenate(
            [segment_states(p, d, world.states_per_phone) for p, d in zip(phones, durs)]
        )
        frames = world.emission_means[states] + world.emission_scale * rng.standard_normal(
            (states.shape[0], world.input_dim)
        )
        utts.append(Utterance(frames, phones, durs, states))
    return utts


def emission_logliks(world, frames):
    """Per-frame log-likelihood of each state's spherical Gaussian."""
    d2 = ((frames[:, None, :] - world.emission_means[None, :, :]) ** 2).sum(axis=2)
    var = world.emission_scale**2
    norm = 0.5 * world.input_dim * np.log(2.0 * np.pi * var)
    return -0.5 * d2 / var - norm


def viterbi_decode(world, frame_scores, kappa, prior_scale=1.0):
    """Best phone sequence under scaled frame scores plus the prior."""
    phones, durs, score = _kernels.viterbi_segments(
        np.ascontiguousarray(kappa * frame_scores, dtype=np.float64),
        world.num_phones,
        world.states_per_phone,
        np.ascontiguousarray(world.log_init),
        np.ascontiguousarray(world.log_bigram),
        world.dur_min,
        world.dur_max,
        prior_scale,
    )
    return phones, durs, score


def sequence_error_rate(hyps, refs):
    """Summed edit distance divided by summed reference length."""
    if len(hyps) != len(refs):
        raise ValueError("hypothesis and reference counts differ")
    errors = 0
    total = 0
    for hyp, ref in zip(hyps, refs):
        errors += _kernels.edit_distance(
            np.asarray(hyp, dtype=np.int32), np.asarray(ref, dtype=np.int32)
        )
        total += len(ref)
    if total == 0:
        raise ValueError("empty reference set")
    return errors / total


def _segment_score_table(frame_scores, num_phones, states_per_phone, dur_min, dur_max):
    """seg[d][t][p]: score of phone p spanning [t, t+d) under the even split."""
    t_total, _ = frame_scores.shape
    cum = np.vstack([np.zeros(frame_scores.shape[1]), np.cumsum(frame_scores, axis=0)])
    table = {}
    for d in range(dur_min, dur_max + 1):
        if d > t_total:
            break
        bounds = _kernels.segment_state_bounds(d, states_per_phone)
        scores = np.zeros((t_total - d + 1, num_phones))
        for p in range(num_phones):
            for j in range(states_per_phone):
                b0, b1 = bounds[j], bounds[j + 1]
                if b1 > b0:
                    col = p * states_per_phone + j
                    starts = np.arange(t_total - d + 1)
                    scores[:, p] += cum[starts + b1, col] - cum[starts + b0, col]
        table[d] = scores
    return table


def nbest_decode(world, frame_scores, n, kappa, prior_scale=1.0, width=None):
    """Top-n scoring (phones, durations) paths by segment dynamic programming.

    Keeps a beam of ``width`` partial paths per (time, last phone) cell,
    so the list is exact only when the beam is wide enough; competitors
    for lattice building only need good coverage, not exactness.
    """
    t_total = frame_scores.shape[0]
    if width is None:
        width = max(2 * n, 8)
    seg = _segment_score_table(
        kappa * frame_scores,
        world.num_phones,
        world.states_per_phone,
        world.dur_min,
        world.dur_max,
    )
    # cells[t][p]: list of (score, phones, durs) partial paths ending at t
    cells = [[[] for _ in range(world.num_phones)] for _ in range(t_total + 1)]
    for d, scores in seg.items():
        for p in range(world.num_phones):
            s = prior_scale * world.log_init[p] + scores[0, p]
            cells[d][p].append((s, (p,), (d,)))
    for t in range(1, t_total):
        for p_prev in range(world.num_phones):
            entries = cells[t][p_prev]
            if not entries:
                continue
            entries.sort(key=lambda e: -e[0])
            del entries[width:]
            for d, scores in seg.items():
                if t + d > t_total:
                    continue
                for p in range(world.num_phones):
                    step = prior_scale * world.log_bigram[p_prev, p] + scores[t, p]
                    cell = cells[t + d][p]
                    for s, phones, durs in entries:
                        cell.append((s + step, phones + (p,), durs + (d,)))
    final = []
    for p in range(world.num_phones):
        final.extend(cells[t_total][p])
    final.sort(key=lambda e: -e[0])
    best = {}
    ordered = []
    for s, phones, durs in final:
        if phones not in best:
            best[phones] = (s, durs)
            ordered.append((s, phones, durs))
        if len(ordered) >= n:
            break
    return ordered


def build_lattice(world, utterance, frame_scores, beam, kappa, prior_scale=1.0):
    """Reference path plus up to beam-1 decoded competitor sequences.

    Paths are merged as a prefix tree sharing one source and one sink, so
    the lattice's path set is exactly the selected hypothesis set.
    """
    if beam < 2:
        raise lat.LatticeError(f"beam must be at least 2, got {beam}")
    t_total = utterance.num_frames
    ref = (tuple(int(p) for p in utterance.ref_phones), tuple(int(d) for d in utterance.ref_durations))
    paths = [ref]
    for _, phones, durs in nbest_decode(world, frame_scores, beam + 2, kappa, prior_scale):
        if phones == ref[0]:
            continue
        paths.append((phones, durs))
        if len(paths) >= beam:
            break

    sp = prior_scale
    node_times = [0]
    children = {}
    arcs = []
    sink = None
    for phones, durs in paths:
        node = 0
        t = 0
        for i, (p, d) in enumerate(zip(phones, durs)):
            t += d
            last = i == len(phones) - 1
            prior = sp * (world.log_init[p] if i == 0 else world.log_bigram[phones[i - 1], p])
            if last:
                if sink is None:
                    sink = len(node_times)
                    node_times.append(t_total)
                key = (node, p, d, True)
                if key not in children:
                    children[key] = sink
                    arcs.append((node, sink, p, prior))
                node = sink
            else:
                key = (node, p, d, False)
                child = children.get(key)
                if child is None:
                    child = len(node_times)
                    node_times.append(t)
                    children[key] = child
                    arcs.append((node, child, p, prior))
                node = child
        if t != t_total:
            raise lat.LatticeError(
                f"path durations sum to {t}, expected {t_total} frames"
            )
    return lat.Lattice(node_times, arcs, world.states_per_phone)


def arc_accuracies(lattice, ref_phones, ref_durations):
    """Per-arc accuracy against the reference segmentation.

    For each arc the best-matching reference phone contributes
    -1 + 2e on a label match and -1 + e otherwise, where e is the
    overlap fraction of that reference segment.
    """
    starts = np.concatenate([[0], np.cumsum(ref_durations)])
    acc = np.empty(lattice.num_arcs)
    t0s = lattice.arc_t0
    t1s = lattice.arc_t1
    for a in range(lattice.num_arcs):
        t0, t1, p = int(t0s[a]), int(t1s[a]), int(lattice.arc_phone[a])
        best = -1.0
        for i, q in enumerate(ref_phones):
            r0, r1 = int(starts[i]), int(starts[i + 1])
            overlap = min(t1, r1) - max(t0, r0)
            if overlap <= 0:
                continue
            e = overlap / (r1 - r0)
            cand = -1.0 + (2.0 * e if p == q else e)
            if cand > best:
                best = cand
        acc[a] = best
    return acc


def mpe_criterion_and_grad(utterance, lattice, outputs, kappa):
    """Expected path accuracy and its gradient in the output activations.

    Returns (value, grad[T x K], posteriors). The value is the raw
    expected accuracy of this utterance, not yet normalized by reference
    length.
    """
    acc = arc_accuracies(lattice, utterance.ref_phones, utterance.ref_durations)
    post, c_arc, c_avg = lat.forward_backward_with_accuracy(lattice, outputs, kappa, acc)
    weights = kappa * post.arc_occupancy * (c_arc - c_avg)
    grad = lattice.frame_state_sums(weights, outputs.shape[1])
    return c_avg, grad, post


def mmi_output_grad(utterance, posteriors, kappa):
    """Activation gradient of the reference-path log-probability ratio.

    kappa * (one-hot reference states minus lattice posteriors); used to
    form per-utterance gradients for the outer-product curvature.
    """
    grad = -kappa * posteriors.gamma
    rows = np.arange(utterance.num_frames)
    grad[rows, utterance.ref_states] += kappa
    return grad


def frame_ce_criterion_and_grad(ref_states, outputs):
    """Mean reference log-probability and the summed-form gradient.

    The value averages log softmax probabilities over frames; the
    returned gradient is of the frame-summed log-likelihood (the value
    times the frame count), i.e. one-hot minus softmax per frame.
    """
    probs = softmax(outputs)
    rows = np.arange(outputs.shape[0])
    logp = np.log(probs[rows, ref_states])
    grad = -probs
    grad[rows, ref_states] += 1.0
    return float(logp.mean()), grad


def mean_posterior_entropy(outputs):
    """Average entropy (nats) of the per-frame output distribution."""
    probs = softmax(outputs)
    ent = -(probs * np.log(np.maximum(probs, 1e-300))).sum(axis=1)
    return float(ent.mean())


class SequenceProblem:
    """Training-problem view of a corpus: criterion, gradient, curvature.

    The corpus criterion is summed expected accuracy divided by the
    summed reference phone count, so it reads as a per-phone accuracy.
    """

    def __init__(self, net, world, utterances, lattices, kappa, prior_scale=1.0):
        # lattices may be None for frame-level use (pre-training, decoding)
        if lattices is not None and len(utterances) != len(lattices):
            raise ValueError("one lattice per utterance required")
        self.net = net
        self.world = world
        self.utterances = utterances
        self.lattices = lattices
        self.kappa = kappa
        self.prior_scale = prior_scale

    @property
    def num_utterances(self) -> int:
        return len(self.utterances)

    def _ref_phone_total(self, indices):
        return sum(len(self.utterances[i].ref_phones) for i in indices)

    def _require_lattices(self):
        if self.lattices is None:
            raise ValueError("sequence criterion needs lattices; build them first")

    def criterion(self, theta, indices):
        self._require_lattices()
        total = 0.0
        for i in indices:
            utt = self.utterances[i]
            outputs, _ = forward(self.net, theta, utt.frames)
            value, _, _ = mpe_criterion_and_grad(utt, self.lattices[i], outputs, self.kappa)
            total += value
        return total / self._ref_phone_total(indices)

    def criterion_and_grad(self, theta, indices):
        self._require_lattices()
        total = 0.0
        grad = np.zeros(theta.size)
        for i in indices:
            utt = self.utterances[i]
            outputs, trace = forward(self.net, theta, utt.frames)
            value, out_grad, _ = mpe_criterion_and_grad(
                utt, self.lattices[i], outputs, self.kappa
            )
            total += value
            grad += backprop(self.net, trace, out_grad).values
        norm = self._ref_phone_total(indices)
        return total / norm, GradientVector(grad / norm, theta.layout, len(indices))

    def curvature(self, theta, indices, fisher_indices=None):
        """Curvature operator at theta.

        The linearized products run over ``indices`` (they cost one
        forward/backward pair per utterance per solver iteration, so the
        batch is kept small). The outer-product metric is assembled from
        per-utterance gradients over ``fisher_indices`` when given, which
        can afford a larger batch since each utterance is visited once.
        """
        self._require_lattices()
        traces = []
        gammas = []
        for i in indices:
            utt = self.utterances[i]
            outputs, trace = forward(self.net, theta, utt.frames)
            _, _, post = mpe_criterion_and_grad(utt, self.lattices[i], outputs, self.kappa)
            traces.append(trace)
            gammas.append(post.gamma)
        utt_grads = []
        for i in indices if fisher_indices is None else fisher_indices:
            utt = self.utterances[i]
            outputs, trace = forward(self.net, theta, utt.frames)
            post = lat.forward_backward(self.lattices[i], outputs, self.kappa)
            g = mmi_output_grad(utt, post, self.kappa)
            utt_grads.append(backprop(self.net, trace, g).values)
        return CurvatureOperator(self.net, theta, traces, gammas, np.array(utt_grads), self.kappa)

    def ce_criterion_and_grad(self, theta, indices):
        """Frame cross-entropy over a batch: per-frame mean and its gradient."""
        total = 0.0
        frames = 0
        grad = np.zeros(theta.size)
        for i in indices:
            utt = self.utterances[i]
            outputs, trace = forward(self.net, theta, utt.frames)
            value, out_grad = frame_ce_criterion_and_grad(utt.ref_states, outputs)
            total += value * utt.num_frames
            frames += utt.num_frames
            grad += backprop(self.net, trace, out_grad).values
        return total / frames, GradientVector(grad / frames, theta.layout, len(indices))

    def decode_error_rate(self, theta, indices):
        hyps = []
        refs = []
        for i in indices:
            utt = self.utterances[i]
            outputs, _ = forward(self.net, theta, utt.frames)
            phones, _, _ = viterbi_decode(self.world, outputs, self.kappa, self.prior_scale)
            hyps.append(phones)
            refs.append(utt.ref_phones)
        return sequence_error_rate(hyps, refs)

    def entropy(self, theta, indices):
        total = 0.0
        frames = 0
        for i in indices:
            utt = self.utterances[i]
            outputs, _ = forward(self.net, theta, utt.frames)
            total += mean_posterior_entropy(outputs) * utt.num_frames
            frames += utt.num_frames
        return total / frames
