"""Compare the compiled lattice kernels against the pure-python fallback.

Builds a bank of synthetic lattices at a few sizes, then times the
forward-backward recursions and the segment Viterbi on both backends.
Both are always importable; the compiled one just has to win.

Run:  python3 benchmarks/kernel_bench.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from nghf._kernels import BACKEND, get_backend
from nghf.lattice import Lattice
from nghf.task import emission_logliks, generate_corpus, make_world, build_lattice


def build_bank(num_utts, beam, seed):
    world = make_world(num_phones=5, states_per_phone=2, input_dim=6, seed=seed)
    corpus = generate_corpus(world, num_utts, seed=seed + 1, min_phones=4, max_phones=8)
    bank = []
    for utt in corpus:
        scores = emission_logliks(world, utt.frames)
        lat = build_lattice(world, utt, scores, beam=beam, kappa=0.5)
        arc_scores = lat.score_arcs(scores, kappa=0.5)
        acc = np.zeros(lat.num_arcs)
        bank.append((lat, arc_scores, acc, scores))
    return world, bank


def time_forward_backward(kern, bank, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for lat, arc_scores, acc, _ in bank:
            kern.forward_backward(
                lat.num_nodes,
                lat.arc_start,
                lat.arc_end,
                arc_scores,
                acc,
                lat.in_offsets,
                lat.in_arcs,
                lat.out_offsets,
                lat.out_arcs,
            )
        best = min(best, time.perf_counter() - t0)
    return best


def time_viterbi(kern, world, bank, repeats):
    log_bigram = np.ascontiguousarray(world.log_bigram)
    log_init = np.ascontiguousarray(world.log_init)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _, _, _, frame_scores in bank:
            kern.viterbi_segments(
                np.ascontiguousarray(0.5 * frame_scores),
                world.num_phones,
                world.states_per_phone,
                log_init,
                log_bigram,
                world.dur_min,
                world.dur_max,
                1.0,
            )
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--utterances", type=int, default=64)
    parser.add_argument("--beam", type=int, default=6)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    world, bank = build_bank(args.utterances, args.beam, args.seed)
    arcs = sum(lat.num_arcs for lat, _, _, _ in bank)
    frames = sum(lat.num_frames for lat, _, _, _ in bank)
    print(f"active backend: {BACKEND}")
    print(f"bank: {len(bank)} lattices, {arcs} arcs, {frames} frames, beam {args.beam}")
    print()

    rows = []
    for name in ("python", "compiled"):
        try:
            kern = get_backend(name)
        except (ValueError, ImportError) as exc:
            print(f"{name}: unavailable ({exc})")
            continue
        fb = time_forward_backward(kern, bank, args.repeats)
        vit = time_viterbi(kern, world, bank, args.repeats)
        rows.append((name, fb, vit))

    print(f"{'backend':<10} {'forward-backward':>18} {'viterbi':>12}")
    for name, fb, vit in rows:
        print(f"{name:<10} {fb * 1e3:>15.2f} ms {vit * 1e3:>9.2f} ms")
    if len(rows) == 2:
        print()
        print(f"speedup: forward-backward {rows[0][1] / rows[1][1]:.1f}x, "
              f"viterbi {rows[0][2] / rows[1][2]:.1f}x")


if __name__ == "__main__":
    main()
