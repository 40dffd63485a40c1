"""Sweep the fusion threshold on random accessory layouts and count merges.

Prints, per threshold and overlap mode, the mean number of merged
accessories per human and the spread of skip reasons.
"""

import argparse
from collections import Counter

import numpy as np

from cocomatte.fusion import FusionConfig, fuse_accessories

TIE, BOTTLE = 32, 44


def random_layout(rng, size=64, n_acc=6):
    human = np.zeros((size, size), bool)
    r, c = rng.integers(4, size // 3, 2)
    human[r : r + size // 2, c : c + size // 3] = True
    others = []
    for j in range(n_acc):
        m = np.zeros((size, size), bool)
        rr, cc = rng.integers(0, size - 8, 2)
        hh, ww = rng.integers(3, 14, 2)
        m[rr : rr + hh, cc : cc + ww] = True
        if rng.random() < 0.5:
            human &= ~m  # the accessory occludes the body
        others.append((j + 2, int(rng.choice([TIE, BOTTLE])), m))
    return (1, human), others


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--taus", type=float, nargs="+", default=[0.3, 0.5, 0.7, 0.8, 0.9, 0.95])
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    layouts = [random_layout(rng) for _ in range(args.trials)]
    layouts = [(h, o) for h, o in layouts if h[1].any()]
    print(f"{'mode':<5} {'tau':>5} {'merged/human':>13}  skip reasons")
    for mode in ("ioa", "iou"):
        for tau in args.taus:
            cfg = FusionConfig(tau=tau, overlap_mode=mode, accessory_ids={TIE, BOTTLE})
            merged, reasons = 0, Counter()
            for human, others in layouts:
                res = fuse_accessories(human, others, cfg)
                merged += len(res.merged_ids)
                reasons.update(r for _, r in res.skipped_ids)
            print(f"{mode:<5} {tau:>5.2f} {merged / len(layouts):>13.3f}  {dict(sorted(reasons.items()))}")


if __name__ == "__main__":
    main()
