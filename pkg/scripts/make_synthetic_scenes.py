"""Write the five-scene synthetic annotation set plus a default config."""

import argparse
from pathlib import Path

from cocomatte.synthetic import write_config, write_scene_set


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ann = write_scene_set(args.root, seed=args.seed)
    cfg = write_config(args.root)
    print(f"annotations: {ann}\nconfig: {cfg}")


if __name__ == "__main__":
    main()
