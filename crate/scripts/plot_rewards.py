#!/usr/bin/env python3
"""Plot the episode reward curve from a reward_history.csv file."""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("history", help="reward_history.csv written by `senseplace train`")
    parser.add_argument("--out", default="reward_curve.png")
    parser.add_argument("--window", type=int, default=100, help="moving-average window in episodes")
    args = parser.parse_args()

    df = pd.read_csv(args.history)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(df["episode"], df["total_reward"], lw=0.4, alpha=0.4, label="episode reward")
    ax.plot(df["episode"], df["total_reward"].rolling(args.window, min_periods=1).mean(),
            lw=1.5, label=f"{args.window}-episode average")
    ax.set_xlabel("episode")
    ax.set_ylabel("total reward")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
