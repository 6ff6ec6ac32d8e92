#!/usr/bin/env python3
"""Brute-force reference for the worsened three-phase session at one (n, M).

Every order statistic is formed from explicitly drawn exponentials (no
inverse-CDF shortcuts), and the closed forms are evaluated with exact
rational arithmetic. Output rows follow the golden CSV schema:
n,M,lambda_intra,lambda_inter,quantity_name,value,source_tag
"""
import argparse
import math
from fractions import Fraction

import numpy as np


def harmonic(k):
    return sum(Fraction(1, j) for j in range(1, k + 1))


def gen_harmonic(k):
    return sum(Fraction(1, j * j) for j in range(1, k + 1))


def closed_form(n, m, lam, lamt):
    lam = Fraction(lam)
    lamt = Fraction(lamt)
    c = n // m
    ey1 = m / lam * harmonic(n)
    ey2 = Fraction(n, m ** 3) / lamt * harmonic(m)
    ey3 = m / lam * harmonic(c)
    s1 = m * m / lam ** 2 * harmonic(n) ** 2 + m / lam ** 2 * gen_harmonic(n)
    s2 = (Fraction(n * n, m ** 6) / lamt ** 2 * harmonic(m) ** 2
          + Fraction(n, m ** 5) / lamt ** 2 * gen_harmonic(m))
    s3 = m * m / lam ** 2 * harmonic(c) ** 2 + m / lam ** 2 * gen_harmonic(c)
    ez = Fraction(m - 1, 2) / lam * harmonic(c) + 1 / lam
    ey = ey1 + ey2 + ey3
    eyy = s1 + s2 + s3 + 2 * (ey1 * ey2 + ey1 * ey3 + ey2 * ey3)
    delta = ey1 + ey2 + ez + eyy / (2 * ey)
    return {
        "e_y1": ey1, "e_y2": ey2, "e_y3": ey3,
        "e_y1_sq": s1, "e_y2_sq": s2, "e_y3_sq": s3,
        "e_z": ez, "e_y": ey, "e_y_sq": eyy, "delta": delta,
    }


def simulate_chunk(rng, sessions, n, m, lam, lamt):
    c = n // m
    # Phase I: M rounds, each waits for all n intra-cell receptions.
    y1 = rng.exponential(1 / lam, (sessions, m, n)).max(axis=2).sum(axis=1)
    # Phase II: per cell, every source's update needs the first of M^2
    # inter-cell copies; the cell finishes with its slowest source.
    first = rng.exponential(1 / lamt, (sessions, c, m, m * m)).min(axis=3)
    y2 = first.max(axis=2).sum(axis=1)
    # Phase III: M rounds, each the slowest of n/M parallel in-cell relays.
    rounds = rng.exponential(1 / lam, (sessions, m, c)).max(axis=2)
    y3 = rounds.sum(axis=1)
    j = rng.integers(0, m, sessions)
    prefix = np.concatenate([np.zeros((sessions, 1)), np.cumsum(rounds, axis=1)], axis=1)
    z = prefix[np.arange(sessions), j] + rng.exponential(1 / lam, sessions)
    return y1, y2, y3, z


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--lambda-intra", type=float, default=1.0)
    ap.add_argument("--lambda-inter", type=float, default=1.0)
    ap.add_argument("--sessions", type=int, default=1_000_000)
    ap.add_argument("--batches", type=int, default=32)
    ap.add_argument("--seed", type=int, default=20191014)
    ap.add_argument("--chunk", type=int, default=20_000)
    args = ap.parse_args()
    n, m, lam, lamt = args.n, args.m, args.lambda_intra, args.lambda_inter

    rng = np.random.default_rng(args.seed)
    parts = []
    done = 0
    while done < args.sessions:
        k = min(args.chunk, args.sessions - done)
        parts.append(simulate_chunk(rng, k, n, m, lam, lamt))
        done += k
    y1, y2, y3, z = (np.concatenate([p[i] for p in parts]) for i in range(4))
    y = y1 + y2 + y3
    d = y1 + y2 + z

    def mean_se(x):
        return x.mean(), x.std(ddof=1) / math.sqrt(len(x))

    samples = {
        "e_y1": y1, "e_y2": y2, "e_y3": y3,
        "e_y1_sq": y1 * y1, "e_y2_sq": y2 * y2, "e_y3_sq": y3 * y3,
        "e_z": z, "e_y": y, "e_y_sq": y * y,
    }
    rows = []
    exact = closed_form(n, m, lam, lamt)
    for name in ["e_y1", "e_y2", "e_y3", "e_y1_sq", "e_y2_sq", "e_y3_sq",
                 "e_z", "e_y", "e_y_sq", "delta"]:
        rows.append((name, float(exact[name]), "closed_form_rational"))
    for name, x in samples.items():
        mu, se = (float(v) for v in mean_se(x))
        rows.append((name, mu, "monte_carlo_bruteforce"))
        rows.append((name + "_stderr", se, "monte_carlo_bruteforce"))

    # Renewal-reward age with batch-means standard error.
    est = d.mean() + (y * y).mean() / (2 * y.mean())
    per_batch = []
    for bd, by in zip(np.array_split(d, args.batches), np.array_split(y, args.batches)):
        per_batch.append(bd.mean() + (by * by).mean() / (2 * by.mean()))
    est = float(est)
    se = float(np.std(per_batch, ddof=1)) / math.sqrt(args.batches)
    rows.append(("delta", est, "monte_carlo_bruteforce"))
    rows.append(("delta_stderr", se, "monte_carlo_bruteforce"))

    print("n,M,lambda_intra,lambda_inter,quantity_name,value,source_tag")
    for name, value, tag in rows:
        print(f"{n},{m},{lam:g},{lamt:g},{name},{value!r},{tag}")


if __name__ == "__main__":
    main()
