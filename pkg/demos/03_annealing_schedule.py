"""The cooling schedule and the Metropolis acceptance rule, numerically.

Temperature decays as t0 / (1 + beta * ln n), so an N-step run spends most
of its time in a warm regime where moderately worse moves still pass; the
0.01 floor only binds at astronomically large step counts.
"""

import math
from random import Random

from icm.search import SearchConfig, accept, temperature


def main():
    config = SearchConfig()
    print("step      temperature")
    for n in (1, 2, 5, 10, 50, 100, 500, 2000, 10**6):
        print(f"{n:>8}  {temperature(n, config):.4f}")

    print("\nacceptance probability of a worsening move (delta = -2):")
    print("temperature   exp(delta/T)   empirical (20k trials)")
    for t in (10.0, 5.0, 2.0, 1.0, 0.5):
        rng = Random(0)
        trials = 20_000
        hits = sum(1 for _ in range(trials) if accept(-2.0, t, rng))
        print(f"{t:>11.1f}   {math.exp(-2.0 / t):>12.4f}   {hits / trials:.4f}")

    rng = Random(0)
    improving = all(accept(0.5, t, rng) for t in (10.0, 1.0, 0.01) for _ in range(1000))
    print(f"\nimproving moves are always accepted: {improving}")


if __name__ == "__main__":
    main()
