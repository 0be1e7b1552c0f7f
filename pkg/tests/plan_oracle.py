"""Brute-force build-order oracle, independent of the planner's bitmask search.

Enumerates station sequences by increasing length (each station must place
a brick, consecutive stations differ) and returns the smallest
(station count, travel distance).
"""

import itertools

import numpy as np

from brickyard.model import Blueprint, BrickType

T_X = 0.675
EPS = 1e-9


def bricks_of(bp: Blueprint):
    out = []
    for k, layer in enumerate(bp.layers):
        x = 0.0
        for i, t in enumerate(layer):
            out.append({"key": (k, i), "lo": x, "hi": x + t.length, "c": x + t.length / 2})
            x += t.length
    return out


def closure(bricks, built: frozenset, p: float, h: float = T_X) -> frozenset:
    built = set(built)
    new = set()
    grew = True
    while grew:
        grew = False
        for b in bricks:
            k, i = b["key"]
            if b["key"] in built or abs(b["c"] - p) > h + EPS:
                continue
            if i > 0 and (k, i - 1) not in built:
                continue
            below = [a for a in bricks if a["key"][0] == k - 1
                     and min(a["hi"], b["hi"]) - max(a["lo"], b["lo"]) > 0.01 + EPS]
            if any(a["key"] not in built for a in below):
                continue
            built.add(b["key"])
            new.add(b["key"])
            grew = True
    return frozenset(new)


def brute_force_plan(bp: Blueprint, max_len: int = 12):
    """Lexicographic optimum (station count, distance, station sequence)."""
    bricks = bricks_of(bp)
    full = frozenset(b["key"] for b in bricks)
    cands = sorted({round(b["c"] + T_X, 9) for b in bricks})
    frontier = [((), frozenset(), 0.0)]
    for depth in range(1, max_len + 1):
        nxt = []
        done = []
        for seq, built, d in frontier:
            for p in cands:
                if seq and p == seq[-1]:
                    continue
                new = closure(bricks, built, p)
                if not new:
                    continue
                dd = d + (abs(p - seq[-1]) if seq else 0.0)
                state = (seq + (p,), built | new, dd)
                (done if state[1] == full else nxt).append(state)
        if done:
            best = min(round(s[2], 9) for s in done)
            return depth, best, min(s[0] for s in done if round(s[2], 9) == best)
        frontier = nxt
    raise RuntimeError("no complete sequence")


def brute_force(bp: Blueprint, max_len: int = 12):
    """(station count, distance) of the exhaustive optimum."""
    return brute_force_plan(bp, max_len)[:2]


def random_small_blueprint(rng: np.random.Generator, max_bricks: int = 12) -> Blueprint:
    """1-3 equal-length layers filled by random brick sequences, <= max_bricks total."""
    types = [BrickType.RED, BrickType.GREEN, BrickType.BLUE]
    while True:
        n_layers = int(rng.integers(1, 4))
        length_dm = int(rng.choice([6, 12, 18, 24, 30]))
        layers = []
        for _ in range(n_layers):
            left = length_dm
            row = []
            while left > 0:
                fits = [t for t in types if round(t.length * 10) <= left]
                t = fits[int(rng.integers(len(fits)))]
                row.append(t)
                left -= round(t.length * 10)
            layers.append(tuple(row))
        if sum(map(len, layers)) <= max_bricks:
            return Blueprint(tuple(layers))


def all_sequences(bp: Blueprint, n: int):
    """Every length-n station sequence (for tests that need exhaustive checks)."""
    bricks = bricks_of(bp)
    cands = sorted({round(b["c"] + T_X, 9) for b in bricks})
    return itertools.product(cands, repeat=n)
