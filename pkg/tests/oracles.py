"""Independent reference implementations used by several test modules."""

import itertools
import math

from scipy.optimize import brentq


def lq_driver_star(A, B, C, Q, R):
    kappa = B * B / (R * R)

    def G(P, lam):
        return -kappa * P * P + Q * Q + P * C * C + 2 * A * P + 2 * lam * C
    return G


def enumerate_tree(N, T, terminal, G):
    """Non-recombining enumeration of all 2^N paths; each node solves its implicit step with brentq.

    Returns {(k, number_of_up_moves): (P, Lam)}, asserting that recombining paths agree."""
    dt = T / N
    sq = math.sqrt(dt)
    values = {}
    leaves = {}
    for path in itertools.product((-1, 1), repeat=N):
        w = sq * sum(path)
        leaves[path] = terminal(w)
    level = leaves
    for k in range(N - 1, -1, -1):
        nxt = {}
        for prefix in itertools.product((-1, 1), repeat=k):
            down, up = level[prefix + (-1,)], level[prefix + (1,)]
            expect = 0.5 * (up + down)
            lam = (up - down) / (2 * sq)
            P = brentq(lambda x: x - expect - dt * G(x, lam), expect - 1.0, expect + 1.0, xtol=1e-15, rtol=1e-15)
            nxt[prefix] = P
            key = (k, prefix.count(1))
            if key in values:
                assert abs(values[key][0] - P) <= 1e-13
            values[key] = (P, lam)
        level = nxt
    return values
