"""
Kernels
Compiled inner loops: the passage-time sweep, rectangle last-passage DP and the Harris event loop.
All kernels release the GIL so replicas can run on threads.
"""

import numpy as np
from numba import njit

# backpointer codes
NONE = 0
FROM_LEFT = 1
FROM_BELOW = 2
FROM_BOUNDARY = 3

# event kinds
FIRST_CLASS = 0
SECOND_RIGHT = 1
SECOND_LEFT = 2

CLOCKS_EXHAUSTED = -1


@njit(cache=True, nogil=True)
def growth_sweep(weights, gamma0, x0, y0, g, label, back):
    """
    Fill g, label and back over a row-major box whose lower-left corner is (x0, y0).
    Sites in gamma0 get g = 0, label 0, back NONE. Predecessors outside the box lie in Gamma_0.
    Ties between the two predecessors go to the site below.
    """

    rows, cols = weights.shape
    for r in range(rows):
        for c in range(cols):
            if gamma0[r, c]:
                g[r, c] = 0.0
                label[r, c] = 0
                back[r, c] = NONE
                continue

            left_in = c > 0 and not gamma0[r, c - 1]
            below_in = r > 0 and not gamma0[r - 1, c]
            left = g[r, c - 1] if left_in else 0.0
            below = g[r - 1, c] if below_in else 0.0

            if not left_in and not below_in:
                back[r, c] = FROM_BOUNDARY
                g[r, c] = weights[r, c]
            elif left > below:
                back[r, c] = FROM_LEFT
                g[r, c] = weights[r, c] + left
            else:
                back[r, c] = FROM_BELOW
                g[r, c] = weights[r, c] + below

            if x0 + c <= 0:
                label[r, c] = 1
            elif y0 + r <= 0:
                label[r, c] = 2
            elif back[r, c] == FROM_LEFT:
                label[r, c] = label[r, c - 1]
            else:
                label[r, c] = label[r - 1, c]


@njit(cache=True, nogil=True)
def recurrence_residual(weights, gamma0, g):
    """
    :return: Largest |g - X - max(g_left, g_below)| over sites outside Gamma_0
    """

    rows, cols = weights.shape
    worst = 0.0
    for r in range(rows):
        for c in range(cols):
            if gamma0[r, c]:
                if g[r, c] != 0.0:
                    worst = max(worst, abs(g[r, c]))
                continue
            left = g[r, c - 1] if c > 0 else 0.0
            below = g[r - 1, c] if r > 0 else 0.0
            worst = max(worst, abs(g[r, c] - (weights[r, c] + max(left, below))))
    return worst


@njit(cache=True, nogil=True)
def rectangle_lpp(weights):
    """
    Last-passage DP from the lower-left corner of a row-major rectangle.
    :return: Table T with T[r, c] the maximal path weight from (0, 0) to (r, c), endpoints included
    """

    rows, cols = weights.shape
    out = np.empty((rows, cols))
    for r in range(rows):
        for c in range(cols):
            if r == 0 and c == 0:
                best = 0.0
            elif r == 0:
                best = out[r, c - 1]
            elif c == 0:
                best = out[r - 1, c]
            else:
                best = max(out[r, c - 1], out[r - 1, c])
            out[r, c] = weights[r, c] + best
    return out


@njit(cache=True, nogil=True)
def _sift_down(heap_t, heap_b, i, n):
    while True:
        left = 2 * i + 1
        if left >= n:
            return
        child = left
        right = left + 1
        if right < n and heap_t[right] < heap_t[left]:
            child = right
        if heap_t[child] < heap_t[i]:
            heap_t[i], heap_t[child] = heap_t[child], heap_t[i]
            heap_b[i], heap_b[child] = heap_b[child], heap_b[i]
            i = child
        else:
            return


@njit(cache=True, nogil=True)
def harris_events(sites, clocks, t_max, sample_times, x_samples, record, ev_time, ev_bond, ev_kind):
    """
    Event-driven TASEP on a closed window. Bond b joins window cells b and b + 1 and rings at the
    partial sums of clocks[b]. Values: 0 hole, 1 particle, 2 second-class particle.
    On a ring: (1, 0) -> particle jumps right, (1, 2) -> second class moves left,
    (2, 0) -> second class moves right.

    :param sites: Window occupations, updated in place to the state at t_max
    :param clocks: Per-bond inter-ring times, shape (bonds, K)
    :param sample_times: Increasing times at which the second-class cell is recorded into x_samples
        (-1 when there is none)
    :return: Number of executed moves, or CLOCKS_EXHAUSTED when a bond used up its K rings before t_max
    """

    n_bonds, depth = clocks.shape
    heap_t = np.empty(n_bonds)
    heap_b = np.empty(n_bonds, dtype=np.int64)
    used = np.ones(n_bonds, dtype=np.int64)
    for b in range(n_bonds):
        heap_t[b] = clocks[b, 0]
        heap_b[b] = b
    for i in range(n_bonds // 2 - 1, -1, -1):
        _sift_down(heap_t, heap_b, i, n_bonds)

    x = -1
    for i in range(sites.size):
        if sites[i] == 2:
            x = i

    n_samples = sample_times.size
    s = 0
    moves = 0
    while n_bonds > 0:
        t = heap_t[0]
        b = heap_b[0]
        while s < n_samples and sample_times[s] < t:
            x_samples[s] = x
            s += 1
        if t > t_max:
            break

        a = sites[b]
        c = sites[b + 1]
        kind = -1
        if a == 1 and c == 0:
            kind = FIRST_CLASS
        elif a == 1 and c == 2:
            kind = SECOND_LEFT
            x = b
        elif a == 2 and c == 0:
            kind = SECOND_RIGHT
            x = b + 1
        if kind >= 0:
            sites[b] = c
            sites[b + 1] = a
            if record:
                ev_time[moves] = t
                ev_bond[moves] = b
                ev_kind[moves] = kind
            moves += 1

        k = used[b]
        if k >= depth:
            return CLOCKS_EXHAUSTED
        heap_t[0] = t + clocks[b, k]
        used[b] = k + 1
        _sift_down(heap_t, heap_b, 0, n_bonds)

    while s < n_samples:
        x_samples[s] = x
        s += 1
    return moves
