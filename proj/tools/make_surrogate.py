#!/usr/bin/env python3
"""Writes the 33-house surrogate sewage tree used by the study.

Streets of houses drain into a trunk that ends at the outlet. Every house
gets a target CIR spread (standard deviation of its arrival time at the
receiver). The targets form a geometric ladder split into groups, with a wider
ratio between groups than inside them; they are assigned to houses at random
and each lateral length is solved so that lateral plus downstream pipes hit
the target. Houses in one group have similar CIR shapes at unrelated arrival
times. Some streets reach the trunk through a long collector pipe. Output is
deterministic for a given seed.
"""

import argparse
import math
import random

RADIUS = 0.055
INLET_FLOW = 5e-3
DIFFUSION = 0.2
LOG_MEAN, LOG_VAR = 18.69, 2.46

STREETS = [6, 5, 6, 5, 6, 5]
SPREAD_MIN, SPREAD_MAX = 10.0, 50.0  # s
GROUPS = [7, 7, 7, 6, 6]             # houses per spread group
GAP = 1.3                            # spread ratio between neighbouring groups
COLLECTORS = [0, 400, 0, 800, 0, 1200]  # m, pipe from each street to its trunk junction
MIN_LATERAL = 5.0                   # m
OUTLET_LENGTH, RX_Z = 150.0, 75.0


def pipe_moments(length, inlets_upstream):
    """Mean and variance (s, s^2) of the transit time through one pipe."""
    u = inlets_upstream * INLET_FLOW / (math.pi * RADIUS**2)
    d = RADIUS**2 * u**2 / (48.0 * DIFFUSION) + DIFFUSION
    return length / u, 2.0 * d * length / u**3


def spread_ladder(lo, hi, groups, gap):
    """Geometric spread targets in groups separated by a wider ratio."""
    n = sum(groups)
    step = (math.log(hi / lo) - (len(groups) - 1) * math.log(gap)) / (n - len(groups))
    if step < 0:
        raise ValueError("spread range too narrow for the requested gaps")
    out, x = [], math.log(lo)
    for i, size in enumerate(groups):
        if i:
            x += math.log(gap) - step
        for _ in range(size):
            out.append(math.exp(x))
            x += step
    return out


def build(seed, rx_length, lo=SPREAD_MIN, hi=SPREAD_MAX, groups=GROUPS, gap=GAP, collectors=COLLECTORS):
    rng = random.Random(seed)
    total = sum(STREETS)

    trunk = [OUTLET_LENGTH] + [rng.uniform(120.0, 250.0) for _ in STREETS[1:]]
    streets = [[rng.uniform(40.0, 110.0) for _ in range(n)] for n in STREETS]

    # variance accumulated below each house's lateral, up to the receiver
    below = []
    for i, segs in enumerate(streets):
        trunk_var = 0.0
        flow = total
        for t in range(i + 1):
            length = RX_Z if t == 0 else trunk[t]
            trunk_var += pipe_moments(length, flow)[1]
            flow -= STREETS[t]
        if collectors[i]:
            trunk_var += pipe_moments(collectors[i], len(segs))[1]
        for j in range(len(segs)):
            var = trunk_var + sum(pipe_moments(segs[k], k + 1)[1] for k in range(j, len(segs)))
            below.append(var)

    if sum(groups) != total:
        raise ValueError("group sizes must add up to the number of houses")
    targets = spread_ladder(lo, hi, groups, gap)
    # random assignment, repaired so every target is reachable with a lateral
    order = list(range(total))
    rng.shuffle(order)
    assign = {}
    free = sorted(targets)
    for h in sorted(order, key=lambda h: -below[h]):
        ok = [t for t in free if t * t > below[h] + pipe_moments(MIN_LATERAL, 1)[1]]
        t = rng.choice(ok) if ok else free[-1]
        free.remove(t)
        assign[h] = t

    nodes = [("out", "outlet", 0.0, 0.0)]
    pipes = []
    inlets, tx = [], []

    def pipe(src, dst, length):
        pipes.append((len(pipes) + 1, src, dst, round(length, 2)))
        return len(pipes)

    x = 0.0
    for i, seg in enumerate(trunk):
        x += seg
        nodes.append((f"J{i + 1}", "connecting", -x, 0.0))
    outlet_pipe = pipe("J1", "out", trunk[0])
    for i in range(1, len(trunk)):
        pipe(f"J{i + 1}", f"J{i}", trunk[i])

    house = 0
    lat_var = pipe_moments(1.0, 1)[1]
    for i, segs in enumerate(streets):
        jx = -sum(trunk[: i + 1])
        side = 1.0 if i % 2 == 0 else -1.0
        n = len(segs)
        names = [f"S{i + 1}_{j + 1}" for j in range(n)]
        end = f"J{i + 1}"
        if collectors[i]:
            end = f"C{i + 1}"
            nodes.append((end, "connecting", jx, side * 10.0))
            pipe(end, f"J{i + 1}", collectors[i])
        for j in range(n):
            nodes.append((names[j], "connecting", jx, side * (10.0 + sum(segs[j:]))))
        for j in range(n):
            pipe(names[j], names[j + 1] if j + 1 < n else end, segs[j])
        for j in range(n):
            target = assign[house]
            lat = max(MIN_LATERAL, (target * target - below[house]) / lat_var)
            house += 1
            h = f"H{house}"
            nodes.append((h, "inlet", jx + min(lat, 60.0), side * (10.0 + sum(segs[j:]))))
            tx.append((house, pipe(h, names[j], lat)))
            inlets.append(h)

    lines = [
        "# 33-house surrogate sewage tree (generated by tools/make_surrogate.py)",
        f"# seed {seed}, spread {lo:g}-{hi:g} s, gap {gap:g}",
        "[parameters]",
        f"diffusion {DIFFUSION}",
        f"release lognormal {LOG_MEAN} {LOG_VAR}",
        "[nodes]",
    ]
    lines += [f"{n} {k} {x:.1f} {y:.1f}" for n, k, x, y in nodes]
    lines.append("[pipes]")
    lines += [f"{i} {s} {d} {l} {RADIUS}" for i, s, d, l in pipes]
    lines.append("[inlets]")
    lines += [f"{h} {INLET_FLOW}" for h in inlets]
    lines.append("[transmitters]")
    lines += [f"{t} {p} 0" for t, p in tx]
    lines.append("[receiver]")
    lines.append(f"{outlet_pipe} {RX_Z} {rx_length:g}")
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--rx-length", type=float, default=1.0, help="receiver length in m")
    ap.add_argument("--spread", type=float, nargs=2, default=[SPREAD_MIN, SPREAD_MAX], metavar=("LO", "HI"))
    ap.add_argument("--gap", type=float, default=GAP)
    ap.add_argument("--collectors", type=float, nargs=len(STREETS), default=COLLECTORS)
    ap.add_argument("--out", default="data/surrogate_sewage.net")
    args = ap.parse_args()
    with open(args.out, "w") as f:
        f.write(build(args.seed, args.rx_length, *args.spread, GROUPS, args.gap, args.collectors))


if __name__ == "__main__":
    main()
