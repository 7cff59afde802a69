#!/usr/bin/env python3
"""Generate the synthetic 60-bus campus network shipped in crates/core/data.

Topology: a ring 1-2-...-60-1 with a few chords. Sources at 1, 38, 51;
40 kW renewables at 25, 36, 42. Reactances and limits are made up.
Loads are drawn from a seeded generator and rescaled so the totals are
1879.98 kW and 606.66 kVar.
"""
import json
import random
import sys

SOURCES = [1, 38, 51]
RENEWABLES = [25, 36, 42]
CHORDS = [(6, 57), (12, 47), (18, 28), (40, 55), (30, 51)]
TOTAL_P = 1879.98
TOTAL_Q = 606.66
AMPLE_LIMIT_KW = 5000.0
CONGESTED_LIMIT_KW = 160.0


def build(congested: bool):
    rng = random.Random(60)
    load_buses = [b for b in range(1, 61) if b not in SOURCES]
    raw = [rng.uniform(10.0, 60.0) for _ in load_buses]
    scale = TOTAL_P / sum(raw)
    p = [round(x * scale, 2) for x in raw]
    p[-1] = round(p[-1] + TOTAL_P - sum(p), 2)
    qraw = [x * rng.uniform(0.25, 0.40) for x in p]
    qs = TOTAL_Q / sum(qraw)
    q = [round(x * qs, 2) for x in qraw]
    q[-1] = round(q[-1] + TOTAL_Q - sum(q), 2)
    loads = dict(zip(load_buses, zip(p, q)))

    buses = []
    for b in range(1, 61):
        if b in SOURCES:
            buses.append({"id": b, "kind": "source", "active_load": 0.0, "reactive_load": 0.0})
        else:
            pl, ql = loads[b]
            buses.append({"id": b, "kind": "load", "active_load": pl, "reactive_load": ql})

    edges = [(b, b + 1) for b in range(1, 60)] + [(60, 1)] + CHORDS
    lines = []
    for i, (f, t) in enumerate(edges, start=1):
        x = round(0.01 + 0.02 * rng.random(), 4)
        limit = AMPLE_LIMIT_KW
        lines.append({"id": i, "from_bus": f, "to_bus": t, "reactance": x, "flow_limit": limit})

    offers = [
        {"bus": 1, "offer_price": 60.0, "q_min": 0.0, "q_max": 12700.0},
        {"bus": 38, "offer_price": 70.0, "q_min": 0.0, "q_max": 12700.0},
        {"bus": 51, "offer_price": 65.0, "q_min": 0.0, "q_max": 12700.0},
    ] + [{"bus": b, "offer_price": 0.0, "q_min": 0.0, "q_max": 40.0} for b in RENEWABLES]
    bids = [{"bus": b, "bid_price": 100.0, "demand": loads[b][0]} for b in load_buses]

    if congested:
        for ln in lines:
            if ln["from_bus"] in (32, 33) or ln["to_bus"] in (32, 33):
                ln["flow_limit"] = CONGESTED_LIMIT_KW
        for bd in bids:
            if bd["bus"] == 33:
                bd["demand"] = round(bd["demand"] * 5, 2)
    return {"buses": buses, "lines": lines, "offers": offers, "bids": bids, "slack_bus": 1}


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "crates/core/data"
    with open(f"{out}/du60.json", "w") as fh:
        json.dump(build(False), fh, indent=1)
        fh.write("\n")
    with open(f"{out}/du60_congested.json", "w") as fh:
        json.dump(build(True), fh, indent=1)
        fh.write("\n")
