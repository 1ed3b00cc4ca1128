#!/usr/bin/env python3
"""Regenerates the bundled network files in data/."""

import json
import math
import pathlib

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def profile(t, low, high, peak_hour):
    """Smooth daily profile between low and high peaking at peak_hour."""
    phase = 2.0 * math.pi * (t - peak_hour) / 24.0
    return round(low + (high - low) * 0.5 * (1.0 + math.cos(phase)), 4)


def region(vertices):
    """Half-plane rows a*P + b*H <= d for a counter-clockwise polygon."""
    rows = []
    for k, (p0, h0) in enumerate(vertices):
        p1, h1 = vertices[(k + 1) % len(vertices)]
        a, b = h1 - h0, -(p1 - p0)
        norm = math.hypot(a, b)
        a, b = a / norm, b / norm
        rows.append({"A": round(a, 10), "B": round(b, 10), "D": round(a * p0 + b * h0, 10)})
    return rows


def pipe(pid, frm, to, length, nu, m_min, m_max, m_nom, **extra):
    p = {"id": pid, "from": frm, "to": to, "length": length, "heat_transfer_coeff": nu,
         "m_min": m_min, "m_max": m_max, "m_nominal": m_nom}
    p.update(extra)
    return p


def micro_y():
    T = 24
    return {
        "meta": {"T": T, "tau_ambient": 10.0, "base_mva": 100.0, "name": "micro_y"},
        "heat_nodes": [
            {"id": "s1", "kind": "source", "tau_min": 89.5, "tau_max": 90.5, "tau_source": 90.0},
            {"id": "s2", "kind": "source", "tau_min": 79.5, "tau_max": 80.5, "tau_source": 80.0},
            {"id": "j", "kind": "junction", "tau_min": 60.0, "tau_max": 95.0},
            {"id": "l", "kind": "load", "tau_min": 50.0, "tau_max": 95.0},
        ],
        "pipes": [
            pipe("p1", "s1", "j", 2000.0, 1e-7, 1.0, 20.0, 5.0, tau_pipe_min=60.0, tau_pipe_max=95.0),
            pipe("p2", "s2", "j", 500.0, 1e-7, 0.5, 20.0, 6.0, tau_pipe_min=60.0, tau_pipe_max=95.0),
            pipe("p3", "j", "l", 3000.0, 1e-7, 1.0, 40.0, 11.0),
        ],
        "buses": [{"id": "b1"}],
        "lines": [],
        "units": [
            {"id": "hb1", "type": "boiler", "node_id": "s1", "cost_c": 20.0, "h_min": 0.0, "h_max": 10.0},
            {"id": "hb2", "type": "boiler", "node_id": "s2", "cost_c": 40.0, "h_min": 0.0, "h_max": 10.0},
        ],
        "loads": {
            "l": [profile(t, 1.6, 3.2, 7) for t in range(1, T + 1)],
            "b1": [0.0] * T,
        },
    }


def small():
    T = 24
    heat = {"n4": (1.5, 3.0), "n5": (1.2, 2.4), "n7": (1.4, 2.8), "n8": (1.0, 2.0)}
    power = {"b3": (40.0, 70.0), "b4": (50.0, 90.0), "b5": (45.0, 80.0), "b6": (20.0, 35.0)}
    loads = {k: [profile(t, lo, hi, 7) for t in range(1, T + 1)] for k, (lo, hi) in heat.items()}
    loads.update({k: [profile(t, lo, hi, 19) for t in range(1, T + 1)] for k, (lo, hi) in power.items()})
    for b in ("b1", "b2"):
        loads[b] = [0.0] * T
    for n in ("n1", "n2", "n3", "n6"):
        loads[n] = [0.0] * T
    return {
        "meta": {"T": T, "tau_ambient": 10.0, "base_mva": 100.0, "name": "small_6bus_8node"},
        "heat_nodes": [
            {"id": "n1", "kind": "source", "tau_min": 89.5, "tau_max": 90.5, "tau_source": 90.0},
            {"id": "n2", "kind": "source", "tau_min": 79.5, "tau_max": 80.5, "tau_source": 80.0},
            {"id": "n3", "kind": "junction", "tau_min": 60.0, "tau_max": 87.0},
            {"id": "n4", "kind": "load", "tau_min": 55.0, "tau_max": 95.0},
            {"id": "n5", "kind": "load", "tau_min": 50.0, "tau_max": 95.0},
            {"id": "n6", "kind": "junction", "tau_min": 55.0, "tau_max": 95.0},
            {"id": "n7", "kind": "load", "tau_min": 50.0, "tau_max": 95.0},
            {"id": "n8", "kind": "load", "tau_min": 50.0, "tau_max": 95.0},
        ],
        "pipes": [
            pipe("p1", "n1", "n3", 2500.0, 1.5e-7, 2.0, 60.0, 14.0, tau_pipe_min=60.0, tau_pipe_max=95.0),
            pipe("p2", "n2", "n3", 1500.0, 1.5e-7, 1.0, 60.0, 27.0, tau_pipe_min=60.0, tau_pipe_max=95.0),
            pipe("p3", "n3", "n4", 2000.0, 1.5e-7, 1.0, 40.0, 22.0),
            pipe("p4", "n4", "n5", 1000.0, 1.5e-7, 0.5, 30.0, 10.0),
            pipe("p5", "n3", "n6", 3000.0, 1.5e-7, 1.0, 50.0, 19.0),
            pipe("p6", "n6", "n7", 1500.0, 1.5e-7, 0.5, 30.0, 10.5),
            pipe("p7", "n6", "n8", 1200.0, 1.5e-7, 0.5, 30.0, 8.5),
        ],
        "buses": [{"id": f"b{k}"} for k in range(1, 7)],
        "lines": [
            {"id": "l12", "from": "b1", "to": "b2", "reactance": 0.1, "p_max": 150.0},
            {"id": "l14", "from": "b1", "to": "b4", "reactance": 0.2, "p_max": 80.0},
            {"id": "l23", "from": "b2", "to": "b3", "reactance": 0.15, "p_max": 100.0},
            {"id": "l24", "from": "b2", "to": "b4", "reactance": 0.1, "p_max": 100.0},
            {"id": "l25", "from": "b2", "to": "b5", "reactance": 0.2, "p_max": 60.0},
            {"id": "l36", "from": "b3", "to": "b6", "reactance": 0.2, "p_max": 60.0},
            {"id": "l45", "from": "b4", "to": "b5", "reactance": 0.25, "p_max": 50.0},
            {"id": "l56", "from": "b5", "to": "b6", "reactance": 0.1, "p_max": 80.0},
        ],
        "units": [
            {"id": "tu1", "type": "thermal", "bus_id": "b1", "cost_c1": 20.0, "cost_c2": 0.02,
             "p_min": 10.0, "p_max": 150.0},
            {"id": "tu2", "type": "thermal", "bus_id": "b2", "cost_c1": 26.0, "cost_c2": 0.03,
             "p_min": 10.0, "p_max": 120.0},
            {"id": "chp1", "type": "chp", "bus_id": "b3", "node_id": "n1",
             "cost_c0": 50.0, "cost_c1": 18.0, "cost_c2": 0.01, "cost_c3": 4.0, "cost_c4": 0.015,
             "cost_c5": 0.005, "region": region([(10, 0), (60, 0), (50, 25), (15, 20)])},
            {"id": "chp2", "type": "chp", "bus_id": "b6", "node_id": "n2",
             "cost_c0": 40.0, "cost_c1": 21.0, "cost_c2": 0.012, "cost_c3": 3.5, "cost_c4": 0.02,
             "cost_c5": 0.004, "region": region([(5, 0), (40, 0), (32, 18), (8, 14)])},
            {"id": "hb1", "type": "boiler", "node_id": "n2", "cost_c": 45.0, "h_min": 0.0, "h_max": 20.0},
        ],
        "loads": loads,
    }


def main():
    DATA.mkdir(exist_ok=True)
    for name, doc in (("micro_y", micro_y()), ("small_6bus_8node", small())):
        (DATA / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
