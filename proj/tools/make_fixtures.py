#!/usr/bin/env python3
"""Generates the bundled network fixtures in data/.

Each fixture is a bus-branch network with a solved Newton power flow, so the
dynamic model starts at an exact equilibrium. Machine data are typical
two-axis values on machine base, converted to the 100 MVA system base.

    python3 tools/make_fixtures.py [outdir]
"""

import json
import pathlib
import sys

import numpy as np

BASE_MVA = 100.0

EXCITER = dict(ka=20.0, ta=0.2, kf=0.063, tf=0.35, ke=1.0, te=0.314,
               ae=0.0039, be=1.555)


def machine(mva, rng, h=None, d=2.0):
    """Machine-base data scaled to system base."""
    k = BASE_MVA / mva
    h = h if h is not None else rng.uniform(3.5, 5.0)
    p = dict(
        h=h / k,
        d=d / k,
        xd=rng.uniform(1.6, 1.9) * k,
        xq=rng.uniform(1.5, 1.75) * k,
        xd_p=rng.uniform(0.25, 0.32) * k,
        xq_p=rng.uniform(0.45, 0.6) * k,
        ra=0.0,
        tdo_p=rng.uniform(5.0, 8.0),
        tqo_p=rng.uniform(0.4, 0.8),
        tch=rng.uniform(0.3, 0.5),
        tgv=rng.uniform(0.1, 0.2),
        r_gov=0.05 * k,
    )
    p.update(EXCITER)
    return p


class Builder:
    def __init__(self):
        self.buses = {}
        self.branches = []
        self.gens = []

    def bus(self, bid, load_p=0.0, load_q=0.0):
        self.buses[bid] = dict(id=bid, load_p=load_p, load_q=load_q)

    def line(self, a, b, x, r_ratio=0.1, b_sh=0.0):
        self.branches.append(dict(id=len(self.branches) + 1, from_bus=a,
                                  to_bus=b, resistance=x * r_ratio,
                                  reactance=x, shunt_susceptance=b_sh,
                                  in_service=True))

    def generator(self, gid, gen_bus, hv_bus, mva, p, v_set, rng, **kw):
        self.bus(gen_bus)
        self.line(gen_bus, hv_bus, 0.12 * BASE_MVA / mva, r_ratio=0.0)
        self.gens.append(dict(id=gid, bus_id=gen_bus, dispatch_p=p,
                              dispatch_q=0.0, v_set=v_set,
                              params=machine(mva, rng, **kw)))


def ybus(b, ids):
    pos = {bid: i for i, bid in enumerate(ids)}
    n = len(ids)
    y = np.zeros((n, n), dtype=complex)
    for br in b.branches:
        i, k = pos[br["from_bus"]], pos[br["to_bus"]]
        ys = 1.0 / complex(br["resistance"], br["reactance"])
        sh = 0.5j * br["shunt_susceptance"]
        y[i, i] += ys + sh
        y[k, k] += ys + sh
        y[i, k] -= ys
        y[k, i] -= ys
    return y


def solve_power_flow(b, slack_gen):
    ids = sorted(b.buses)
    pos = {bid: i for i, bid in enumerate(ids)}
    n = len(ids)
    y = ybus(b, ids)
    s_spec = np.zeros(n, dtype=complex)
    for bid, bus in b.buses.items():
        s_spec[pos[bid]] -= complex(bus["load_p"], bus["load_q"])
    vm = np.ones(n)
    va = np.zeros(n)
    pv = []
    slack = None
    for g in b.gens:
        i = pos[g["bus_id"]]
        vm[i] = g["v_set"]
        if g["id"] == slack_gen:
            slack = i
        else:
            s_spec[i] += g["dispatch_p"]
            pv.append(i)
    pq = [i for i in range(n) if i != slack and i not in pv]
    ang = pv + pq
    mag = pq

    for _ in range(50):
        v = vm * np.exp(1j * va)
        ibus = y @ v
        s = v * np.conj(ibus)
        mis = s - s_spec
        f = np.concatenate([mis.real[ang], mis.imag[mag]])
        if np.max(np.abs(f)) < 1e-13:
            break
        dv = np.diag(v)
        vn = np.diag(v / np.abs(v))
        ds_dva = 1j * dv @ np.conj(np.diag(ibus) - y @ dv)
        ds_dvm = dv @ np.conj(y @ vn) + np.conj(np.diag(ibus)) @ vn
        jac = np.block([
            [ds_dva.real[np.ix_(ang, ang)], ds_dvm.real[np.ix_(ang, mag)]],
            [ds_dva.imag[np.ix_(mag, ang)], ds_dvm.imag[np.ix_(mag, mag)]],
        ])
        dx = np.linalg.solve(jac, -f)
        va[ang] += dx[:len(ang)]
        vm[mag] += dx[len(ang):]
    else:
        raise RuntimeError("power flow did not converge")

    v = vm * np.exp(1j * va)
    s = v * np.conj(y @ v)
    for bid, bus in b.buses.items():
        i = pos[bid]
        bus["voltage_magnitude"] = float(vm[i])
        bus["voltage_angle"] = float(va[i])
    for g in b.gens:
        i = pos[g["bus_id"]]
        load = b.buses[g["bus_id"]]
        g["dispatch_p"] = float(s[i].real + load["load_p"])
        g["dispatch_q"] = float(s[i].imag + load["load_q"])


def emit(b, study_buses, path, slack_gen):
    solve_power_flow(b, slack_gen)
    doc = dict(
        base_mva=BASE_MVA,
        buses=[b.buses[k] for k in sorted(b.buses)],
        branches=b.branches,
        generators=[{k: g[k] for k in ("id", "bus_id", "dispatch_p",
                                       "dispatch_q", "params")}
                    for g in b.gens],
    )
    if study_buses is not None:
        study = sorted(study_buses)
        doc["partition"] = dict(
            study_buses=study,
            external_buses=sorted(set(b.buses) - set(study)))
    path.write_text(json.dumps(doc, indent=2) + "\n")


def two_bus(out):
    rng = np.random.default_rng(1)
    b = Builder()
    b.bus(2, load_p=0.5, load_q=0.2)
    b.bus(1)
    b.line(1, 2, 0.1)
    b.gens.append(dict(id=1, bus_id=1, dispatch_p=0.0, dispatch_q=0.0,
                       v_set=1.0, params=machine(100.0, rng)))
    emit(b, None, out / "two_bus.json", slack_gen=1)


def six_machine(out):
    rng = np.random.default_rng(6)
    b = Builder()
    # study area: buses 1-3, generators 1-2
    b.bus(1, 1.5, 0.4)
    b.bus(2, 2.0, 0.6)
    b.bus(3, 1.2, 0.3)
    b.line(1, 2, 0.04, b_sh=0.1)
    b.line(2, 3, 0.05, b_sh=0.1)
    b.line(1, 3, 0.06, b_sh=0.1)
    # external area: buses 4-7, generators 3-6
    for bid, (p, q) in {4: (1.0, 0.3), 5: (1.5, 0.4), 6: (2.0, 0.5),
                        7: (1.0, 0.2)}.items():
        b.bus(bid, p, q)
    b.line(4, 5, 0.03, b_sh=0.1)
    b.line(5, 6, 0.04, b_sh=0.1)
    b.line(6, 7, 0.04, b_sh=0.1)
    b.line(7, 4, 0.05, b_sh=0.1)
    b.line(4, 6, 0.06, b_sh=0.1)
    # tie-lines
    b.line(3, 4, 0.04, b_sh=0.05)
    b.line(2, 5, 0.05, b_sh=0.05)
    b.generator(1, 11, 1, 300.0, 2.0, 1.03, rng)
    b.generator(2, 12, 3, 250.0, 1.5, 1.02, rng)
    b.generator(3, 13, 4, 300.0, 2.0, 1.03, rng)
    b.generator(4, 14, 5, 250.0, 1.5, 1.02, rng)
    b.generator(5, 15, 6, 400.0, 2.5, 1.03, rng)
    b.generator(6, 16, 7, 500.0, 0.0, 1.04, rng)
    emit(b, {1, 2, 3, 11, 12}, out / "six_machine.json", slack_gen=6)


def two_area(out, tie_x=0.03, damping=10.0, name="two_area.json"):
    """Twelve-bus study ring plus a transit bus, ten units, sixteen-bus external mesh with
    fourteen units, three tie-lines."""
    rng = np.random.default_rng(24)
    b = Builder()
    study_trans = list(range(1, 13))
    ext_trans = list(range(21, 37))
    for bid in study_trans:
        b.bus(bid, rng.uniform(1.5, 3.0), rng.uniform(0.3, 0.8))
    for bid in ext_trans:
        b.bus(bid, rng.uniform(2.0, 3.5), rng.uniform(0.4, 1.0))
    for a, c in zip(study_trans, study_trans[1:] + study_trans[:1]):
        b.line(a, c, rng.uniform(0.02, 0.04), b_sh=0.15)
    for a, c in [(1, 7), (3, 10), (4, 12)]:
        b.line(a, c, rng.uniform(0.04, 0.06), b_sh=0.15)
    # external: 4x4 grid
    for r in range(4):
        for c in range(4):
            bid = 21 + 4 * r + c
            if c < 3:
                b.line(bid, bid + 1, rng.uniform(0.02, 0.04), b_sh=0.2)
            if r < 3:
                b.line(bid, bid + 4, rng.uniform(0.02, 0.04), b_sh=0.2)
    study_hv = [1, 2, 3, 5, 6, 7, 8, 9, 11, 12]
    for k, hv in enumerate(study_hv):
        mva = rng.uniform(250.0, 450.0)
        b.generator(k + 1, 101 + k, hv, mva, 0.7 * mva / BASE_MVA,
                    rng.uniform(1.01, 1.04), rng, d=damping)
    ext_hv = [21, 22, 23, 24, 25, 27, 28, 29, 30, 32, 33, 34, 35, 36]
    for k, hv in enumerate(ext_hv):
        mva = rng.uniform(400.0, 800.0)
        b.generator(11 + k, 111 + k, hv, mva, 0.65 * mva / BASE_MVA,
                    rng.uniform(1.01, 1.04), rng, d=damping)
    # tie-lines
    b.line(4, 21, tie_x, b_sh=0.1)
    b.line(10, 22, tie_x, b_sh=0.1)
    b.line(6, 25, 1.2 * tie_x, b_sh=0.1)
    # transit bus on a 3-9 chord: tripping it opens a path without islanding
    # anything or changing the load
    b.bus(13)
    b.line(3, 13, 0.03, b_sh=0.1)
    b.line(13, 9, 0.03, b_sh=0.1)
    study = (set(study_trans) | {13}) | {101 + k for k in range(len(study_hv))}
    emit(b, study, out / name, slack_gen=24)


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else
                       pathlib.Path(__file__).resolve().parent.parent / "data")
    out.mkdir(parents=True, exist_ok=True)
    two_bus(out)
    six_machine(out)
    two_area(out)


if __name__ == "__main__":
    main()
