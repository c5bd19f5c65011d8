"""Scenario measurement log: one ``scan KIND payload`` record per line.

Kinds are CAM, RSS, IMU and TRUTH. Numbers use fixed 9-digit decimals so the
log hashes identically wherever it is produced. Header lines start with
``#`` and carry the scenario config and AP positions as JSON.
"""

import json
from pathlib import Path

import numpy as np

from ..config import to_dict
from ..exceptions import InvalidConfig
from ..inertial import StepObservation
from ..tracker.types import ScanMeasurements

FORMAT = "sitetracker-log 1"


def _f(v):
    v = float(v)
    if not np.isfinite(v):
        return "nan"
    s = f"{v:.9f}"
    return "0.000000000" if s == "-0.000000000" else s


def format_log(scenario):
    cfg = scenario.config
    lines = [f"# {FORMAT}",
             "# config " + json.dumps(to_dict(cfg), sort_keys=True),
             "# aps " + json.dumps([[round(float(x), 9) for x in p]
                                    for p in scenario.radio_model.positions])]
    tr = scenario.truth
    for scan in scenario.scans:
        t = scan.t
        for i, c in enumerate(scan.camera):
            lines.append(f"{t} CAM {i} {_f(c[0])} {_f(c[1])}")
        for d in sorted(scan.radio):
            lines.append(f"{t} RSS {d} " + " ".join(_f(v) for v in scan.radio[d]))
        for d in sorted(scan.steps):
            o = scan.steps[d]
            lines.append(f"{t} IMU {d} {int(o.step)} {_f(o.length)} {_f(o.heading)} {_f(o.frequency)}")
        for a in range(tr.positions.shape[1]):
            p = tr.positions[t, a]
            lines.append(f"{t} TRUTH {a} {_f(p[0])} {_f(p[1])} {int(tr.has_device[a])} "
                         f"{int(tr.stepped[t, a])} {_f(tr.step_length[t, a])} "
                         f"{_f(tr.heading[t, a])} {_f(tr.frequency[t, a])}")
    return "\n".join(lines) + "\n"


def write_log(scenario, path):
    Path(path).write_text(format_log(scenario))


class ScenarioLog:
    """Parsed log: config dict, AP positions, scans and (if present) truth."""

    def __init__(self, config, ap_positions, scans, truth_positions, has_device):
        self.config = config
        self.ap_positions = ap_positions
        self.scans = scans
        self.truth_positions = truth_positions
        self.has_device = has_device

    @property
    def device_ids(self):
        return [int(a) for a in np.nonzero(self.has_device)[0]]


def read_log(path):
    config, aps = {}, None
    cams, radio, steps, truth = {}, {}, {}, {}
    dt = 0.5
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("config "):
                    config = json.loads(body[7:])
                    dt = float(config.get("dt", dt))
                elif body.startswith("aps "):
                    aps = np.asarray(json.loads(body[4:]), dtype=float).reshape(-1, 2)
                continue
            parts = line.split()
            try:
                t, kind = int(parts[0]), parts[1]
                if kind == "CAM":
                    cams.setdefault(t, []).append((int(parts[2]), float(parts[3]), float(parts[4])))
                elif kind == "RSS":
                    radio.setdefault(t, {})[int(parts[2])] = np.array([float(v) for v in parts[3:]])
                elif kind == "IMU":
                    d = int(parts[2])
                    steps.setdefault(t, {})[d] = StepObservation(
                        d, bool(int(parts[3])), float(parts[4]), float(parts[5]),
                        float(parts[6]), t * dt)
                elif kind == "TRUTH":
                    truth.setdefault(t, {})[int(parts[2])] = (float(parts[3]), float(parts[4]),
                                                             bool(int(parts[5])))
                else:
                    raise ValueError(f"unknown record kind {kind!r}")
            except (IndexError, ValueError) as exc:
                raise InvalidConfig(f"{path}:{ln}: malformed record ({exc})") from exc
    n = 1 + max([*cams, *radio, *steps, *truth], default=-1)
    scans = []
    for t in range(n):
        c = sorted(cams.get(t, []))
        cam = np.array([[x, y] for _, x, y in c]).reshape(-1, 2)
        scans.append(ScanMeasurements(t, cam, radio.get(t, {}), steps.get(t, {})))
    if truth:
        A = 1 + max(a for row in truth.values() for a in row)
        pos = np.full((n, A, 2), np.nan)
        has = np.zeros(A, dtype=bool)
        for t, row in truth.items():
            for a, (x, y, h) in row.items():
                pos[t, a] = (x, y)
                has[a] = h
    else:
        pos, has = None, None
    return ScenarioLog(config, aps, scans, pos, has)
