"""Flat key-value experiment configs, protocol records, CSV output and run manifests."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

FAMILIES = ("cluster", "quasi1d", "cluster2d")
BOUNDARIES = ("terminated", "open")
PERTURBATIONS = ("none", "transverse", "zfield", "zz", "random")
LAYOUTS = ("diagonal", "horizontal")
MODES = ("enumerate", "sample", "postselect")

# section -> key -> (type, default)
SCHEMA = {
    "model": {
        "family": (str, "cluster"),
        "sites": (int, 6),
        "boundary": (str, "terminated"),
        "chains": (int, 2),
        "columns": (int, 4),
        "perturbation": (str, "none"),
        "strength": (float, 0.0),
        "range": (int, 2),
        "width": (int, 4),
        "height": (int, 2),
        "layout": (str, "diagonal"),
        "file": (str, ""),
    },
    "protocol": {
        "gates": (str, ""),
        "mode": (str, "enumerate"),
        "file": (str, ""),
    },
    "sweep": {
        "B": ("floats", "0.1"),
        "R": ("ints", "1,2,3,4"),
        "B_theorem1": (float, 0.1),
        "S": (float, 0.2),
        "steps": (int, 20),
        "path_max": (float, 1.3),
        "path_steps": (int, 130),
        "gap_sites": (int, 150),
    },
    "run": {
        "seed": (int, 0),
        "out": (str, "out"),
    },
}


@dataclass
class ExperimentConfig:
    model: dict
    protocol: dict
    sweep: dict
    run: dict
    source: str = "<defaults>"
    tolerances: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.run["seed"]

    def gates(self) -> dict:
        """{site: (axis, theta)} from either the inline spec or the protocol file."""
        if self.protocol["file"]:
            return read_protocol_file(self.protocol["file"])
        return parse_gates(self.protocol["gates"])

    def to_dict(self) -> dict:
        return {"model": self.model, "protocol": self.protocol, "sweep": self.sweep, "run": self.run,
                "tolerances": self.tolerances}


def _convert(kind, raw: str, line: int, key: str):
    try:
        if kind == "floats":
            vals = [float(x) for x in raw.replace(",", " ").split()]
        elif kind == "ints":
            vals = [int(x) for x in raw.replace(",", " ").split()]
        else:
            return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}", line) from None
    if not vals:
        raise ConfigError(f"empty grid for {key}", line)
    return vals


def _defaults():
    out = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {k: _convert(t, d, 0, k) if isinstance(d, str) and t in ("floats", "ints") else d
                    for k, (t, d) in keys.items()}
    return out


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse '[section]' headers and 'key = value' lines ('#' starts a comment)."""
    vals = _defaults()
    where = {}
    section = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any section", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        vals[section][key] = _convert(SCHEMA[section][key][0], raw, lineno, key)
        where[(section, key)] = lineno
    _validate(vals, where)
    return ExperimentConfig(vals["model"], vals["protocol"], vals["sweep"], vals["run"], source)


def _validate(vals, where):
    def check(sec, key, allowed):
        if vals[sec][key] not in allowed:
            raise ConfigError(f"{key} must be one of {', '.join(allowed)}; got {vals[sec][key]!r}",
                              where.get((sec, key)))
    check("model", "family", FAMILIES)
    check("model", "boundary", BOUNDARIES)
    check("model", "perturbation", PERTURBATIONS)
    check("model", "layout", LAYOUTS)
    check("protocol", "mode", MODES)
    for sec, key, lo in (("model", "sites", 2), ("model", "chains", 1), ("model", "columns", 1),
                         ("sweep", "steps", 1), ("run", "seed", 0)):
        if vals[sec][key] < lo:
            raise ConfigError(f"{key} must be >= {lo}", where.get((sec, key)))
    if vals["protocol"]["gates"]:
        try:
            parse_gates(vals["protocol"]["gates"])
        except ValueError as exc:
            raise ConfigError(str(exc), where.get(("protocol", "gates"))) from None
    for sec in ("model", "protocol"):
        f = vals[sec]["file"]
        if f and not Path(f).exists():
            raise ConfigError(f"referenced file {f!r} does not exist", where.get((sec, "file")))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cfg = parse_config(path.read_text(), str(path))
    if cfg.model["file"]:
        model_cfg = parse_config(Path(cfg.model["file"]).read_text(), cfg.model["file"])
        cfg.model = {**model_cfg.model, "file": cfg.model["file"]}
    return cfg


def parse_gates(spec: str) -> dict:
    """'1:z:0.7 3:x:1.1' -> {1: ('z', 0.7), 3: ('x', 1.1)}."""
    out = {}
    for tok in spec.replace(",", " ").split():
        parts = tok.split(":")
        if len(parts) != 3 or parts[1] not in ("x", "z"):
            raise ValueError(f"bad gate token {tok!r} (expected site:axis:angle with axis x or z)")
        out[int(parts[0])] = (parts[1], float(parts[2]))
    return out


def read_protocol_file(path) -> dict:
    """Ordered records 'site kind params...'; kinds: gate AXIS THETA, identity, init, readout."""
    gates = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            site, kind = int(line[0]), line[1]
        except (ValueError, IndexError):
            raise ConfigError(f"bad protocol record {raw!r}", lineno) from None
        if kind == "gate":
            if len(line) != 4 or line[2] not in ("x", "z"):
                raise ConfigError("gate record needs: site gate AXIS THETA", lineno)
            gates[site] = (line[2], float(line[3]))
        elif kind not in ("identity", "init", "readout"):
            raise ConfigError(f"unknown record kind {kind!r}", lineno)
    return gates


def write_protocol_file(path, gates: dict, n_sites: int):
    lines = []
    for s in range(n_sites):
        if s == 0:
            lines.append(f"{s} init")
        elif s == n_sites - 1:
            lines.append(f"{s} readout")
        elif s in gates:
            lines.append(f"{s} gate {gates[s][0]} {fmt(gates[s][1])}")
        else:
            lines.append(f"{s} identity")
    atomic_write(path, "\n".join(lines) + "\n")


def model_file_text(cfg: ExperimentConfig) -> str:
    m = cfg.model
    keys = ("family", "sites", "boundary", "chains", "columns", "width", "height", "layout", "perturbation",
            "strength", "range")
    body = "\n".join(f"{k} = {fmt(m[k]) if isinstance(m[k], float) else m[k]}" for k in keys)
    return f"[model]\n{body}\n\n[run]\nseed = {cfg.seed}\n"


# ----------------------------------------------------------------------------
# output


def fmt(x) -> str:
    """12 significant digits for floats; complex numbers as re+imj."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (complex, np.complexfloating)):
        return f"{x.real:.12g}{x.imag:+.12g}j"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    atomic_write(path, buf.getvalue())


def write_manifest(path, cfg: ExperimentConfig, command: str, outputs, wall_time: float):
    import scipy
    from . import __version__
    manifest = {
        "command": command,
        "config_source": cfg.source,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "outputs": sorted(str(o) for o in outputs),
        "versions": {"mbqc_spt": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time_s": round(wall_time, 3),
    }
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
