"""Line-oriented network configuration files.

A configuration is a list of ``section.key = value`` or
``section.name.key = value`` assignments; ``#`` starts a comment.  Block
sections (``network``, ``solver``, ``mor``, ``gas``, ``water``) hold single
settings, table sections (``node``, ``edge``, ``line``, ``bus``,
``branch``, ``boundary``) hold one record per ``name``::

    network.domain = gas
    node.in.kind = supply
    node.in.pressure = 50      # bar
    edge.pipe.source = in

Pressures are written in bar and converted to Pa on assembly.
"""

import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, TopologyError
from .gas import BAR, GasEdge, GasNode, GasPipelineSpec, GasTopology, assemble_gas_network
from .integrator import StepperConfig
from .mor import TANGENT_RULES, TirkaConfig
from .power import Bus, BusSystem, LineSpec, assemble_power
from .water import WaterEdge, WaterNetwork, WaterNode, WaterPipeSpec, assemble_water

DOMAINS = ("gas", "water", "power")
REQUIRED = object()

# key -> (type, default); REQUIRED marks mandatory keys, None optional ones
_NETWORK = {"domain": (str, REQUIRED), "scheme": (str, None)}
_SOLVER = {
    "tau": (float, 0.5),
    "max_iter": (int, 1000),
    "settle_tol": (float, 1e-8),
    "record_every": (int, 1),
    "settle_window": (int, 10),
    "stop_on_settle": (bool, True),
}
_MOR = {
    "r": (int, REQUIRED),
    "tol": (float, 1e-6),
    "max_iter": (int, 100),
    "shift_min": (float, 1e-3),
    "shift_max": (float, 1e3),
    "tangent_rule": (str, "dominant"),
    "omega_min": (float, 1e-4),
    "omega_max": (float, 1e2),
    "omega_points": (int, 200),
}
_GAS = {"friction": (float, 0.011), "sound_speed_sq": (float, 140000.0), "mesh": (float, 100.0)}
_WATER = {"friction": (float, 0.02), "density": (float, 1000.0)}

_TABLES = {
    "gas": {
        "node": {"kind": (str, REQUIRED), "pressure": (float, None), "flow": (float, None)},
        "edge": {"source": (str, REQUIRED), "target": (str, REQUIRED), "length": (float, REQUIRED),
                 "diameter": (float, REQUIRED), "area": (float, None), "friction": (float, None),
                 "sound_speed_sq": (float, None), "mesh": (float, None)},
    },
    "water": {
        "node": {"kind": (str, REQUIRED), "pressure": (float, None), "demand": (float, None)},
        "edge": {"source": (str, REQUIRED), "target": (str, REQUIRED), "length": (float, REQUIRED),
                 "area": (float, REQUIRED), "diameter": (float, REQUIRED), "friction": (float, None),
                 "angle": (float, 0.0), "density": (float, None)},
    },
    "power": {
        "line": {"resistance": (float, REQUIRED), "inductance": (float, REQUIRED),
                 "capacitance": (float, REQUIRED), "conductance": (float, REQUIRED),
                 "length": (float, REQUIRED), "segments": (int, REQUIRED), "injection": (float, 1.0)},
        "bus": {"kind": (str, REQUIRED), "power": (float, 0.0), "emf": (float, None),
                "reactance": (float, None), "rotor_angle": (float, None), "line": (str, REQUIRED),
                "node": (int, 0)},
        "branch": {"from": (str, REQUIRED), "to": (str, REQUIRED), "conductance": (float, 0.0),
                   "susceptance": (float, 0.0)},
    },
}
_BOUNDARY = {"input": (str, REQUIRED), "time": (float, REQUIRED), "value": (float, REQUIRED)}

_BLOCKS = ("network", "gas", "water", "solver", "mor")
_TABLE_ORDER = ("node", "edge", "line", "bus", "branch", "boundary")
_NAME = re.compile(r"^[A-Za-z0-9_\-]+$")


@dataclass(eq=True)
class NetworkConfig:
    """Validated configuration with every default filled in.

    ``tables`` maps a table section to ``{name: {key: value}}`` in file
    order; ``defaults`` is the domain block (``gas`` or ``water``);
    ``mor`` is ``None`` when the file has no reduction block.
    """

    domain: str
    scheme: str = None
    tables: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    mor: dict = None

    def table(self, section):
        return self.tables.get(section, {})

    @property
    def digest(self):
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()


# ------------------------------------------------------------------ parsing

def _convert(kind, text, line, key):
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if kind is int:
            return int(text)
        if kind is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(f"line {line}: {key} expects {kind.__name__}, got {text!r}",
                          line=line, key=key) from None
    if not text:
        raise ConfigError(f"line {line}: {key} is empty", line=line, key=key)
    return text


def _read_assignments(text):
    """Split the text into ``(line, path, raw value)`` triples."""
    seen = {}
    out = []
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {no}: expected 'section.key = value'", line=no)
        lhs, rhs = (part.strip() for part in body.split("=", 1))
        path = lhs.split(".")
        if len(path) not in (2, 3) or not all(_NAME.match(p) for p in path):
            raise ConfigError(f"line {no}: malformed key {lhs!r}", line=no, key=lhs)
        if lhs in seen:
            raise ConfigError(f"duplicate key {lhs!r} on lines {seen[lhs]} and {no}", line=no, key=lhs)
        seen[lhs] = no
        out.append((no, tuple(path), rhs))
    return out


def _fill(schema, given, prefix):
    out = {}
    for key, (_, default) in schema.items():
        if key in given:
            out[key] = given[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing key: {prefix}.{key}", key=f"{prefix}.{key}")
        elif default is not None:
            out[key] = default
    return out


def parse_config_text(text):
    """Parse configuration text; see :func:`parse_config`."""
    entries = _read_assignments(text)
    raw_blocks = {}
    raw_tables = {}
    for no, path, value in entries:
        section = path[0]
        if section in _BLOCKS:
            if len(path) != 2:
                raise ConfigError(f"line {no}: section {section!r} takes 'section.key'", line=no,
                                  key=".".join(path))
            raw_blocks.setdefault(section, {})[path[1]] = (no, value)
        elif section in _TABLE_ORDER:
            if len(path) != 3:
                raise ConfigError(f"line {no}: section {section!r} takes 'section.name.key'", line=no,
                                  key=".".join(path))
            raw_tables.setdefault(section, {}).setdefault(path[1], {})[path[2]] = (no, value)
        else:
            raise ConfigError(f"line {no}: unknown section {section!r}", line=no, key=".".join(path))

    if "network" not in raw_blocks:
        raise ConfigError("missing section: network", key="network")
    network = _typed(_NETWORK, raw_blocks["network"], "network")
    network = _fill(_NETWORK, network, "network")
    domain = network["domain"]
    if domain not in DOMAINS:
        raise ConfigError(f"network.domain must be one of {DOMAINS}, got {domain!r}", key="network.domain")
    scheme = network.get("scheme")
    if domain == "gas":
        scheme = scheme or "fvm"
        if scheme not in ("fvm", "fdm"):
            raise ConfigError(f"network.scheme must be fvm or fdm, got {scheme!r}", key="network.scheme")
    elif scheme is not None:
        raise ConfigError(f"network.scheme is only valid for gas networks", key="network.scheme")

    for section in raw_blocks:
        if section in ("gas", "water") and section != domain:
            raise ConfigError(f"section {section!r} not allowed for domain {domain}", key=section)
    schemas = dict(_TABLES[domain], boundary=_BOUNDARY)
    for section in raw_tables:
        if section not in schemas:
            raise ConfigError(f"section {section!r} not allowed for domain {domain}", key=section)

    block_schema = {"gas": _GAS, "water": _WATER}.get(domain)
    defaults = {}
    if block_schema is not None:
        defaults = _fill(block_schema, _typed(block_schema, raw_blocks.get(domain, {}), domain), domain)
    solver = _fill(_SOLVER, _typed(_SOLVER, raw_blocks.get("solver", {}), "solver"), "solver")
    mor = None
    if "mor" in raw_blocks:
        mor = _fill(_MOR, _typed(_MOR, raw_blocks["mor"], "mor"), "mor")

    tables = {}
    for section in _TABLE_ORDER:
        if section not in raw_tables:
            continue
        schema = schemas[section]
        recs = {}
        for name, raw in raw_tables[section].items():
            prefix = f"{section}.{name}"
            rec = _fill(schema, _typed(schema, raw, prefix), prefix)
            if section == "edge":
                for key, val in defaults.items():
                    if key in schema:
                        rec.setdefault(key, val)
                rec = {k: rec[k] for k in schema if k in rec}
            recs[name] = rec
        tables[section] = recs

    cfg = NetworkConfig(domain=domain, scheme=scheme, tables=tables, defaults=defaults,
                        solver=solver, mor=mor)
    _validate(cfg)
    return cfg


def _typed(schema, raw, prefix):
    out = {}
    for key, (no, text) in raw.items():
        if key not in schema:
            raise ConfigError(f"line {no}: unknown key {prefix}.{key}", line=no, key=f"{prefix}.{key}")
        out[key] = _convert(schema[key][0], text, no, f"{prefix}.{key}")
    return out


def _validate(cfg):
    t = cfg.tables
    if cfg.domain in ("gas", "water"):
        nodes = t.get("node", {})
        if not nodes:
            raise ConfigError("missing section: node", key="node")
        if not t.get("edge"):
            raise ConfigError("missing section: edge", key="edge")
        for name, e in t["edge"].items():
            for end in ("source", "target"):
                if e[end] not in nodes:
                    raise ConfigError(f"edge.{name}.{end}: references undeclared node {e[end]!r}",
                                      key=f"edge.{name}.{end}")
        kinds = ("supply", "demand", "junction") if cfg.domain == "gas" else ("pressure", "demand")
        for name, nd in nodes.items():
            if nd["kind"] not in kinds:
                raise ConfigError(f"node.{name}.kind must be one of {kinds}", key=f"node.{name}.kind")
    else:
        lines = t.get("line", {})
        if not lines:
            raise ConfigError("missing section: line", key="line")
        buses = t.get("bus", {})
        for name, b in buses.items():
            if b["line"] not in lines:
                raise ConfigError(f"bus.{name}.line: references undeclared line {b['line']!r}",
                                  key=f"bus.{name}.line")
        for name, br in t.get("branch", {}).items():
            for end in ("from", "to"):
                if br[end] not in buses:
                    raise ConfigError(f"branch.{name}.{end}: references undeclared bus {br[end]!r}",
                                      key=f"branch.{name}.{end}")
            if br["from"] == br["to"]:
                raise ConfigError(f"branch.{name}: endpoints coincide", key=f"branch.{name}")
    if cfg.mor is not None and cfg.mor["tangent_rule"] not in TANGENT_RULES:
        raise ConfigError(f"mor.tangent_rule must be one of {TANGENT_RULES}", key="mor.tangent_rule")
    for name, b in t.get("boundary", {}).items():
        if b["time"] < 0:
            raise ConfigError(f"boundary.{name}.time must be non-negative", key=f"boundary.{name}.time")


def preset_path(name):
    """Filesystem path of a shipped preset such as ``"table1_gas.cfg"``."""
    return Path(str(resources.files("netmor") / "presets" / name))


def parse_config(path):
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        Syntax error (with line number), unknown section or key, duplicate
        key, missing required key, or a dangling reference.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


# ------------------------------------------------------------ serialization

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg):
    """Canonical text form; ``parse_config_text(serialize_config(c)) == c``."""
    out = [f"network.domain = {cfg.domain}"]
    if cfg.scheme is not None:
        out.append(f"network.scheme = {cfg.scheme}")
    if cfg.defaults:
        out.append("")
        out += [f"{cfg.domain}.{k} = {_fmt(v)}" for k, v in cfg.defaults.items()]
    for section in _TABLE_ORDER:
        recs = cfg.tables.get(section)
        if not recs:
            continue
        out.append("")
        for name, rec in recs.items():
            out += [f"{section}.{name}.{k} = {_fmt(v)}" for k, v in rec.items()]
    out.append("")
    out += [f"solver.{k} = {_fmt(v)}" for k, v in cfg.solver.items()]
    if cfg.mor is not None:
        out.append("")
        out += [f"mor.{k} = {_fmt(v)}" for k, v in cfg.mor.items()]
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------- building

def _spec(cls, key, **kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", key=key) from None


def build_model(cfg):
    """Assemble the :class:`~netmor.dae.UnifiedDae` described by ``cfg``.

    Raises
    ------
    ConfigError
        Invalid physical parameters or network topology.
    """
    try:
        if cfg.domain == "gas":
            return _build_gas(cfg)
        if cfg.domain == "water":
            return _build_water(cfg)
        return _build_power(cfg)
    except TopologyError as exc:
        raise ConfigError(f"topology: {exc}") from exc


def _build_gas(cfg):
    nodes = tuple(GasNode(name, nd["kind"], pressure=nd.get("pressure"), flow=nd.get("flow"))
                  for name, nd in cfg.table("node").items())
    edges = []
    for name, e in cfg.table("edge").items():
        spec = _spec(GasPipelineSpec, f"edge.{name}", length=e["length"], diameter=e["diameter"],
                     area=e.get("area"), friction=e["friction"], sound_speed_sq=e["sound_speed_sq"],
                     mesh=e["mesh"])
        edges.append(GasEdge(name, e["source"], e["target"], spec))
    return assemble_gas_network(GasTopology(nodes=nodes, edges=tuple(edges), scheme=cfg.scheme))


def _build_water(cfg):
    nodes = tuple(WaterNode(name, nd["kind"], pressure=nd.get("pressure"), demand=nd.get("demand", 0.0))
                  for name, nd in cfg.table("node").items())
    edges = []
    for name, e in cfg.table("edge").items():
        spec = _spec(WaterPipeSpec, f"edge.{name}", length=e["length"], area=e["area"],
                     diameter=e["diameter"], friction=e["friction"], angle=e["angle"],
                     density=e["density"])
        edges.append(WaterEdge(name, e["source"], e["target"], spec))
    return assemble_water(WaterNetwork(nodes=nodes, edges=tuple(edges)))


def _build_power(cfg):
    line_names = list(cfg.table("line"))
    lines = [_spec(LineSpec, f"line.{name}", **{k: v for k, v in ln.items() if k != "injection"})
             for name, ln in cfg.table("line").items()]
    injections = [ln["injection"] for ln in cfg.table("line").values()]
    bus_tab = cfg.table("bus")
    if not bus_tab:
        return assemble_power(lines, None, injections)
    names = list(bus_tab)
    k = len(names)
    G = np.zeros((k, k))
    Bm = np.zeros((k, k))
    for br in cfg.table("branch").values():
        i, j = names.index(br["from"]), names.index(br["to"])
        for M, y in ((G, br["conductance"]), (Bm, br["susceptance"])):
            M[i, i] += y
            M[j, j] += y
            M[i, j] -= y
            M[j, i] -= y
    buses = tuple(
        Bus(name, b["kind"], power=b["power"], emf=b.get("emf"), reactance=b.get("reactance"),
            rotor_angle=b.get("rotor_angle"), line=line_names.index(b["line"]), node=b["node"])
        for name, b in bus_tab.items())
    system = _spec(BusSystem, "bus", buses=buses, G=G, B=Bm)
    return assemble_power(lines, system, injections)


def stepper_config(cfg):
    s = cfg.solver
    try:
        return StepperConfig(tau=s["tau"], max_iter=s["max_iter"], settle_tol=s["settle_tol"],
                             record_every=s["record_every"], settle_window=s["settle_window"],
                             stop_on_settle=s["stop_on_settle"])
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}", key="solver") from None


def tirka_config(cfg):
    if cfg.mor is None:
        raise ConfigError("missing section: mor", key="mor")
    m = cfg.mor
    try:
        return TirkaConfig(r=m["r"], tol=m["tol"], max_iter=m["max_iter"],
                           shift_range=(m["shift_min"], m["shift_max"]), tangent_rule=m["tangent_rule"])
    except ValueError as exc:
        raise ConfigError(f"mor: {exc}", key="mor") from None


def frequency_grid(cfg):
    m = cfg.mor or {k: v for k, (_, v) in _MOR.items() if v is not REQUIRED}
    lo, hi, n = m["omega_min"], m["omega_max"], m["omega_points"]
    if not (0 < lo < hi) or n < 2:
        raise ConfigError("mor: need 0 < omega_min < omega_max and omega_points >= 2", key="mor")
    return np.logspace(np.log10(lo), np.log10(hi), n)


def input_schedule(cfg, dae):
    """Constant nominal input, or a callable applying the boundary steps.

    A boundary record switches ``input`` to ``value`` from ``time`` on.
    Pressure inputs of gas and water networks are given in bar.
    """
    recs = cfg.table("boundary")
    if not recs:
        return dae.u0
    steps = []
    for name, b in recs.items():
        if b["input"] not in dae.input_names:
            raise ConfigError(f"boundary.{name}.input: unknown input {b['input']!r}; "
                              f"choose from {list(dae.input_names)}", key=f"boundary.{name}.input")
        idx = dae.input_names.index(b["input"])
        scale = BAR if cfg.domain in ("gas", "water") and b["input"].startswith("p[") else 1.0
        steps.append((b["time"], idx, b["value"] * scale))
    steps.sort(key=lambda s: s[0])
    u0 = np.array(dae.u0)

    def u(t):
        out = u0.copy()
        for t_on, idx, val in steps:
            if t >= t_on:
                out[idx] = val
        return out

    return u
