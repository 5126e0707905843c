"""Sectioned key/value scenario files.

::

    [scenario]
    kind = schrodinger
    [grid]
    dims = 64, 64
    extents = 16, 16
    [integrator]
    dt = 0.01
    t_end = 1

Every problem found is reported at once as a list of ``(key path, message)``
pairs inside :class:`ConfigError`.  Loop sections are free-form:
``[loops]`` holds ``<name>.center``, ``<name>.radius``, ``<name>.normal``,
``<name>.points`` and ``<name>.turns``.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

from holoqhd.errors import ConfigError

KINDS = ("schrodinger", "schrodinger_vortex", "pauli", "pauli_vortex",
         "bo_trajectory", "bo_trajectory_vortex", "diagnostics_only")
KIND_HELP = {
    "schrodinger": "scalar wavefunction with a static internal/external gauge potential",
    "schrodinger_vortex": "scalar wavefunction coupled to a moving vortex filament (3D)",
    "pauli": "two-component spinor with Zeeman coupling and static gauge potentials",
    "pauli_vortex": "spinor coupled to a moving vortex filament (3D)",
    "bo_trajectory": "nuclear trajectory on Gaussian-smoothed two-level surfaces",
    "bo_trajectory_vortex": "nuclear trajectory co-evolving with a vortex filament (3D)",
    "diagnostics_only": "diagnostics row recomputed from a stored snapshot",
}
PSI_KINDS = KINDS[:4]
SPINOR_KINDS = ("pauli", "pauli_vortex")
VORTEX_KINDS = ("schrodinger_vortex", "pauli_vortex", "bo_trajectory_vortex")
BO_KINDS = ("bo_trajectory", "bo_trajectory_vortex")

REQUIRED = object()


@dataclass(frozen=True)
class Key:
    kind: str  # int, float, bool, str, floats, ints, or "a|b|c" choices
    default: object = REQUIRED
    check: Optional[tuple] = None  # (predicate, message)


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


POSITIVE = (_pos, "must be positive")
NONNEG = (_nonneg, "must be non-negative")

SCHEMA = {
    "scenario": {
        "name": Key("str", "scenario"),
        "kind": Key("|".join(KINDS)),
        "seed": Key("int", 0, NONNEG),
    },
    "grid": {
        "dims": Key("ints"),
        "extents": Key("floats"),
    },
    "physics": {
        "hbar": Key("float", 1.0, POSITIVE),
        "mass": Key("float", 1.0, POSITIVE),
    },
    "state": {
        "family": Key("gaussian|plane_wave|background_bump", "gaussian"),
        "center": Key("floats", ()),
        "width": Key("float", 1.0, POSITIVE),
        "momentum": Key("floats", ()),
        "amplitude": Key("float", 0.3),
        "noise": Key("float", 0.0, NONNEG),
        "spinor": Key("uniform|texture", "uniform"),
        "spin_polar": Key("float", 0.0),
        "spin_azimuth": Key("float", 0.0),
        "texture_strength": Key("float", 1.5),
        "texture_width": Key("float", 2.0, POSITIVE),
    },
    "potential": {
        "kind": Key("none|harmonic|cosine", "none"),
        "omega": Key("float", 1.0, POSITIVE),
        "center": Key("floats", ()),
        "amplitude": Key("float", 0.0),
        "mode": Key("int", 1, POSITIVE),
        "axis": Key("int", 0, NONNEG),
    },
    "magnetic": {
        "b_uniform": Key("floats", (0.0, 0.0, 0.0)),
        "a_amplitude": Key("float", 0.0),
    },
    "gauge": {
        "source": Key("none|constant|ring", "none"),
        "lambda": Key("floats", ()),
        "ring_radius": Key("float", 1.0, POSITIVE),
        "ring_center": Key("floats", (0.0, 0.0, 0.0)),
        "ring_normal": Key("floats", (0.0, 0.0, 1.0)),
        "ring_nodes": Key("int", 64),
        "strength": Key("float", 1.0),
        "kappa": Key("float", 0.0),
        "reg": Key("float", 0.3, POSITIVE),
        "min_separation": Key("float", 0.0, NONNEG),
    },
    "integrator": {
        "dt": Key("float", REQUIRED, POSITIVE),
        "t_end": Key("float", REQUIRED, NONNEG),
        "output_stride": Key("int", 1, POSITIVE),
        "stability_c": Key("float", 0.5, POSITIVE),
        "renormalize": Key("bool", False),
        "interpolation": Key("cubic|fourier", "fourier"),
    },
    "output": {
        "snapshots": Key("bool", True),
        "residuals": Key("bool", True),
        "slice_axis": Key("int", 0, NONNEG),
    },
    "nuclear": {
        "model": Key("spin_boson|cone|hedgehog", "spin_boson"),
        "mass": Key("float", 1.0, POSITIVE),
        "omega": Key("float", 1.0, NONNEG),
        "coupling": Key("floats", ()),
        "tunnel": Key("float", 0.0),
        "slope": Key("float", 1.0),
        "offset": Key("float", 0.0),
        "height": Key("float", 1.0),
        "sigma0": Key("float", 0.0, NONNEG),
        "q0": Key("floats", ()),
        "qdot0": Key("floats", ()),
        "neglect_second_order": Key("bool", True),
        "real_eigenstate": Key("bool", False),
        "neglect_quantum_potential": Key("bool", True),
    },
    "input": {
        "snapshot": Key("str", ""),
        "filament": Key("str", ""),
        "time": Key("float", 0.0),
    },
}

LOOP_SCHEMA = {
    "center": Key("floats"),
    "radius": Key("float", REQUIRED, POSITIVE),
    "normal": Key("floats", (0.0, 0.0, 1.0)),
    "points": Key("int", 128),
    "turns": Key("int", 1),
}


@dataclass
class Scenario:
    name: str
    kind: str
    config: dict
    loops: dict = field(default_factory=dict)
    output_dir: Optional[str] = None

    def __eq__(self, other):
        return (isinstance(other, Scenario) and self.name == other.name and self.kind == other.kind
                and self.config == other.config and self.loops == other.loops)

    def get(self, path):
        section, key = path.split(".", 1)
        return self.config[section][key]


# ---------------------------------------------------------------------------
# reading


def read_raw(text):
    """Split text into ``{section: {key: (value, line)}}``; syntax problems go to the error list."""
    raw, errors = {}, []
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("["):
            if not s.endswith("]") or len(s) < 3:
                errors.append((f"line {lineno}", f"malformed section header {s!r}"))
                section = None
                continue
            section = s[1:-1].strip()
            if section in raw:
                errors.append((section, f"section repeated at line {lineno}"))
            raw.setdefault(section, {})
            continue
        if "=" not in s:
            errors.append((f"line {lineno}", "expected 'key = value'"))
            continue
        key, value = (x.strip() for x in s.split("=", 1))
        if section is None:
            errors.append((f"line {lineno}", f"key {key!r} outside any section"))
            continue
        if key in raw[section]:
            errors.append((f"{section}.{key}", f"duplicate key at line {lineno}"))
        raw[section][key] = value
    return raw, errors


def apply_overrides(raw, overrides):
    errors = []
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            errors.append((item, "override must look like section.key=value"))
            continue
        path, value = item.split("=", 1)
        section, key = path.strip().split(".", 1)
        raw.setdefault(section, {})[key.strip()] = value.strip()
    return errors


def _convert(kind, text):
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("not a finite number")
        return v
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"{text!r} is not a boolean")
    if kind in ("floats", "ints"):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        conv = int if kind == "ints" else float
        vals = tuple(conv(p) for p in parts)
        if kind == "floats" and not all(math.isfinite(v) for v in vals):
            raise ValueError("not finite numbers")
        return vals
    choices = kind.split("|")
    if text not in choices:
        raise ValueError(f"{text!r} is not one of {', '.join(choices)}")
    return text


def _typed(schema, values, prefix, errors):
    out = {}
    for key in values:
        if key not in schema:
            errors.append((f"{prefix}.{key}", "unknown key"))
    for key, spec in schema.items():
        path = f"{prefix}.{key}"
        if key not in values:
            if spec.default is REQUIRED:
                errors.append((path, "missing required key"))
            else:
                out[key] = spec.default
            continue
        try:
            val = _convert(spec.kind, values[key])
        except ValueError as exc:
            errors.append((path, f"invalid value: {exc}"))
            continue
        if spec.check is not None:
            pred, msg = spec.check
            items = val if isinstance(val, tuple) else (val,)
            if not all(pred(v) for v in items):
                errors.append((path, msg))
                continue
        out[key] = val
    return out


def _loops(values, errors):
    grouped = {}
    for k, v in values.items():
        if "." not in k:
            errors.append((f"loops.{k}", "loop keys look like <name>.<field>"))
            continue
        name, fld = k.split(".", 1)
        grouped.setdefault(name, {})[fld] = v
    return {name: _typed(LOOP_SCHEMA, fields_, f"loops.{name}", errors)
            for name, fields_ in sorted(grouped.items())}


def _cross_checks(kind, cfg, loops, errors):
    g = cfg.get("grid", {})
    dims, ext = g.get("dims"), g.get("extents")
    nd = None
    if dims is not None and ext is not None:
        if not 1 <= len(dims) <= 3:
            errors.append(("grid.dims", "need one to three axes"))
        elif len(dims) != len(ext):
            errors.append(("grid.extents", "must have one entry per axis of grid.dims"))
        else:
            nd = len(dims)
        for n in dims:
            if n < 4 or n % 2:
                errors.append(("grid.dims", "every dim must be even and at least 4"))
                break
        if any(e <= 0 for e in ext):
            errors.append(("grid.extents", "must be positive"))
    if nd is None:
        return
    st, gauge, pot = cfg["state"], cfg["gauge"], cfg["potential"]
    for key in ("center", "momentum"):
        if st[key] and len(st[key]) != nd:
            errors.append((f"state.{key}", f"needs {nd} entries"))
    if st["family"] in ("plane_wave", "background_bump") and len(st["momentum"]) == nd:
        for k, length in zip(st["momentum"], ext):
            turns = k * length / (2 * math.pi)
            if abs(turns - round(turns)) > 1e-9:
                errors.append(("state.momentum", "must be commensurate with the box (k L / 2 pi integer)"))
                break
    if pot["center"] and len(pot["center"]) != nd:
        errors.append(("potential.center", f"needs {nd} entries"))
    if pot["axis"] >= nd:
        errors.append(("potential.axis", "exceeds the number of grid axes"))
    if gauge["source"] == "constant" and len(gauge["lambda"]) != nd:
        errors.append(("gauge.lambda", f"needs {nd} entries for a constant potential"))
    if gauge["source"] == "ring":
        if nd != 3:
            errors.append(("gauge.source", "ring filaments need a 3-axis grid"))
        for key in ("ring_center", "ring_normal"):
            if len(gauge[key]) != 3:
                errors.append((f"gauge.{key}", "needs 3 entries"))
        if gauge["ring_nodes"] < 16:
            errors.append(("gauge.ring_nodes", "a filament needs at least 16 nodes"))
        elif nd == 3 and len(gauge["ring_center"]) == 3:
            half = [0.5 * e - 0.1 * max(ext) for e in ext]
            c, r = gauge["ring_center"], gauge["ring_radius"]
            if any(abs(ci) + r > h for ci, h in zip(c, half)):
                errors.append(("gauge.ring_radius", "ring must keep a 10% margin from the box faces"))
    if kind in VORTEX_KINDS and gauge["source"] != "ring":
        errors.append(("gauge.source", f"kind {kind} needs source = ring"))
    if kind not in VORTEX_KINDS and gauge["kappa"] != 0 and gauge["source"] == "ring":
        errors.append(("gauge.kappa", "only meaningful for moving filaments"))
    mag = cfg["magnetic"]
    if len(mag["b_uniform"]) != 3:
        errors.append(("magnetic.b_uniform", "needs 3 entries"))
    elif any(mag["b_uniform"]) and kind not in SPINOR_KINDS:
        errors.append(("magnetic.b_uniform", "Zeeman coupling needs a spinor kind"))
    if mag["a_amplitude"] and nd < 2:
        errors.append(("magnetic.a_amplitude", "sinusoidal vector potential needs two or more axes"))
    integ = cfg["integrator"]
    if kind in PSI_KINDS and "dt" in integ:
        spacing = [e / n for e, n in zip(ext, dims)]
        ph = cfg["physics"]
        bound = integ["stability_c"] * ph["mass"] / (ph["hbar"] * sum(1 / s**2 for s in spacing))
        if integ["dt"] > bound * (1 + 1e-12):
            errors.append(("integrator.dt", f"exceeds the stability bound {bound:.6g}"))
    if kind in BO_KINDS:
        nuc = cfg["nuclear"]
        if nd not in (2, 3):
            errors.append(("grid.dims", "nuclear trajectories need two or three axes"))
        if len(nuc["q0"]) != nd:
            errors.append(("nuclear.q0", f"needs {nd} entries"))
        if nuc["qdot0"] and len(nuc["qdot0"]) != nd:
            errors.append(("nuclear.qdot0", f"needs {nd} entries"))
        if nuc["coupling"] and len(nuc["coupling"]) != nd:
            errors.append(("nuclear.coupling", f"needs {nd} entries"))
        dx = max(e / n for e, n in zip(ext, dims))
        if 0 < nuc["sigma0"] < 2 * dx:
            errors.append(("nuclear.sigma0", "must be at least two grid spacings"))
    if kind == "diagnostics_only" and not cfg["input"]["snapshot"]:
        errors.append(("input.snapshot", "diagnostics_only needs a snapshot path"))
    for name, lp in loops.items():
        if nd < 2:
            errors.append((f"loops.{name}", "loops need two or three axes"))
            continue
        if "center" in lp and len(lp["center"]) != nd:
            errors.append((f"loops.{name}.center", f"needs {nd} entries"))
        if nd == 3 and len(lp.get("normal", ())) != 3:
            errors.append((f"loops.{name}.normal", "needs 3 entries"))
        if lp.get("points", 128) < 8:
            errors.append((f"loops.{name}.points", "a loop needs at least 8 points"))
        if lp.get("turns", 1) == 0:
            errors.append((f"loops.{name}.turns", "must be nonzero"))


def parse_config(text, overrides=None):
    """Parse and validate scenario text; raise :class:`ConfigError` listing every problem."""
    raw, errors = read_raw(text)
    errors += apply_overrides(raw, overrides)
    for section in raw:
        if section not in SCHEMA and section != "loops":
            errors.append((section, "unknown section"))
    cfg = {name: _typed(schema, raw.get(name, {}), name, errors) for name, schema in SCHEMA.items()}
    loops = _loops(raw.get("loops", {}), errors)
    kind = cfg["scenario"].get("kind")
    if kind is not None:
        _cross_checks(kind, cfg, loops, errors)
    if errors:
        raise ConfigError(errors)
    return Scenario(cfg["scenario"]["name"], kind, cfg, loops)


def _render(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, tuple):
        return ", ".join(_render(v) for v in val)
    return str(val)


def serialize(scenario):
    """Canonical text with every key written out; ``parse_config`` of it gives an equal scenario."""
    lines = []
    for section, schema in SCHEMA.items():
        lines.append(f"[{section}]")
        for key in schema:
            lines.append(f"{key} = {_render(scenario.config[section][key])}")
        lines.append("")
    if scenario.loops:
        lines.append("[loops]")
        for name, lp in scenario.loops.items():
            for key in LOOP_SCHEMA:
                lines.append(f"{name}.{key} = {_render(lp[key])}")
        lines.append("")
    return "\n".join(lines)
