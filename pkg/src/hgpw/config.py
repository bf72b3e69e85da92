"""Scenario configuration: INI text with sections, validated against a schema.

Every key a scenario can use is declared here with its type and default, so a
resolved scenario lists every value that was applied. Validation collects all
problems before raising.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import (DEFAULT_REGION_MATERIALS, POLICIES, REGIONS, CrossSection, GeometryError,
                       build_cross_section)
from .materials import DEFAULT_INDICES, MaterialError, Tabulated, gold

BUILTIN_GOLD = "builtin:gold"

KINDS = ("mode-solve", "gap-sweep", "simulate-cw", "simulate-pulsed", "polarization",
         "correlate", "fit", "beta", "reproduce-paper")
STOCHASTIC = {"simulate-cw", "simulate-pulsed", "polarization", "reproduce-paper"}
MESH_CHOICES = ("coarse", "default", "fine")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Key:
    kind: str          # float, int, str, bool, floats, kinds, path, choice
    default: object = None
    choices: tuple = ()
    optional: bool = False  # None allowed


def _f(d, **kw):
    return Key("float", d, **kw)


_CS = CrossSection.__dataclass_fields__
LAYER_KEYS = {name: _f(_CS[name].default) for name in
              ("gap", "core_thickness", "spacer_thickness", "metal_thickness", "cover_thickness",
               "substrate_thickness", "air_thickness", "domain_width")}

SCHEMA = {
    "scenario": {
        "kind": Key("choice", None, KINDS, optional=True),
        "steps": Key("kinds", None, optional=True),
        "seed": Key("int", None, optional=True),
        "out": Key("str", None, optional=True),
        "geometry": Key("path", None, optional=True),
        "budget": Key("path", None, optional=True),
    },
    "layers": LAYER_KEYS,
    "mesh": {"policy": Key("choice", "default", MESH_CHOICES), "wavelength": _f(785.0)},
    "solver": {"n_guess": Key("float", None, optional=True), "count": Key("int", 4)},
    "sweep": {"gaps": Key("floats", (100.0, 200.0, 300.0, 500.0, 1000.0)), "workers": Key("int", 1)},
    "emitter": {"lifetime_ns": _f(2.74), "i_sat": _f(90.0), "dipole_angle_deg": _f(0.0),
                "p_wg_left": _f(0.0), "p_wg_right": _f(0.0), "p_free": _f(1.0),
                "quantum_yield": _f(1.0)},
    "detection": {"channels": Key("str", "free:0.001, free:0.001"), "dark_rate": _f(0.0),
                  "background_rate": _f(0.0), "jitter_ps": _f(0.0), "dead_time_ns": _f(0.0)},
    "cw": {"intensity": _f(90.0), "angle_deg": Key("float", None, optional=True),
           "duration_s": _f(1.0), "workers": Key("int", 1), "format": Key("choice", "csv", ("csv", "bin"))},
    "pulsed": {"rep_period_ns": _f(50.0), "excitation_prob": _f(0.5), "n_pulses": Key("int", 1_000_000),
               "workers": Key("int", 1), "format": Key("choice", "csv", ("csv", "bin"))},
    "polarization": {"intensity": _f(45.0), "angles": Key("floats", tuple(float(a) for a in range(-90, 91, 10))),
                     "dwell_s": _f(1.0), "channel": Key("int", 1)},
    "correlate": {"records": Key("path", None, optional=True),
                  "mode": Key("choice", "g2", ("g2", "lifetime")),
                  "estimator": Key("choice", "start-stop", ("start-stop", "full")),
                  "channel_a": Key("int", 1), "channel_b": Key("int", 2), "sync_channel": Key("int", 0),
                  "bin_ps": _f(128.0), "max_delay_ps": _f(50_000.0), "range_ps": _f(40_000.0),
                  "duration_s": Key("float", None, optional=True)},
    "fit": {"data": Key("path", None, optional=True),
            "model": Key("choice", "g2", ("saturation", "exponential", "g2", "cos2")),
            "s": _f(1.0), "tau_ns": _f(2.74), "sigma_ps": _f(0.0), "convolve": Key("bool", False),
            "max_delay_ps": Key("float", None, optional=True),
            "window_start_ps": _f(500.0), "window_stop_ps": _f(30_000.0),
            "parameterization": Key("choice", "i_sat", ("i_sat", "inverse"))},
    "tau_ns": {"value": _f(2.74), "sigma": _f(0.02)},
    "alpha": {"value": _f(0.555), "sigma": _f(0.010)},
    "r_inf": {"value": _f(96e3), "sigma": _f(3e3)},
    "eta": {"value": _f(4.1e-3), "sigma": _f(0.5e-3)},
    "spectral": {"spectrum": Key("path", None, optional=True), "grating": Key("path", None, optional=True),
                 "optics": Key("path", None, optional=True)},
    "reproduce": {"quick": Key("bool", False), "workers": Key("int", 1)},
}

# free-form sections: keys are user-chosen names
FREE_SECTIONS = {"materials", "regions"}

GEOMETRY_SECTIONS = ("layers", "materials", "regions", "mesh")
PHOTON_SECTIONS = ("emitter", "detection")
BUDGET_SECTIONS = ("tau_ns", "alpha", "r_inf", "eta", "spectral")

SECTIONS_FOR = {
    "mode-solve": GEOMETRY_SECTIONS + ("solver",),
    "gap-sweep": GEOMETRY_SECTIONS + ("solver", "sweep"),
    "simulate-cw": PHOTON_SECTIONS + ("cw",),
    "simulate-pulsed": PHOTON_SECTIONS + ("pulsed",),
    "polarization": PHOTON_SECTIONS + ("polarization",),
    "correlate": ("correlate",),
    "fit": ("fit",),
    "beta": BUDGET_SECTIONS,
    "reproduce-paper": ("reproduce",),
}


@dataclass
class Scenario:
    kind: str
    steps: tuple
    seed: int | None
    out: Path
    sections: dict                 # resolved values, every section used by the steps
    inputs: list = field(default_factory=list)  # files read while resolving
    source: Path | None = None

    def section(self, name):
        return self.sections.get(name, {})

    def resolved(self):
        """Plain dict of everything that was applied (for the manifest)."""
        out = {"scenario": {"kind": self.kind, "steps": list(self.steps), "seed": self.seed,
                            "out": str(self.out)}}
        for name, values in self.sections.items():
            out[name] = {k: (str(v) if isinstance(v, Path) else list(v) if isinstance(v, tuple) else v)
                         for k, v in values.items()}
        return out


def _convert(key: Key, raw: str, base: Path):
    raw = raw.strip()
    if key.optional and raw.lower() in ("", "none"):
        return None
    if key.kind == "float":
        return float(raw)
    if key.kind == "int":
        v = float(raw)
        if v != int(v):
            raise ValueError("not an integer")
        return int(v)
    if key.kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("not a boolean")
    if key.kind == "floats":
        return tuple(_float_list(raw))
    if key.kind == "kinds":
        steps = tuple(s.strip() for s in raw.split(",") if s.strip())
        bad = [s for s in steps if s not in KINDS or s == "reproduce-paper"]
        if bad or not steps:
            raise ValueError(f"unknown step(s) {bad}")
        return steps
    if key.kind == "choice":
        if raw not in key.choices:
            raise ValueError(f"expected one of {list(key.choices)}")
        return raw
    if key.kind == "path":
        p = Path(raw).expanduser()
        return p if p.is_absolute() else (base / p)
    return raw


def _float_list(raw):
    """'100, 200, 300' or 'start:stop:step' (inclusive)."""
    if ":" in raw:
        a, b, c = (float(x) for x in raw.split(":"))
        if c <= 0 or b < a:
            raise ValueError("bad range")
        n = int(round((b - a) / c))
        return [a + k * c for k in range(n + 1)]
    return [float(x) for x in raw.split(",") if x.strip()]


def _read_ini(path: Path):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep material names case-sensitive
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return _from_manifest(json.loads(text))
    cp.read_string(text, source=str(path))
    return {s: dict(cp[s]) for s in cp.sections()}


def _from_manifest(obj):
    """Raw sections from a run manifest, so a run can be repeated from its own record."""
    cfg = obj["config"]
    raw = {}
    for sec, values in cfg.items():
        raw[sec] = {}
        for k, v in values.items():
            if v is None:
                raw[sec][k] = "none"
            elif isinstance(v, list):
                raw[sec][k] = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                raw[sec][k] = repr(v)
            else:
                raw[sec][k] = str(v)
    return raw


def _resolve_section(name, raw, base, problems):
    schema = SCHEMA[name]
    values = {k: key.default for k, key in schema.items()}
    for k, text in raw.items():
        if k not in schema:
            problems.append(f"[{name}] unknown key {k!r}")
            continue
        try:
            values[k] = _convert(schema[k], text, base)
        except ValueError as exc:
            problems.append(f"[{name}] {k} = {text!r}: expected {schema[k].kind} ({exc})")
    return values


def _parse_material(value: str, base: Path):
    """'2.4' -> index, '0.2, 4.8' -> (n, k), 'builtin:gold' -> shipped table,
    anything else -> material CSV path."""
    if value.strip() == BUILTIN_GOLD:
        return gold(), None
    parts = [p.strip() for p in value.split(",")]
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        p = Path(value.strip())
        return Tabulated.from_csv(p if p.is_absolute() else base / p), (p if p.is_absolute() else base / p)
    if len(nums) == 1:
        return nums[0], None
    if len(nums) == 2:
        return (nums[0], nums[1]), None
    raise ValueError("expected n, 'n, k' or a CSV path")


def parse_config(path=None, kind=None, overrides=None) -> Scenario:
    """Validated Scenario from an INI file (or a run manifest).

    ``kind`` (from the command line) must agree with the file if both are given.
    ``overrides`` are command-line values: seed, out, mesh. Raises ConfigError
    listing every problem; a missing file surfaces as FileNotFoundError.
    """
    overrides = overrides or {}
    raw = {}
    base = Path.cwd()
    inputs = []
    if path is not None:
        path = Path(path)
        raw = _read_ini(path)
        base = path.resolve().parent
        inputs.append(path)
    problems = []

    unknown = [s for s in raw if s not in SCHEMA and s not in FREE_SECTIONS]
    problems += [f"unknown section [{s}]" for s in unknown]
    scen = _resolve_section("scenario", raw.get("scenario", {}), base, problems)

    file_kind = scen["kind"]
    if kind and file_kind and kind != file_kind and kind != "run":
        problems.append(f"[scenario] kind = {file_kind!r} does not match command {kind!r}")
    steps = scen["steps"]
    the_kind = file_kind or (steps[0] if steps else None) or (kind if kind != "run" else None)
    if the_kind is None:
        problems.append("[scenario] kind is required")
        raise ConfigError(problems)
    steps = steps or (the_kind,)

    # external geometry/budget files are merged under the inline sections
    merged = {}
    if scen["geometry"] is not None:
        geo = _read_ini(scen["geometry"])  # FileNotFoundError -> I/O exit
        inputs.append(scen["geometry"])
        for s, vals in geo.items():
            if s not in GEOMETRY_SECTIONS:
                problems.append(f"geometry file: unknown section [{s}]")
                continue
            merged.setdefault(s, {}).update(vals)
    if scen["budget"] is not None:
        bud = _read_ini(scen["budget"])
        inputs.append(scen["budget"])
        for s, vals in bud.items():
            if s not in BUDGET_SECTIONS:
                problems.append(f"budget file: unknown section [{s}]")
                continue
            merged.setdefault(s, {}).update(vals)
    for s, vals in raw.items():
        if s != "scenario":
            merged.setdefault(s, {}).update(vals)

    needed = []
    for st in steps:
        for s in SECTIONS_FOR[st]:
            if s not in needed:
                needed.append(s)
    for s in merged:
        if s not in needed and s in SCHEMA | dict.fromkeys(FREE_SECTIONS):
            problems.append(f"section [{s}] is not used by {'/'.join(steps)}")

    sections = {}
    for s in needed:
        if s in FREE_SECTIONS:
            sections[s] = dict(merged.get(s, {}))
        else:
            sections[s] = _resolve_section(s, merged.get(s, {}), base, problems)

    if overrides.get("mesh") is not None:
        if "mesh" in sections:
            sections["mesh"]["policy"] = overrides["mesh"]
    seed = overrides.get("seed") if overrides.get("seed") is not None else scen["seed"]
    if seed is not None and not 0 <= seed < 2**64:
        problems.append(f"seed {seed} is not a 64-bit unsigned integer")
    if seed is None and any(st in STOCHASTIC for st in steps):
        problems.append("seed is required for stochastic scenarios ([scenario] seed or --seed)")
    out = overrides.get("out") or scen["out"] or Path("runs") / the_kind
    out = Path(out)

    if "layers" in sections:
        _check_geometry(sections, base, problems, inputs)
    if "emitter" in sections:
        _check_photonics(sections, problems)
    if "tau_ns" in sections:
        _check_budget(sections, problems)
    if "mesh" in sections and sections["mesh"]["policy"] not in POLICIES and sections["mesh"]["policy"] != "fine":
        problems.append(f"[mesh] unknown policy {sections['mesh']['policy']!r}")
    for st in steps:
        _check_step_inputs(st, steps, sections, problems)

    if problems:
        raise ConfigError(problems)
    for sec in sections.values():
        for v in sec.values():
            if isinstance(v, Path) and v not in inputs:
                inputs.append(v)
    return Scenario(the_kind, tuple(steps), seed, out, sections, inputs, path)


def _check_step_inputs(step, steps, sections, problems):
    first = steps.index(step) == 0
    if step == "correlate" and first and sections["correlate"]["records"] is None:
        problems.append("[correlate] records is required")
    if step == "fit" and first and sections["fit"]["data"] is None:
        problems.append("[fit] data is required")


def cross_section(sections) -> CrossSection:
    mats = {name: _parse_material(value, Path.cwd())[0] for name, value in sections.get("materials", {}).items()}
    cfg = dict(sections["layers"])
    cfg["materials"] = mats
    cfg["region_materials"] = dict(sections.get("regions", {}))
    return build_cross_section(cfg)


def _check_geometry(sections, base, problems, inputs):
    # library defaults are written out so the resolved config names every material
    given = {**{k: repr(v) for k, v in DEFAULT_INDICES.items()}, "gold": BUILTIN_GOLD,
             **sections.get("materials", {})}
    sections["regions"] = {**DEFAULT_REGION_MATERIALS, **sections.get("regions", {})}
    resolved = {}
    for name, value in given.items():
        try:
            _, src = _parse_material(value, base)
        except (ValueError, MaterialError) as exc:
            problems.append(f"[materials] {name} = {value!r}: {exc}")
            continue
        # table paths are stored absolute so the resolved config is location independent
        resolved[name] = str(src.resolve()) if src is not None else value
        if src is not None:
            inputs.append(src)
    sections["materials"] = resolved
    for region in sections.get("regions", {}):
        if region not in REGIONS:
            problems.append(f"[regions] unknown region {region!r}")
    if len(resolved) == len(given):
        try:
            cross_section(sections)
        except (GeometryError, MaterialError, ValueError) as exc:
            problems.append(f"[layers] {exc}")


def _channels(text):
    out = []
    for item in text.split(","):
        branch, _, eff = item.strip().partition(":")
        out.append((branch.strip(), float(eff)))
    return out


def _check_photonics(sections, problems):
    try:
        emitter_config(sections)
    except ValueError as exc:
        problems.append(f"[emitter] {exc}")
    try:
        chain = detection_chain(sections)
        if not chain.channels:
            problems.append("[detection] channels: at least one detector required")
    except ValueError as exc:
        problems.append(f"[detection] {exc}")


def emitter_config(sections):
    from .photophysics import EmitterConfig
    e = sections["emitter"]
    return EmitterConfig(lifetime_ns=e["lifetime_ns"], i_sat=e["i_sat"], dipole_angle_deg=e["dipole_angle_deg"],
                         branching={"wg_left": e["p_wg_left"], "wg_right": e["p_wg_right"], "free": e["p_free"]},
                         quantum_yield=e["quantum_yield"])


def detection_chain(sections):
    from .photophysics import Channel, DetectionChain
    d = sections["detection"]
    chans = []
    for branch, eff in _channels(d["channels"]):
        if branch not in ("wg_left", "wg_right", "free"):
            raise ValueError(f"channels: unknown branch {branch!r}")
        chans.append(Channel(branch, eff))
    return DetectionChain(tuple(chans), dark_rate=d["dark_rate"], background_rate=d["background_rate"],
                          jitter_ps=d["jitter_ps"], dead_time_ns=d["dead_time_ns"])


def _check_budget(sections, problems):
    from .io import budget_from_sections
    try:
        budget_from_sections(sections)
    except ValueError as exc:
        problems.append(f"[budget] {exc}")
    spec = sections.get("spectral", {})
    if spec.get("spectrum") is not None and spec.get("grating") is None:
        problems.append("[spectral] grating is required when a spectrum is given")
