"""Command-line front end.

A run is described by a config file (INI-style ``[section]`` / ``key = value``
text, or the same structure as JSON) and produces CSV or JSON artifacts with a
provenance sidecar. Example::

    [run]
    command = echo-lindblad
    t_max = 10

    [params]
    n = 3
    k = 0.1, 10

    [noise]
    nu1 = 0.1
    nu2 = 0.2
    mode = alternating-pairs

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import configparser
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, circuitgen, closedform, fitkit, knoise, krausgate, lindblad, sawtooth
from .qstate import FidelitySeries, basis_state, resolve_ics

COMMANDS = ("evolve", "echo-lindblad", "echo-kraus", "echo-param", "echo-combined", "circuit", "theory", "fit")
FORMATS = ("csv", "json")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

UNITS = {
    "t_fb": "forward-and-back map steps",
    "t": "map steps",
    "fidelity": "dimensionless",
    "stderr": "dimensionless",
    "p": "momentum quantum number (integer)",
    "probability": "dimensionless",
    "T1": "seconds",
    "T2": "seconds",
    "phase": "radians",
}


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


# -- config loading ----------------------------------------------------------


def load_config(path):
    """Read a config file into ``{section: {key: value}}``.

    JSON is detected by a ``.json`` suffix or a leading ``{``; anything else is
    parsed as INI text. Parse errors are re-raised as :class:`ConfigError` with
    the offending line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, json_hint=path.suffix.lower() == ".json", source=str(path))


def parse_config(text, json_hint=False, source="<config>"):
    if json_hint or text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
            raise ConfigError(f"{source}: JSON config must map section names to objects")
        return {s: dict(v) for s, v in raw.items()}
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys such as L, T1, T2 are case-sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return {s: dict(cp[s]) for s in cp.sections()}


def apply_overrides(raw, overrides):
    """Apply ``section.key=value`` strings on top of a parsed config."""
    for item in overrides or ():
        lhs, sep, value = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot or not section or not key:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        raw.setdefault(section, {})[key.strip()] = value.strip()
    return raw


class _Section:
    """Typed, diagnosable access to one config section; tracks used keys."""

    def __init__(self, raw, name):
        self.name = name
        self.data = raw.get(name, {})
        self.used = set()

    def _err(self, key, msg):
        return ConfigError(f"[{self.name}] {key}: {msg}")

    def get(self, key, kind=str, default=None, required=False, choices=None):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise self._err(key, "missing required key")
            return default
        v = self.data[key]
        try:
            v = _convert(v, kind)
        except (TypeError, ValueError) as exc:
            raise self._err(key, f"invalid value {self.data[key]!r} ({exc})") from None
        if choices is not None and v not in choices:
            raise self._err(key, f"{v!r} not one of {', '.join(map(str, choices))}")
        return v

    def unknown(self):
        return sorted(set(self.data) - self.used)


def _convert(v, kind):
    if kind is bool:
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ValueError("expected an integer")
        return int(str(v).strip()) if isinstance(v, str) else int(v)
    if kind is float:
        return float(v)
    if kind in ("floats", "ints", "strs"):
        items = v if isinstance(v, list) else [x for x in str(v).replace(";", ",").split(",") if x.strip()]
        conv = {"floats": float, "ints": int, "strs": lambda x: str(x).strip()}[kind]
        out = [conv(x) for x in items]
        if not out:
            raise ValueError("empty list")
        return out
    return str(v).strip()


# -- run configuration -------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    params: list
    t_max: int
    seed: int
    ic_policy: object = "all"
    noise: object = None
    options: dict = field(default_factory=dict)
    echo: dict = field(default_factory=dict)


def build_run_config(raw, command=None, seed=None):
    """Validate a parsed config into a :class:`RunConfig`; raises :class:`ConfigError`."""
    sections = {name: _Section(raw, name) for name in ("run", "params", "noise", "circuit", "theory", "fit", "evolve")}
    unknown_sections = sorted(set(raw) - set(sections))
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown_sections)}")
    run, prm, noise = sections["run"], sections["params"], sections["noise"]
    cfg_cmd = run.get("command", choices=COMMANDS)
    command = command or cfg_cmd
    if command is None:
        raise ConfigError("[run] command: missing required key")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cfg_seed = run.get("seed", int, 0)
    seed = cfg_seed if seed is None else seed
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    t_max = run.get("t_max", int, 10)
    if t_max < 1:
        raise ConfigError("[run] t_max: must be >= 1")
    ic = run.get("ic_policy", str, "all")
    if ic not in ("all", "exclude-symmetric", "symmetric"):
        try:
            ic = [int(x) for x in _convert(ic, "strs")]
        except ValueError:
            raise ConfigError(f"[run] ic_policy: {ic!r} is not a policy name or a list of momenta") from None

    n = prm.get("n", int, 3)
    L = prm.get("L", int, 1)
    ks = prm.get("k", "floats", [0.1] if command != "fit" else [0.1, 4.55])
    try:
        params = [sawtooth.QsmParams(n, L, k) for k in ks]
        if isinstance(ic, list):
            resolve_ics(n, ic)
    except ValueError as exc:
        raise ConfigError(f"[params]: {exc}") from None

    opts, noise_obj = {}, None
    try:
        if command in ("echo-lindblad", "echo-combined", "theory", "fit"):
            noise_obj = lindblad.NoiseRates(noise.get("nu1", float, 0.1), noise.get("nu2", float, 0.2))
        if command in ("echo-lindblad", "echo-combined"):
            opts["mode"] = noise.get("mode", str, "continuous-all-qubits", choices=lindblad.MODES)
            opts["method"] = noise.get("method", str, "rk4", choices=lindblad.METHODS)
        if command == "echo-lindblad":
            opts["split"] = noise.get("split", str, "substeps", choices=lindblad.SPLITS)
            opts["richardson"] = noise.get("richardson", bool, True)
        if command == "echo-kraus":
            T1, T2 = noise.get("T1", float, required=True), noise.get("T2", float, required=True)
            noise_obj = krausgate.GateNoiseConfig(T1, T2)
        if command in ("echo-param", "echo-combined"):
            pn = knoise.ParamNoiseConfig(
                noise.get("sigma", float, required=True),
                noise.get("realizations", int, 1000),
                seed,
                noise.get("exclude_symmetric", bool, True),
            )
            if command == "echo-param":
                noise_obj = pn
            else:
                opts["param_noise"] = pn
        if command in ("echo-kraus", "circuit"):
            c = sections["circuit"]
            opts["topology"] = c.get("topology", str, "linear", choices=circuitgen.TOPOLOGIES)
            opts["optimize"] = c.get("optimize", bool, True)
            if command == "circuit":
                opts["direction"] = c.get("direction", str, sawtooth.FORWARD, choices=(sawtooth.FORWARD, sawtooth.BACKWARD))
                opts["emit_gates"] = c.get("emit_gates", bool, False)
        if command == "theory":
            th = sections["theory"]
            opts["regimes"] = [closedform.as_regime(r).value for r in th.get("regime", "strs", ["localized", "diffusive"])]
            opts["layout"] = th.get("layout", str, "continuous", choices=("continuous", "serial", "parallel"))
            opts["M"] = th.get("M", int, 33)
            opts["n_eff"] = th.get("n_eff", int, None)
            opts["dt"] = th.get("dt", float, 0.1)
            if not opts["dt"] > 0:
                raise ConfigError("[theory] dt: must be positive")
        if command == "evolve":
            ev = sections["evolve"]
            opts["p0"] = ev.get("p0", int, 0)
            opts["times"] = ev.get("times", "ints", list(range(t_max + 1)))
            basis_state(n, opts["p0"])
        if command == "fit":
            f = sections["fit"]
            opts["localized"] = f.get("localized", str, required=True)
            opts["diffusive"] = f.get("diffusive", str, required=True)
            opts["model"] = f.get("model", str, "gate-based-serial", choices=fitkit.MODELS)
            opts["window"] = tuple(f.get("window", "floats", list(fitkit.DEFAULT_WINDOW)))
            opts["M"] = f.get("M", int, fitkit.GATES_PER_STEP)
            opts["spam"] = f.get("spam", bool, False)
            if len(opts["window"]) != 2:
                raise ConfigError("[fit] window: expected two numbers t_lo, t_hi")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    stray = [f"[{s.name}] {k}" for s in sections.values() for k in s.unknown()]
    if stray:
        raise ConfigError(f"unknown or unused config key(s) for '{command}': {', '.join(stray)}")
    echo = {name: {k: raw[name][k] for k in sorted(raw[name])} for name in sorted(raw)}
    return RunConfig(command, params, t_max, seed, ic, noise_obj, opts, echo)


# -- output ------------------------------------------------------------------


def _num(x):
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _dump_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _provenance(cfg, extra=None):
    prov = {"command": cfg.command, "config": cfg.echo, "seed": cfg.seed, "version": __version__}
    if extra:
        prov.update(extra)
    return prov


def series_csv(series, time_col="t_fb"):
    buf = io.StringIO()
    buf.write(f"# units: t={UNITS[time_col]}; fidelity={UNITS['fidelity']}; stderr={UNITS['stderr']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "fidelity", "stderr"])
    for t, f, e in zip(series.times, series.values, series.stderr):
        w.writerow([_num(t), _num(f), _num(e)])
    return buf.getvalue()


def read_series_csv(path, n=None):
    """Read a ``t,fidelity,stderr`` CSV (``#`` comment lines skipped).

    Metadata is taken from a sibling ``.json`` sidecar when present.
    """
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read series {path}: {exc}") from None
    rows = list(csv.reader(lines))
    if not rows or [c.strip() for c in rows[0]] != ["t", "fidelity", "stderr"]:
        raise ConfigError(f"{path}: expected header t,fidelity,stderr")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float).reshape(-1, 3)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = dict(json.loads(side.read_text()).get("meta", {}))
    if n is not None:
        meta.setdefault("n", n)
    return FidelitySeries(data[:, 0], data[:, 1], data[:, 2], meta)


def _klabel(k):
    return f"k{format(k, 'g')}"


class _Writer:
    def __init__(self, out, fmt, cfg):
        self.out, self.fmt, self.cfg = Path(out), fmt, cfg
        self.files = []

    def _write(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        p.write_text(text)
        self.files.append(p)

    def series(self, stem, series, time_col="t_fb"):
        prov = _provenance(self.cfg, {"meta": series.meta, "units": {k: UNITS[k] for k in (time_col, "fidelity", "stderr")}})
        if self.fmt == "csv":
            self._write(stem + ".csv", series_csv(series, time_col))
            self._write(stem + ".json", _dump_json(prov))
        else:
            prov["data"] = {"t": series.times, "fidelity": series.values, "stderr": series.stderr}
            self._write(stem + ".json", _dump_json(prov))

    def report(self, stem, payload):
        self._write(stem + ".json", _dump_json(_provenance(self.cfg, payload)))

    def text(self, name, text):
        self._write(name, text)


# -- commands ----------------------------------------------------------------


def _run_evolve(cfg, w, threads):
    times = cfg.options["times"]
    for p in cfg.params:
        probs = sawtooth.momentum_distributions(basis_state(p.n, cfg.options["p0"]), p, times)
        momenta = np.arange(p.N) - p.N // 2
        ipr = [sawtooth.inverse_participation(row) for row in probs]
        stem = f"evolve_{_klabel(p.k)}"
        if w.fmt == "csv":
            buf = io.StringIO()
            buf.write(f"# units: t={UNITS['t']}; p={UNITS['p']}; probability={UNITS['probability']}\n")
            cw = csv.writer(buf, lineterminator="\n")
            cw.writerow(["t", "p", "probability"])
            for t, row in zip(times, probs):
                for m, pr in zip(momenta, row):
                    cw.writerow([int(t), int(m), _num(pr)])
            w.text(stem + ".csv", buf.getvalue())
            w.report(stem, {"meta": {"n": p.n, "L": p.L, "k": p.k, "p0": cfg.options["p0"]}, "ipr": ipr})
        else:
            w.report(
                stem,
                {
                    "meta": {"n": p.n, "L": p.L, "k": p.k, "p0": cfg.options["p0"]},
                    "data": {"t": times, "p": momenta, "probability": probs, "ipr": ipr},
                },
            )


def _run_echo(cfg, w, threads):
    o = cfg.options
    for p in cfg.params:
        if cfg.command == "echo-lindblad":
            s = lindblad.echo_lindblad(
                p, cfg.noise, cfg.t_max, o["mode"], cfg.ic_policy, o["method"], threads, o["richardson"], o["split"]
            )
        elif cfg.command == "echo-kraus":
            s = krausgate.echo_kraus(p, cfg.noise, cfg.t_max, cfg.ic_policy, o["topology"], o["optimize"], threads)
        elif cfg.command == "echo-param":
            ic = None if cfg.ic_policy == "all" else cfg.ic_policy
            s = knoise.echo_param_noise(p, cfg.noise, cfg.t_max, threads, ic)
        else:
            ic = None if cfg.ic_policy == "all" else cfg.ic_policy
            s = knoise.echo_combined(p, o["param_noise"], cfg.noise, cfg.t_max, o["mode"], o["method"], threads, ic)
        w.series(f"{cfg.command}_{_klabel(p.k)}", s)


def _run_circuit(cfg, w, threads):
    o = cfg.options
    for p in cfg.params:
        logical = circuitgen.qsm_circuit(p, o["direction"])
        lowered = circuitgen.compile_step(p, o["direction"], o["topology"], optimize=False)
        final = circuitgen.peephole(lowered) if o["optimize"] else lowered
        before, after = circuitgen.gate_counts(lowered), circuitgen.gate_counts(final)
        payload = {
            "meta": {"n": p.n, "L": p.L, "k": p.k, "direction": o["direction"], "topology": o["topology"]},
            "cnot_before_opt": before["CNOT"],
            "cnot_after_opt": after["CNOT"],
            "census_logical": circuitgen.gate_counts(logical),
            "census_lowered": before,
            "census_final": after,
        }
        stem = f"circuit_{_klabel(p.k)}"
        w.report(stem, payload)
        if o["emit_gates"]:
            w.text(stem + ".qsm", circuitgen.dumps(final))


def _run_theory(cfg, w, threads):
    o = cfg.options
    n = cfg.params[0].n
    t = np.round(np.arange(0.0, cfg.t_max + 0.5 * o["dt"], o["dt"]), 12)
    for regime in o["regimes"]:
        if o["layout"] == "continuous":
            f = closedform.f_regime(regime, n, cfg.noise, t)
        else:
            f = closedform.f_gate_based(t, n, o["M"], cfg.noise, regime, o["layout"], o["n_eff"])
        meta = {"n": n, "regime": regime, "layout": o["layout"], "nu1": cfg.noise.nu1, "nu2": cfg.noise.nu2}
        if o["layout"] != "continuous":
            meta.update(M=o["M"], n_eff=o["n_eff"])
        w.series(f"theory_{regime}", FidelitySeries(t, f, np.zeros_like(t), meta), time_col="t")


def _run_fit(cfg, w, threads):
    o = cfg.options
    n = cfg.params[0].n
    loc = read_series_csv(o["localized"], n)
    dif = read_series_csv(o["diffusive"], n)
    res = fitkit.fit_rates(
        loc, dif, o["model"], n=n, M=o["M"], L=cfg.params[0].L, window=o["window"], spam=o["spam"], seed=cfg.seed
    )
    T_step = o["M"] * krausgate.CNOT_DURATION
    T1, T2 = fitkit.rates_to_physical(res.params["nu1"], res.params["nu2"], T_step)
    w.report("fit", {"fit": res.to_dict(), "physical": {"T_step_s": T_step, "T1_s": T1, "T2_s": T2}})


_RUNNERS = {
    "evolve": _run_evolve,
    "echo-lindblad": _run_echo,
    "echo-kraus": _run_echo,
    "echo-param": _run_echo,
    "echo-combined": _run_echo,
    "circuit": _run_circuit,
    "theory": _run_theory,
    "fit": _run_fit,
}


def run(cfg, out, fmt="csv", threads=1):
    """Execute a validated config, writing artifacts into ``out``; returns written paths."""
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    w = _Writer(out, fmt, cfg)
    _RUNNERS[cfg.command](cfg, w, threads)
    return w.files


NUMERIC_ERRORS = (lindblad.IntegratorError, fitkit.FitError, ArithmeticError, np.linalg.LinAlgError, ValueError)


def build_parser():
    ap = argparse.ArgumentParser(prog="qsmlab", description="Quantum sawtooth map noise laboratory")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="overrides [run] command")
    ap.add_argument("--config", help="INI or JSON run config")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides [run] seed)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--format", choices=FORMATS, default="csv")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else {}
        apply_overrides(raw, args.overrides)
        cfg = build_run_config(raw, args.command, args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = run(cfg, args.out, args.format, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in files:
        print(f)
    return EXIT_OK
