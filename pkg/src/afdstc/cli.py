"""Command-line experiment runner.

An experiment sweeps SNR for one or more network shapes and schemes, writes
one CSV per (shape, scheme, output) and a ``summary.json`` describing what was
run, the estimated diversity orders and SNR gains between curves.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .analysis import Provenance, SerCurve, analytic_curve, estimate_diversity_order, supports
from .errors import CapabilityError, ConfigError
from .montecarlo import SimPlan, run_sim
from .network import ModulationFamily, NetworkConfig, modulation_constants
from .powerctl import RelayReference, SchemeId
from .stc import build_codebook

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CAPABILITY = 3

CSV_COLUMNS = ("snr_db", "value", "ci_halfwidth", "provenance", "scheme", "R", "Ns", "Nd", "M", "family")

_ANALYTIC = (Provenance.EXACT, Provenance.ASYMPTOTIC, Provenance.UPPER_BOUND, Provenance.MGF)


def _fmt(x):
    return "%.12g" % x


@dataclass(frozen=True)
class ExperimentSpec:
    """A full experiment: shapes x schemes x outputs over one SNR grid."""

    networks: tuple
    schemes: tuple
    outputs: tuple
    snr_db_grid: tuple
    modulation_family: ModulationFamily = ModulationFamily.MPSK
    modulation_order: int = 2
    min_errors: int = 200
    max_trials: int = 1_000_000
    seed: int = 0
    tau: float = 0.5
    relay_reference: RelayReference = RelayReference.SIGMA_F
    workers: int = 1
    mc_samples: int = 100_000
    target_bers: tuple = (1e-2, 1e-4)
    out_path: str = "results"
    preset: str | None = field(default=None, compare=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if not self.networks:
            raise ConfigError("networks: at least one network is required")
        set_("networks", tuple(n if isinstance(n, NetworkConfig) else NetworkConfig.from_dict(n)
                               for n in self.networks))
        set_("schemes", tuple(_enum(SchemeId, s, "schemes") for s in self.schemes))
        if not self.schemes:
            raise ConfigError("schemes: at least one scheme is required")
        set_("outputs", tuple(_enum(Provenance, o, "outputs") for o in self.outputs))
        if not self.outputs:
            raise ConfigError("outputs: at least one output is required")
        set_("modulation_family", _enum(ModulationFamily, self.modulation_family, "modulation.family"))
        set_("relay_reference", _enum(RelayReference, self.relay_reference, "relay_reference"))
        try:
            grid = tuple(float(s) for s in self.snr_db_grid)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"snr_db: {exc}") from exc
        if not grid or list(grid) != sorted(set(grid)) or not all(map(math.isfinite, grid)):
            raise ConfigError("snr_db: grid must be non-empty, finite and strictly increasing")
        set_("snr_db_grid", grid)
        if not 0.0 < float(self.tau) < 1.0:
            raise ConfigError("tau: must lie in (0, 1)")
        if int(self.mc_samples) != self.mc_samples or self.mc_samples < 1:
            raise ConfigError("mc_samples: must be a positive integer")
        targets = tuple(float(t) for t in self.target_bers)
        if any(not 0.0 < t < 1.0 for t in targets):
            raise ConfigError("target_bers: values must lie in (0, 1)")
        set_("target_bers", targets)
        # The remaining simulation checks live in SimPlan.
        self.modulation()
        for net in self.networks:
            SimPlan(net, self.schemes[0], None, self.snr_db_grid, self.min_errors,
                    self.max_trials, self.seed, self.tau, self.relay_reference, self.workers)

    def modulation(self):
        return modulation_constants(self.modulation_family, self.modulation_order)

    def to_dict(self):
        return {
            "networks": [n.to_dict() for n in self.networks],
            "schemes": [s.value for s in self.schemes],
            "outputs": [o.value for o in self.outputs],
            "snr_db": list(self.snr_db_grid),
            "modulation": {"family": self.modulation_family.value, "M": self.modulation_order},
            "min_errors": self.min_errors,
            "max_trials": self.max_trials,
            "seed": self.seed,
            "tau": self.tau,
            "relay_reference": self.relay_reference.value,
            "workers": self.workers,
            "mc_samples": self.mc_samples,
            "target_bers": list(self.target_bers),
            "out_path": str(self.out_path),
            "preset": self.preset,
        }


def _enum(cls, value, name):
    try:
        return cls(value)
    except ValueError as exc:
        choices = ", ".join(m.value for m in cls)
        raise ConfigError(f"{name}: {value!r} is not one of {choices}") from exc


def parse_snr_range(text):
    """``"start:step:stop"`` to an inclusive grid; a comma list is also accepted."""
    try:
        if ":" not in text:
            return tuple(float(x) for x in text.split(","))
        start, step, stop = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"snr_db: cannot parse {text!r}") from exc
    if step <= 0 or stop < start:
        raise ConfigError("snr_db: need step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


_PRESETS = {
    "fig2": {
        "networks": [{"num_relays": 2, "src_antennas": 2, "dst_antennas": 1}],
        "schemes": ["dstc", "opp-relay", "full-opp", "opp-source"],
        "outputs": ["simulated"],
        "snr_db": "0:2:30",
    },
    "fig3": {
        "networks": [
            {"num_relays": 2, "src_antennas": 2, "dst_antennas": 1},
            {"num_relays": 2, "src_antennas": 2, "dst_antennas": 2},
        ],
        "schemes": ["opp-relay", "full-opp"],
        "outputs": ["simulated", "exact"],
        "snr_db": "0:2:24",
    },
    "fig4": {
        "networks": [
            {"num_relays": 2, "src_antennas": 1, "dst_antennas": 1},
            {"num_relays": 2, "src_antennas": 1, "dst_antennas": 2},
            {"num_relays": 4, "src_antennas": 1, "dst_antennas": 1},
        ],
        "schemes": ["dstc", "opp-relay"],
        "outputs": ["simulated"],
        "snr_db": "0:2:24",
    },
}

_CONFIG_KEYS = {
    "network", "networks", "schemes", "scheme", "outputs", "snr_db", "modulation", "min_errors",
    "max_trials", "seed", "tau", "relay_reference", "workers", "mc_samples", "target_bers", "out_path",
}


def preset(name):
    """Raw configuration dictionary of a named preset."""
    if name not in _PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}")
    return json.loads(json.dumps(_PRESETS[name]))


def spec_from_dict(data, preset_name=None):
    """Build an :class:`ExperimentSpec` from a JSON-style dictionary."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown config field")
    nets = data.get("networks", data.get("network"))
    if nets is None:
        raise ConfigError("networks: missing")
    if isinstance(nets, dict):
        nets = [nets]
    try:
        networks = tuple(NetworkConfig.from_dict(n) for n in nets)
    except ConfigError as exc:
        raise ConfigError(f"networks: {exc}") from exc
    schemes = data.get("schemes", data.get("scheme", ["opp-relay"]))
    if isinstance(schemes, str):
        schemes = [schemes]
    outputs = data.get("outputs", ["simulated"])
    if isinstance(outputs, str):
        outputs = [outputs]
    grid = data.get("snr_db", "0:5:20")
    grid = parse_snr_range(grid) if isinstance(grid, str) else tuple(grid)
    mod = data.get("modulation", {})
    if not isinstance(mod, dict) or set(mod) - {"family", "M"}:
        raise ConfigError("modulation: expected an object with 'family' and 'M'")
    kwargs = {k: data[k] for k in ("min_errors", "max_trials", "seed", "tau", "relay_reference",
                                   "workers", "mc_samples", "target_bers", "out_path") if k in data}
    return ExperimentSpec(
        networks=networks,
        schemes=tuple(schemes),
        outputs=tuple(outputs),
        snr_db_grid=grid,
        modulation_family=mod.get("family", "MPSK"),
        modulation_order=mod.get("M", 2),
        preset=preset_name,
        **kwargs,
    )


# ---------------------------------------------------------------- CSV


def write_curve_csv(path, curve, scheme, config, modulation):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for s, v, c in curve.points:
            w.writerow((_fmt(s), _fmt(v), _fmt(c), curve.provenance.value, SchemeId(scheme).value,
                        config.num_relays, config.src_antennas, config.dst_antennas,
                        modulation.M, modulation.family.value))
    return path


def read_curve_csv(path):
    """Parse a CSV written by :func:`write_curve_csv`.

    Returns ``(curve, meta)`` where ``meta`` holds the scheme and shape columns.
    """
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ConfigError(f"{path}: unexpected CSV header")
    body = [dict(zip(CSV_COLUMNS, r)) for r in rows[1:]]
    if not body:
        raise ConfigError(f"{path}: no data rows")
    provs = {r["provenance"] for r in body}
    if len(provs) != 1:
        raise ConfigError(f"{path}: mixed provenance")
    pts = tuple((float(r["snr_db"]), float(r["value"]), float(r["ci_halfwidth"])) for r in body)
    first = body[0]
    meta = {"scheme": first["scheme"], "R": int(first["R"]), "Ns": int(first["Ns"]),
            "Nd": int(first["Nd"]), "M": int(first["M"]), "family": first["family"]}
    return SerCurve(pts, provs.pop(), meta), meta


# ---------------------------------------------------------------- reporting


def snr_at_target(curve, target):
    """SNR (dB) where ``curve`` first falls to ``target``, log-linear interpolation; None if never."""
    pts = curve.points
    for i, (s, v, _) in enumerate(pts):
        if v <= target:
            if i == 0:
                return None if v < target else s
            s0, v0, _ = pts[i - 1]
            if v <= 0 or v0 <= 0:
                return s
            frac = (math.log10(v0) - math.log10(target)) / (math.log10(v0) - math.log10(v))
            return s0 + frac * (s - s0)
    return None


def _shape_label(cfg):
    return f"R{cfg.num_relays}_Ns{cfg.src_antennas}_Nd{cfg.dst_antennas}"


def _diversity(curve):
    try:
        return estimate_diversity_order(curve)
    except ValueError:
        return None


def _comparisons(records, targets):
    out = []
    for a, b in itertools.combinations(records, 2):
        if a["output"] != b["output"]:
            continue
        for t in targets:
            sa, sb = snr_at_target(a["metric_curve"], t), snr_at_target(b["metric_curve"], t)
            out.append({
                "reference": a["label"],
                "candidate": b["label"],
                "metric": a["metric"],
                "target": t,
                "reference_snr_db": sa,
                "candidate_snr_db": sb,
                "gain_db": None if sa is None or sb is None else sa - sb,
            })
    return out


def run_experiment(spec, log=None):
    """Run every requested curve and write CSVs plus ``summary.json``.

    Returns the process exit status: 0 when every output was produced,
    3 when some output is unavailable for a scheme or shape.
    """
    log = log or (lambda msg: None)
    out = Path(spec.out_path)
    mod = spec.modulation()
    jobs = list(itertools.product(spec.networks, spec.schemes, spec.outputs))
    # Check capabilities before spending time on simulation.
    for net, scheme, output in jobs:
        build_codebook(net.src_antennas, net.num_relays, net.block_len)
        if output in _ANALYTIC:
            if not supports(output, scheme, net):
                raise CapabilityError(
                    f"output {output.value!r} is unavailable for scheme {scheme.value!r} "
                    f"at {_shape_label(net)}")
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for net, scheme, output in jobs:
        label = f"{scheme.value}_{_shape_label(net)}_{output.value}"
        log(f"running {label}")
        entry = {"label": label, "scheme": scheme.value, "network": net.to_dict(), "output": output.value}
        if output is Provenance.SIMULATED:
            plan = SimPlan(net, scheme, mod, spec.snr_db_grid, spec.min_errors, spec.max_trials,
                           spec.seed, spec.tau, spec.relay_reference, spec.workers)
            res = run_sim(plan)
            curve = res.curve
            ber_file = write_curve_csv(out / f"{label}_ber.csv", res.ber_curve, scheme, net, mod)
            entry.update(trials_used=list(res.trials_used), wall_time=res.wall_time,
                         symbol_errors=list(res.symbol_errors), bit_errors=list(res.bit_errors),
                         ber_file=ber_file.name, metric="ber", metric_curve=res.ber_curve)
        else:
            curve = analytic_curve(output, net, mod, scheme, spec.snr_db_grid, spec.tau,
                                   spec.mc_samples, spec.seed, spec.relay_reference)
            entry.update(metric="ser" if mod.M > 2 else "ber", metric_curve=curve)
        entry["file"] = write_curve_csv(out / f"{label}.csv", curve, scheme, net, mod).name
        entry["diversity_order"] = _diversity(curve)
        records.append(entry)
    comparisons = _comparisons(records, spec.target_bers)
    for rec in records:
        rec.pop("metric_curve")
    summary = {
        "tool": "afdstc",
        "version": __version__,
        "spec": spec.to_dict(),
        "modulation": mod.to_dict(),
        "curves": records,
        "comparisons": comparisons,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, allow_nan=False))
    return EXIT_OK


# ---------------------------------------------------------------- argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="afdstc", description="Error-rate sweeps for AF DSTC relay networks.")
    p.add_argument("--config", help="JSON experiment description")
    p.add_argument("--preset", choices=sorted(_PRESETS))
    p.add_argument("--scheme", action="append",
                   help="scheme id (repeatable or comma-separated): " + ", ".join(s.value for s in SchemeId))
    p.add_argument("--outputs", help="comma-separated: " + ", ".join(o.value for o in Provenance))
    p.add_argument("--snr-db", help="start:step:stop (inclusive) or a comma list")
    p.add_argument("--trials", type=int, help="maximum simulated blocks per SNR point")
    p.add_argument("--min-errors", type=int, help="symbol errors to collect per SNR point")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    return p


def resolve_spec(args):
    """Merge preset, config file and flags (in that order of precedence, lowest first)."""
    data = {}
    if args.preset:
        data.update(preset(args.preset))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be a JSON object")
        if "network" in loaded:
            data.pop("networks", None)
        if "scheme" in loaded:
            data.pop("schemes", None)
        data.update(loaded)
    if args.scheme:
        data.pop("scheme", None)
        data["schemes"] = [s.strip() for item in args.scheme for s in item.split(",") if s.strip()]
    if args.outputs:
        data["outputs"] = [o.strip() for o in args.outputs.split(",") if o.strip()]
    if args.snr_db:
        data["snr_db"] = args.snr_db
    for flag, key in (("trials", "max_trials"), ("min_errors", "min_errors"), ("seed", "seed"),
                      ("workers", "workers"), ("out", "out_path")):
        val = getattr(args, flag)
        if val is not None:
            data[key] = val
    if not data.get("networks") and not data.get("network"):
        raise ConfigError("networks: give --config or --preset")
    return spec_from_dict(data, args.preset)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = resolve_spec(args)
        status = run_experiment(spec, log=lambda m: print(m, file=sys.stderr))
    except CapabilityError as exc:
        print(f"afdstc: capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except ValueError as exc:
        print(f"afdstc: invalid experiment: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"wrote results to {spec.out_path}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
