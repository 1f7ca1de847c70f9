"""Batch command-line front-end.

Every subcommand resolves its parameters as defaults < YAML config < flags,
writes its data files into the output directory and finishes with a
``manifest.yaml`` that can be fed back through ``--config`` to rerun it.

Output files per subcommand::

    phase-diagram  phase_diagram.csv  gamma_z, t_so, winding, gap, status
    edge-modes     edge_modes.csv     n_sites, splitting, localization_length, status
                   edge_modes.json    log-linear fit of the splitting
    domain         domain.csv         site, prob_left, prob_right
                   domain.json        energies, centres, localization lengths
    memory-verify  memory_verify.json
    transfer       transfer.csv       t, pi_g_t, F2
                   transfer.json      peak, time of peak, convention(s)
    mismatch       mismatch.csv       fraction, peak_f2
    large-r        large_r.csv        k_order, r, peak, peak_without_mechanical_decay, gap
    budget         budget.json, budget_audit.txt
    hopping        hopping.csv        v0, t_s, t_so

``gap`` in the phase diagram is the band minimum min_k |d(k)| on a dense grid.
The exit code is 1 when a requested verification fails and 2 on bad input.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import platform
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy
import yaml

from . import __version__
from .budget import BudgetInputs, build_report
from .errors import GapClosed, NotTopological, TopomemError
from .lattice import (
    DomainField,
    LatticeParams,
    WannierInputs,
    bulk_gap_numeric,
    hopping_integrals,
    midgap_states,
    site_probabilities,
    winding_number,
    zero_modes,
)
from .memory import AncillaParams, QndParams, verification_report
from .transfer import (
    DecayRates,
    TransferScenario,
    large_r_study,
    lindblad_transfer,
    mismatch_sweep,
    resonance_coupling,
)

OUT_ENV = "TOPOMEM_OUT"
DEFAULT_OUT = "topomem_out"

_TRANSFER_DEFAULTS = {
    "g": 6 * math.pi,
    "kappa_a": 1.0,
    "kappa_b": 1.0,
    "kappa_d": 0.1,
    "gamma_a": 0.1,
    "gamma_s": 0.1,
    "k_order": 1,
    "alpha": [1 / math.sqrt(2), 0.0],
    "beta": [1 / math.sqrt(2), 0.0],
    "t_final": None,
    "n_samples": 600,
    "dt": None,
    "check_convergence": True,
    "compare_conventions": False,
    "workers": 1,
}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "frequency_convention": "angular",
    "phase_diagram": {
        "t_s": 1.0,
        "gamma_z_min": -4.0,
        "gamma_z_max": 4.0,
        "n_gamma_z": 41,
        "t_so_min": 0.1,
        "t_so_max": 2.1,
        "n_t_so": 41,
        "n_k": 1024,
    },
    "edge_modes": {"t_s": 1.0, "t_so": 0.5, "gamma_z": 0.0, "sizes": [8, 12, 16, 20, 24]},
    "domain": {
        "t_s": 1.0,
        "t_so": 0.5,
        "gamma_z": 0.0,
        "n_sites": 60,
        "gamma_0": 2.0,
        "axis": "y",
        "x1": 20,
        "x2": 40,
    },
    "memory_verify": {
        "n_max": 4,
        "n_qnd_max": 6,
        "trials": 100,
        "g": 1.0,
        "delta": 10.0,
        "g_prime": 1.0,
        "omega_a": 10.0,
        "delta_prime": 100.0,
        "phase_offset": 0.0,
    },
    "transfer": _TRANSFER_DEFAULTS,
    "mismatch": {"fractions": [-0.1, -0.05, 0.0, 0.05, 0.1]},
    "large_r": {"k_orders": [1, 2, 5, 14]},
    "budget": {
        "n_atoms": 5,
        "g": 220.0,
        "gamma": 10.0,
        "kappa": 1.0,
        "delta": 2200.0,
        "omega_a": None,
        "delta_prime": None,
        "epsilon_addr": 0.01,
        "p_interface": 0.01,
        "addressed_sites": 2,
        "loss_figure": "quoted",
        "quoted_loss": 0.03,
        "f_cs": 0.95,
        "f2": 0.95,
    },
    "hopping": {"v0": [5.0, 10.0, 20.0, 50.0], "omega_rabi": 0.0, "delta_one_photon": 1.0},
}

# sections each subcommand reads, in manifest order
SECTIONS = {
    "phase-diagram": ["phase_diagram"],
    "edge-modes": ["edge_modes"],
    "domain": ["domain"],
    "memory-verify": ["memory_verify"],
    "transfer": ["transfer"],
    "mismatch": ["transfer", "mismatch"],
    "large-r": ["transfer", "large_r"],
    "budget": ["budget"],
    "hopping": ["hopping"],
}

# fields that may be null, mapped to the type they take otherwise
NULLABLE = {
    ("budget", "delta"): 0.0,
    ("budget", "omega_a"): 0.0,
    ("budget", "delta_prime"): 0.0,
    ("budget", "f_cs"): 0.0,
    ("transfer", "t_final"): 0.0,
    ("transfer", "dt"): 0.0,
}


class ConfigError(TopomemError):
    """Malformed or inconsistent configuration."""


# -- config loading ----------------------------------------------------------


def _key_lines(node, prefix=()) -> dict[tuple[str, ...], int]:
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = prefix + (str(key.value),)
            lines[path] = key.start_mark.line + 1
            lines.update(_key_lines(value, path))
    return lines


def _where(source: str, lines: dict, path: tuple[str, ...]) -> str:
    line = lines.get(path)
    return f"{source}:{line}" if line else source


def _coerce(value, default, where: str, field: str):
    bad = ConfigError(f"{where}: field '{field}' expects {type(default).__name__}, got {value!r}")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise bad
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise bad
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{where}: field '{field}' expects a non-empty list, got {value!r}")
        proto = default[0]
        return [_coerce(v, proto, where, f"{field}[{i}]") for i, v in enumerate(value)]
    raise bad


def _merge(base: dict, data: dict, source: str, lines: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in data.items():
        path = (str(key),)
        where = _where(source, lines, path)
        if key == "run":
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"{where}: unknown field '{key}'")
        default = DEFAULTS[key]
        if isinstance(default, dict):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: section '{key}' must be a mapping")
            for sub, sub_value in value.items():
                sub_where = _where(source, lines, path + (str(sub),))
                if sub not in default:
                    raise ConfigError(f"{sub_where}: unknown field '{key}.{sub}'")
                if (key, sub) in NULLABLE:
                    if sub_value is None:
                        out[key][sub] = None
                        continue
                    field_default = NULLABLE[(key, sub)]
                else:
                    field_default = default[sub]
                out[key][sub] = _coerce(sub_value, field_default, sub_where, f"{key}.{sub}")
        else:
            out[key] = _coerce(value, default, where, key)
    if out["frequency_convention"] not in ("linear", "angular"):
        raise ConfigError(f"{source}: frequency_convention must be 'linear' or 'angular'")
    if not 0 <= out["seed"] < 2**64:
        raise ConfigError(f"{source}: seed must fit in an unsigned 64-bit integer")
    return out


def load_config(path: str | os.PathLike | None) -> dict:
    """Defaults overlaid with the YAML document at ``path`` (if any)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    source = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{source}: cannot read config ({exc.strerror})") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{loc}: YAML syntax error: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return _merge(DEFAULTS, data, source, _key_lines(node))


def apply_flags(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must fit in an unsigned 64-bit integer")
        cfg["seed"] = args.seed
    if args.linear_frequency:
        cfg["frequency_convention"] = "linear"
    if args.dt is not None:
        cfg["transfer"]["dt"] = float(args.dt)
    if args.samples is not None:
        cfg["transfer"]["n_samples"] = int(args.samples)
    return cfg


# -- output helpers ----------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def versions() -> dict:
    return {"topomem": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out: Path, command: str, cfg: dict, outputs: list[str]) -> None:
    doc = {"seed": cfg["seed"], "frequency_convention": cfg["frequency_convention"]}
    for section in SECTIONS[command]:
        doc[section] = cfg[section]
    doc["run"] = {"subcommand": command, "outputs": sorted(outputs), "versions": versions()}
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
    (out / "manifest.yaml").write_text(text, encoding="utf-8")


# -- subcommands -------------------------------------------------------------


def _rates_scale(cfg: dict) -> float:
    return 2 * math.pi if cfg["frequency_convention"] == "linear" else 1.0


def _scenario(tc: dict) -> TransferScenario:
    alpha = complex(*tc["alpha"]) if len(tc["alpha"]) == 2 else None
    beta = complex(*tc["beta"]) if len(tc["beta"]) == 2 else None
    if alpha is None or beta is None:
        raise ConfigError("transfer.alpha and transfer.beta are [re, im] pairs")
    return TransferScenario(alpha, beta, tc["t_final"], tc["n_samples"])


def _transfer_inputs(tc: dict, g_scale: float, rate_scale: float):
    d = DecayRates(*(rate_scale * tc[k] for k in ("kappa_a", "kappa_b", "kappa_d", "gamma_a", "gamma_s")))
    return g_scale * tc["g"], d


def _transfer_kwargs(tc: dict) -> dict:
    return {"dt": tc["dt"], "check_convergence": tc["check_convergence"]}


def run_phase_diagram(cfg: dict, out: Path) -> tuple[int, list[str]]:
    pc = cfg["phase_diagram"]
    if pc["n_gamma_z"] < 1 or pc["n_t_so"] < 1:
        raise ConfigError("phase_diagram grid needs at least one point per axis")
    rows = []
    for gz in np.linspace(pc["gamma_z_min"], pc["gamma_z_max"], pc["n_gamma_z"]):
        for tso in np.linspace(pc["t_so_min"], pc["t_so_max"], pc["n_t_so"]):
            params = LatticeParams(pc["t_s"], float(tso), float(gz), 2)
            gap = bulk_gap_numeric(params)
            try:
                rows.append([gz, tso, winding_number(params, pc["n_k"]), gap, "ok"])
            except GapClosed:
                rows.append([gz, tso, None, gap, "gap_closed"])
    write_csv(out / "phase_diagram.csv", ["gamma_z", "t_so", "winding", "gap", "status"], rows)
    return 0, ["phase_diagram.csv"]


def _log_fit(n: np.ndarray, s: np.ndarray) -> dict:
    if len(n) < 2:
        return {"slope": None, "intercept": None, "r_squared": None, "monotone_decreasing": True}
    y = np.log(s)
    slope, intercept = np.polyfit(n, y, 1)
    resid = y - (slope * n + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": slope, "intercept": intercept, "r_squared": r2,
            "monotone_decreasing": bool(np.all(np.diff(s) < 0))}


def run_edge_modes(cfg: dict, out: Path) -> tuple[int, list[str]]:
    ec = cfg["edge_modes"]
    rows, ns, splits = [], [], []
    for n in ec["sizes"]:
        try:
            pair = zero_modes(LatticeParams(ec["t_s"], ec["t_so"], ec["gamma_z"], n))
        except NotTopological:
            rows.append([n, None, None, "NotTopological"])
            continue
        rows.append([n, pair.splitting, float(np.mean(pair.localization_lengths)), "ok"])
        ns.append(n)
        splits.append(pair.splitting)
    write_csv(out / "edge_modes.csv", ["n_sites", "splitting", "localization_length", "status"], rows)
    write_json(out / "edge_modes.json", _log_fit(np.array(ns, float), np.array(splits, float)))
    return 0, ["edge_modes.csv", "edge_modes.json"]


def run_domain(cfg: dict, out: Path) -> tuple[int, list[str]]:
    dc = cfg["domain"]
    params = LatticeParams(dc["t_s"], dc["t_so"], dc["gamma_z"], dc["n_sites"])
    domain = DomainField(dc["gamma_0"], dc["axis"], (dc["x1"], dc["x2"]))
    pair = midgap_states(params, domain)
    probs = [site_probabilities(s) for s in pair.states]
    rows = [[j, probs[0][j], probs[1][j]] for j in range(params.n_sites)]
    write_csv(out / "domain.csv", ["site", "prob_left", "prob_right"], rows)
    write_json(out / "domain.json", {
        "energies": list(pair.energies),
        "splitting": pair.splitting,
        "centers": list(pair.centers),
        "localization_lengths": list(pair.localization_lengths),
    })
    return 0, ["domain.csv", "domain.json"]


def run_memory_verify(cfg: dict, out: Path) -> tuple[int, list[str]]:
    mc = cfg["memory_verify"]
    if mc["n_max"] > 6 or mc["n_qnd_max"] > 6:
        raise ConfigError("memory_verify brute-force checks are limited to N <= 6")
    report = verification_report(
        n_max=mc["n_max"],
        n_qnd_max=mc["n_qnd_max"],
        trials=mc["trials"],
        seed=cfg["seed"],
        qnd=QndParams(mc["g"], mc["delta"]),
        anc=AncillaParams(mc["g_prime"], mc["omega_a"], mc["delta_prime"]),
        phase_offset=mc["phase_offset"],
    )
    write_json(out / "memory_verify.json", report)
    return (0 if report["all_passed"] else 1), ["memory_verify.json"]


def _curve_summary(curve, convention: str) -> dict:
    return {"convention": convention, "peak": curve.peak, "t_peak": curve.t_peak,
            "g_t_peak": curve.g * curve.t_peak, "dt": curve.dt, "halving_error": curve.halving_error,
            "max_trace_error": curve.max_trace_error, "max_hermiticity_error": curve.max_hermiticity_error}


def run_transfer(cfg: dict, out: Path) -> tuple[int, list[str]]:
    tc = cfg["transfer"]
    scale = _rates_scale(cfg)
    g, d = _transfer_inputs(tc, scale, scale)
    s = _scenario(tc)
    curve = lindblad_transfer(resonance_coupling(tc["k_order"], g), d, s, **_transfer_kwargs(tc))
    rows = [[t, pgt, f] for t, pgt, f in zip(curve.times, curve.pi_g_t, curve.f2)]
    write_csv(out / "transfer.csv", ["t", "pi_g_t", "F2"], rows)
    summary = {"k_order": tc["k_order"], **_curve_summary(curve, cfg["frequency_convention"])}
    if tc["compare_conventions"]:
        variants = {"angular": (1.0, 1.0), "linear": (2 * math.pi, 2 * math.pi), "mixed": (1.0, 2 * math.pi)}
        summary["conventions"] = {}
        for name, (gs, rs) in variants.items():
            gv, dv = _transfer_inputs(tc, gs, rs)
            c = lindblad_transfer(resonance_coupling(tc["k_order"], gv), dv, s, **_transfer_kwargs(tc))
            summary["conventions"][name] = _curve_summary(c, name)
    write_json(out / "transfer.json", summary)
    return 0, ["transfer.csv", "transfer.json"]


def run_mismatch(cfg: dict, out: Path) -> tuple[int, list[str]]:
    tc = cfg["transfer"]
    scale = _rates_scale(cfg)
    g, d = _transfer_inputs(tc, scale, scale)
    rows = mismatch_sweep(resonance_coupling(tc["k_order"], g), d, _scenario(tc), cfg["mismatch"]["fractions"],
                          workers=tc["workers"], **_transfer_kwargs(tc))
    write_csv(out / "mismatch.csv", ["fraction", "peak_f2"], [list(r) for r in rows])
    return 0, ["mismatch.csv"]


def run_large_r(cfg: dict, out: Path) -> tuple[int, list[str]]:
    tc = cfg["transfer"]
    scale = _rates_scale(cfg)
    g, d = _transfer_inputs(tc, scale, scale)
    rows = large_r_study(g, cfg["large_r"]["k_orders"], d, _scenario(tc), workers=tc["workers"],
                         **_transfer_kwargs(tc))
    write_csv(out / "large_r.csv", ["k_order", "r", "peak", "peak_without_mechanical_decay", "gap"],
              [[r.k_order, r.r, r.peak, r.peak_without_mechanical_decay, r.gap] for r in rows])
    return 0, ["large_r.csv"]


def run_budget(cfg: dict, out: Path) -> tuple[int, list[str]]:
    try:
        report = build_report(BudgetInputs(**cfg["budget"]))
    except ValueError as exc:
        raise ConfigError(f"budget: {exc}") from exc
    write_json(out / "budget.json", report.as_dict())
    (out / "budget_audit.txt").write_text("\n".join(report.audit + report.notes) + "\n", encoding="utf-8")
    return 0, ["budget.json", "budget_audit.txt"]


def run_hopping(cfg: dict, out: Path) -> tuple[int, list[str]]:
    hc = cfg["hopping"]
    rows = []
    for v0 in hc["v0"]:
        inputs = WannierInputs.in_recoil_units(v0, hc["omega_rabi"], hc["delta_one_photon"])
        rows.append([v0, *hopping_integrals(inputs)])
    write_csv(out / "hopping.csv", ["v0", "t_s", "t_so"], rows)
    return 0, ["hopping.csv"]


COMMANDS: dict[str, Callable[[dict, Path], tuple[int, list[str]]]] = {
    "phase-diagram": run_phase_diagram,
    "edge-modes": run_edge_modes,
    "domain": run_domain,
    "memory-verify": run_memory_verify,
    "transfer": run_transfer,
    "mismatch": run_mismatch,
    "large-r": run_large_r,
    "budget": run_budget,
    "hopping": run_hopping,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topomem", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config (a previous manifest.yaml works)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--seed", type=int, help="seed for randomized trials (unsigned 64-bit)")
    common.add_argument("--linear-frequency", action="store_true",
                        help="read frequencies as linear (multiply by 2 pi)")
    common.add_argument("--dt", type=float, help="upper bound on the integrator step")
    common.add_argument("--samples", type=int, help="number of samples along each transfer curve")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} study")
    return parser


def resolve_out(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_flags(load_config(args.config), args)
        out = resolve_out(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code, outputs = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"topomem: config error: {exc}", file=sys.stderr)
        return 2
    except (TopomemError, ValueError) as exc:
        print(f"topomem: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    write_manifest(out, args.command, cfg, outputs)
    print(f"{args.command}: wrote {', '.join(outputs)} to {out}" + ("" if code == 0 else " (verification FAILED)"))
    return code


if __name__ == "__main__":
    sys.exit(main())
