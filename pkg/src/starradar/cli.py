"""Command-line front end.

Subcommands: ``beampattern``, ``calibrate``, ``detect``, ``sweep`` and
``report``. Configuration is a flat YAML mapping whose keys are the fields of
:class:`~starradar.experiment.ExperimentConfig` (plus ``out``); command-line
flags override file values. ``--config`` accepts a path or the name of a
bundled preset such as ``paper_fig3``.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .array import Direction, HalfSpace, ura_positions
from .errors import InvalidConfigurationError, StarRadarError
from .experiment import (
    Calibration,
    ExperimentConfig,
    calibrate_threshold,
    resolution_report,
    run_detect,
    run_sweep,
    trial_rng,
)
from .ris import Policy, beampattern_grid, make_codes, random_feeder_channel, stack_profile, synthesize_profiles

PRESET_DIR = Path(__file__).parent / "presets"
_BEAMPATTERN_STREAM = 4

_KINDS = {
    "float": "number",
    "int": "integer",
    "bool": "boolean",
    "str": "string",
    "Box": "box",
    "Optional[float]": "number?",
    "Optional[Box]": "box?",
    "tuple[int, ...]": "integer-list",
    "tuple[float, ...]": "number-list",
    "tuple[Policy, ...]": "policy-list",
}
SCHEMA = {f.name: _KINDS[f.type] for f in dataclasses.fields(ExperimentConfig)}
SCHEMA["out"] = "string?"


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    out: Optional[str] = None

    def to_dict(self) -> dict:
        d = self.experiment.to_dict()
        d["out"] = self.out
        return d


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check(key: str, kind: str, value):
    def fail(expect):
        raise InvalidConfigurationError(f"{key}: expected {expect}, got {value!r}")

    if kind.endswith("?"):
        if value is None:
            return None
        kind = kind[:-1]
    if kind == "number":
        if not _is_number(value):
            fail("a number")
        return float(value)
    if kind == "integer":
        if isinstance(value, bool) or not (isinstance(value, int) or (_is_number(value) and float(value).is_integer())):
            fail("an integer")
        return int(value)
    if kind == "boolean":
        if not isinstance(value, bool):
            fail("true or false")
        return value
    if kind == "string":
        if not isinstance(value, str):
            fail("a string")
        return value
    if kind == "box":
        if not (isinstance(value, (list, tuple)) and len(value) == 2 and all(_is_number(v) for v in value)):
            fail("[low, high]")
        return tuple(float(v) for v in value)
    items = value if isinstance(value, (list, tuple)) else [value]
    if kind == "integer-list":
        return tuple(_check(key, "integer", v) for v in items)
    if kind == "number-list":
        return tuple(_check(key, "number", v) for v in items)
    if kind == "policy-list":
        out = []
        for v in items:
            try:
                out.append(Policy(v))
            except ValueError:
                raise InvalidConfigurationError(
                    f"{key}: unknown scanning policy {v!r}; expected simultaneous or sequential"
                ) from None
        return tuple(out)
    raise AssertionError(kind)


def config_from_mapping(data: dict) -> RunConfig:
    """Validate a raw mapping; unknown keys are rejected."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise InvalidConfigurationError("configuration must be a mapping of key: value pairs")
    unknown = sorted(set(data) - set(SCHEMA))
    if unknown:
        raise InvalidConfigurationError(f"{unknown[0]}: unknown configuration key")
    values = {k: _check(k, SCHEMA[k], v) for k, v in data.items()}
    out = values.pop("out", None)
    return RunConfig(ExperimentConfig(**values), out)


def resolve_config_path(name: str) -> Path:
    path = Path(name)
    if path.is_file():
        return path
    preset = PRESET_DIR / f"{name}.yaml"
    if preset.is_file():
        return preset
    raise InvalidConfigurationError(f"config: no such file or preset {name!r}")


def parse_config(path) -> RunConfig:
    """Load and fully validate a YAML configuration file (or preset name)."""
    path = resolve_config_path(str(path))
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise InvalidConfigurationError(f"config: {path} is not valid YAML ({exc})") from None
    return config_from_mapping(data)


def serialize_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)


def _atomic_write(path: str, text: str) -> None:
    """Write via a temporary file so a failure never leaves partial output."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _manifest_line(cfg: ExperimentConfig) -> str:
    return f"# config_hash={cfg.digest()} seed={cfg.seed}\n"


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.policy is not None:
        changes["policy"] = _check("policy", "policy-list", args.policy.split(","))
    if args.pulses is not None:
        try:
            changes["pulses"] = tuple(int(p) for p in args.pulses.split(","))
        except ValueError:
            raise InvalidConfigurationError(f"pulses: expected comma-separated integers, got {args.pulses!r}") from None
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.threads is not None:
        changes["threads"] = args.threads
    if getattr(args, "h0_trials", None) is not None:
        changes["h0_trials"] = args.h0_trials
    if getattr(args, "eta", None) is not None:
        changes["eta"] = args.eta
    exp = run.experiment.replace(**changes) if changes else run.experiment
    return RunConfig(exp, args.out if args.out is not None else run.out)


def _load_thresholds(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    out = {}
    for row in data["thresholds"]:
        key = (Policy(row["policy"]), int(row["P"]))
        out[key] = Calibration(
            key[0], key[1], float(row["eta"]), float(row["target_far"]),
            float(row["achieved_far"]), int(row["h0_trials"]), np.empty((0, 3)),
        )
    return out


# ------------------------------------------------------------------ commands


def cmd_beampattern(run: RunConfig, args) -> int:
    cfg = run.experiment
    lam = cfg.wavelength
    ris = ura_positions(cfg.ris_n_y, cfg.ris_n_z, cfg.ris_spacing_y_m or lam / 2, cfg.ris_spacing_z_m or lam / 2)
    g = random_feeder_channel(ris.size, trial_rng(cfg.seed, _BEAMPATTERN_STREAM))
    beam = Direction.from_degrees(cfg.beam_az_deg, cfg.beam_el_deg)
    xbar_t, xbar_r = synthesize_profiles(g, beam.mirrored(), beam, ris, lam)
    profile = stack_profile(xbar_t, xbar_r, make_codes(cfg.policy[0], cfg.pulses[0]))
    step = cfg.beampattern_step_deg
    n = int(math.floor(90.0 / step - 1e-9))
    axis = np.radians(np.arange(-n, n + 1) * step)
    values = beampattern_grid(profile, HalfSpace.REFLECTIVE, axis, axis, g, ris, lam)
    lines = [_manifest_line(cfg), "az_deg,el_deg,normalized_gf\n"]
    for i, az in enumerate(axis):
        for j, el in enumerate(axis):
            lines.append(f"{math.degrees(az):.6f},{math.degrees(el):.6f},{values[i, j]:.12e}\n")
    _emit("".join(lines), run.out)
    i, j = np.unravel_index(np.argmax(values), values.shape)
    print(
        f"peak at az={math.degrees(axis[i]):.3f} deg, el={math.degrees(axis[j]):.3f} deg",
        file=sys.stderr if not run.out else sys.stdout,
    )
    return 0


def _calibrations(cfg: ExperimentConfig, cached: dict) -> dict:
    out = dict(cached)
    for policy in cfg.policy:
        for p in cfg.pulses:
            if (policy, p) not in out:
                out[(policy, p)] = calibrate_threshold(cfg, policy, p)
    return out


def cmd_calibrate(run: RunConfig, args) -> int:
    cfg = run.experiment
    cals = _calibrations(cfg, {})
    payload = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "thresholds": [
            {
                "policy": c.policy.value, "P": c.n_pulses, "eta": c.eta,
                "target_far": c.target_far, "achieved_far": c.achieved_far, "h0_trials": c.trials,
            }
            for c in cals.values()
        ],
    }
    for row in payload["thresholds"]:
        print(
            f"{row['policy']} P={row['P']}: eta={row['eta']:.6f} "
            f"far={row['achieved_far']:.5g} (target {row['target_far']:g}, {row['h0_trials']} H0 trials)"
        )
    if run.out:
        _atomic_write(run.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.dump:
        lines = [_manifest_line(cfg), "policy,P,trial,max_t,max_r,max_joint\n"]
        for c in cals.values():
            for k, (a, b, j) in enumerate(c.maxima):
                lines.append(f"{c.policy.value},{c.n_pulses},{k},{a!r},{b!r},{j!r}\n")
        _atomic_write(args.dump, "".join(lines))
    return 0


def cmd_detect(run: RunConfig, args) -> int:
    cfg = run.experiment
    policy, p = cfg.policy[0], cfg.pulses[0]
    if cfg.eta is not None:
        eta = cfg.eta
    else:
        cached = _load_thresholds(args.thresholds)
        eta = _calibrations(cfg.replace(policy=(policy,), pulses=(p,)), cached)[(policy, p)].eta
    rec, dec, ts = run_detect(cfg, policy, p, eta)
    report = {
        "policy": policy.value,
        "P": p,
        "eta": eta,
        "scenario": rec.scenario.label,
        "snr_db": cfg.detect_snr_db,
        "cell_t_deg": list(ts.dir_t.in_degrees()),
        "cell_r_deg": list(ts.dir_r.in_degrees()),
        "true_doppler_t_hz": rec.true_doppler_t,
        "true_doppler_r_hz": rec.true_doppler_r,
        "decision": dec.summary(),
    }
    _emit(json.dumps(report, indent=2) + "\n", run.out)
    if run.out:
        print(f"decision: {dec.hypothesis.label}")
    return 0


def cmd_sweep(run: RunConfig, args) -> int:
    cfg = run.experiment
    result = run_sweep(cfg, calibrations=_load_thresholds(args.thresholds))
    _emit(result.to_csv(), run.out)
    if run.out:
        manifest = result.manifest()
        _atomic_write(str(run.out) + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_report(run: RunConfig, args) -> int:
    rows = resolution_report(run.experiment)
    lines = [_manifest_line(run.experiment)]
    keys = list(rows[0])
    lines.append(",".join(keys) + "\n")
    for r in rows:
        lines.append(",".join(f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys) + "\n")
    _emit("".join(lines), run.out)
    return 0


COMMANDS = {
    "beampattern": cmd_beampattern,
    "calibrate": cmd_calibrate,
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file or preset name (e.g. paper_fig3)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file (stdout if omitted)")
    common.add_argument("--policy", help="simultaneous, sequential or a comma-separated list")
    common.add_argument("--pulses", help="P, or a comma-separated list")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per SNR point")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--h0-trials", type=int, dest="h0_trials", help="H0 trials for calibration")
    common.add_argument("--eta", type=float, help="fixed GIC penalty (skips calibration)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="starradar", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("beampattern", parents=[common], help="normalized gain-factor grid CSV")
    cal = sub.add_parser("calibrate", parents=[common], help="penalty eta for the target false-alarm rate")
    cal.add_argument("--dump", help="CSV of per-trial H0 statistic maxima")
    det = sub.add_parser("detect", parents=[common], help="one synthesized trial with the full decision")
    det.add_argument("--thresholds", help="JSON written by 'calibrate --out'")
    sw = sub.add_parser("sweep", parents=[common], help="PD and velocity RMSE versus SNR CSV")
    sw.add_argument("--thresholds", help="JSON written by 'calibrate --out'")
    sub.add_parser("report", parents=[common], help="Doppler and velocity resolution table")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        run = parse_config(args.config) if args.config else RunConfig(ExperimentConfig())
        run = _apply_overrides(run, args)
        return COMMANDS[args.command](run, args)
    except (StarRadarError, OSError, KeyError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"starradar: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
