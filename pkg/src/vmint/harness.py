"""Run configuration, result persistence and the determinism contract.

A run is a sectioned key=value text file: one [run] section plus one
section per experiment, the section header being the experiment id.  The
harness executes experiments sequentially, fans replicates over the worker
pool inside each one, and writes one CSV table per experiment plus a
verdicts.jsonl stream for the run.

Output bytes in the CSVs are a pure function of (config, master seed):
worker count, scheduling and wall time can never leak into them.  The
JSONL records additionally carry timing and are exempt from byte
stability, but everything else in them is stable too.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from vmint import __version__
from vmint.experiments import (
    REGISTRY,
    ExperimentSpec,
    ReplicateError,
    run_experiment,
)
from vmint.kernels import parse_kernel_spec
from vmint.voter import HYBRID_CAP_DEFAULT
from vmint.walks import EXACT_CEILING

CUTOFF_CEILING_DEFAULT = 1_000_000

_GRID_KEYS_BY_NAME = {
    "vk": ("k", "t"),
    "akr": ("k", "r"),
    "overshoot": ("k", "r"),
    "uk_far": ("k", "m", "t"),
    "excursion": ("k", "t"),
    "greenfn": ("k", "r", "x", "l"),
    "tightness_sweep": ("t", "M"),
    "theorem2_schedule": ("C", "k"),
}

_PASS_VERDICTS = {
    "nonincreasing", "band-held", "ratio-bounded", "floors-held",
    "identity-held", "identity-held (mc-only)", "bounded", "floor-held",
}

_FAIL_VERDICTS = {
    "increase-detected", "band-broken", "ratio-unbounded", "floor-violated",
    "identity-broken", "non-monotone", "growing",
}


def verdict_passes(verdict: str) -> bool:
    """Exit-code classification of a verdict string.

    "reported:" verdicts carry a trend the experiment does not assert, so
    they pass; "inconclusive:" verdicts fail (the run must be loud about
    censoring); "growing" fails because the sweep asserts boundedness.
    """
    if verdict in _PASS_VERDICTS:
        return True
    if verdict.startswith("reported:"):
        return True
    return False


class ConfigError(ValueError):
    """Config rejection with the offending line and field spelled out."""

    def __init__(self, message: str, line: int | None = None,
                 field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(
            f"{message}" + (f" ({', '.join(where)})" if where else ""))
        self.line = line
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    experiments: tuple
    master_seed: int
    workers: int
    output_dir: Path
    caps: dict

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", field="workers")
        names = [spec.name for spec in self.experiments]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ConfigError(
                f"experiment names must be unique, saw {sorted(dupes)} twice")

    @property
    def config_hash(self) -> str:
        return config_hash(self)


@dataclass
class ResultRecord:
    """One verdict line: the experiment's summary plus run provenance.

    point/ci are filled when the experiment produced a single estimate;
    multi-row experiments keep their numbers in the CSV and leave these
    None.  Timing fields are informational and excluded from determinism.
    """

    experiment: str
    params: dict
    point: float | None
    ci_low: float | None
    ci_high: float | None
    reps: int
    censored: int
    verdict: str
    seed: int
    duration_seconds: float
    version: str
    config_hash: str
    timestamp: str
    rows: list = field(default_factory=list, repr=False)

    def jsonl(self) -> str:
        payload = {k: v for k, v in self.__dict__.items() if k != "rows"}
        return json.dumps(payload, sort_keys=True)


# ---------------------------------------------------------------------------
# config parsing

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_]+)\]$")
_INT_RE = re.compile(r"^[+-]?\d+$")

_RUN_KEYS = {"master_seed", "workers", "output_dir", "hybrid_cap",
             "exact_solve_ceiling", "kernel_cutoff_ceiling"}
_EXP_FIXED_KEYS = {"kernel", "reps", "seed"}


def _atom(text: str, line: int, key: str):
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}",
                          line=line, field=key) from None


def _value(text: str, line: int, key: str):
    parts = [p.strip() for p in text.split(",")]
    if any(not p for p in parts):
        raise ConfigError("empty list element", line=line, field=key)
    vals = [_atom(p, line, key) for p in parts]
    return vals[0] if len(vals) == 1 else vals


def _sections(path: Path):
    """Yield (header, header_line, {key: (raw_value, line)}) per section."""
    header = None
    header_line = 0
    body: dict = {}
    out = []
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        m = _SECTION_RE.match(text)
        if m:
            if header is not None:
                out.append((header, header_line, body))
            header, header_line, body = m.group(1), ln, {}
            continue
        if "=" not in text:
            raise ConfigError(f"expected key = value, got {text!r}", line=ln)
        key, _, val = text.partition("=")
        key, val = key.strip(), val.strip()
        if header is None:
            raise ConfigError(f"key {key!r} appears before any section",
                              line=ln, field=key)
        if key in body:
            raise ConfigError(f"duplicate key {key!r} in [{header}]",
                              line=ln, field=key)
        body[key] = (val, ln)
    if header is not None:
        out.append((header, header_line, body))
    return out


def parse_config(path) -> RunConfig:
    """Parse and validate a run config; any unknown key is an error."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    sections = _sections(path)
    if not sections or sections[0][0] != "run":
        raise ConfigError("config must start with a [run] section")
    seen = set()
    for name, line, _ in sections:
        if name in seen:
            raise ConfigError(f"duplicate section [{name}]", line=line)
        seen.add(name)

    _, _, run_body = sections[0]
    for key, (_, ln) in run_body.items():
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [run]",
                              line=ln, field=key)
    if "master_seed" not in run_body:
        raise ConfigError("[run] needs master_seed")

    def run_int(key, default):
        if key not in run_body:
            return default
        raw, ln = run_body[key]
        v = _atom(raw, ln, key)
        if not isinstance(v, int):
            raise ConfigError(f"{key} must be an integer", line=ln, field=key)
        return v

    master_seed = run_int("master_seed", None)
    workers = run_int("workers", 1)
    output_dir = Path(run_body["output_dir"][0]) if "output_dir" in run_body \
        else Path("results")
    caps = {
        "hybrid_cap": run_int("hybrid_cap", HYBRID_CAP_DEFAULT),
        "exact_solve_ceiling": run_int("exact_solve_ceiling", EXACT_CEILING),
        "kernel_cutoff_ceiling": run_int("kernel_cutoff_ceiling",
                                         CUTOFF_CEILING_DEFAULT),
    }

    specs = []
    for name, line, body in sections[1:]:
        if name not in REGISTRY:
            raise ConfigError(
                f"unknown experiment [{name}]; known: {sorted(REGISTRY)}",
                line=line)
        grid_keys = _GRID_KEYS_BY_NAME[name]
        grid, tolerances = {}, {}
        kernel_raw = reps = seed = None
        for key, (raw, ln) in body.items():
            if key == "kernel":
                try:
                    kernel_raw = parse_kernel_spec(raw)
                except ValueError as exc:
                    raise ConfigError(str(exc), line=ln, field=key) from None
            elif key == "reps":
                reps = _atom(raw, ln, key)
                if not isinstance(reps, int):
                    raise ConfigError("reps must be an integer",
                                      line=ln, field=key)
            elif key == "seed":
                seed = _atom(raw, ln, key)
                if not isinstance(seed, int):
                    raise ConfigError("seed must be an integer",
                                      line=ln, field=key)
            elif key in grid_keys:
                grid[key] = _value(raw, ln, key)
            elif key.startswith("tol."):
                tolerances[key[4:]] = _atom(raw, ln, key)
            else:
                raise ConfigError(
                    f"unknown key {key!r} in [{name}] "
                    f"(grid keys here: {', '.join(grid_keys)})",
                    line=ln, field=key)
        if kernel_raw is None:
            raise ConfigError(f"[{name}] needs kernel", line=line)
        if reps is None:
            raise ConfigError(f"[{name}] needs reps", line=line)
        missing = [k for k in grid_keys if k not in grid]
        if missing:
            raise ConfigError(
                f"[{name}] is missing grid keys {missing}", line=line)
        if name in ("tightness_sweep", "theorem2_schedule"):
            tolerances.setdefault("hybrid_cap", caps["hybrid_cap"])
        if name == "greenfn":
            tolerances.setdefault("exact_solve_ceiling",
                                  caps["exact_solve_ceiling"])
        _check_cutoff(kernel_raw, caps["kernel_cutoff_ceiling"], name, line)
        try:
            specs.append(ExperimentSpec(
                name=name, kernel_spec=kernel_raw, grid=grid, reps=reps,
                seed=master_seed if seed is None else seed,
                tolerances=tolerances))
        except ValueError as exc:
            raise ConfigError(str(exc), line=line) from None

    return RunConfig(experiments=tuple(specs), master_seed=master_seed,
                     workers=workers, output_dir=output_dir, caps=caps)


def _check_cutoff(kernel_spec, ceiling: int, name: str, line: int) -> None:
    for p in kernel_spec.params:
        if isinstance(p, int) and p > ceiling:
            raise ConfigError(
                f"[{name}] kernel cutoff {p} exceeds the ceiling {ceiling}",
                line=line, field="kernel")


def apply_overrides(config: RunConfig, seed: int | None = None,
                    workers: int | None = None,
                    out: str | None = None) -> RunConfig:
    """Rebuild a config with CLI overrides.

    A new master seed also reseeds every experiment that was following the
    old master seed; experiments with their own explicit seed keep it.
    """
    import dataclasses

    experiments = config.experiments
    master_seed = config.master_seed
    if seed is not None:
        experiments = tuple(
            dataclasses.replace(s, seed=seed)
            if s.seed == config.master_seed else s
            for s in experiments)
        master_seed = seed
    return RunConfig(
        experiments=experiments,
        master_seed=master_seed,
        workers=config.workers if workers is None else workers,
        output_dir=config.output_dir if out is None else Path(out),
        caps=config.caps)


def config_hash(config: RunConfig) -> str:
    """Digest of the statistically meaningful config content.

    Canonical form sorts experiments by name and keys within each block,
    and renders parsed values, so whitespace and declaration order cannot
    change the hash.  workers and output_dir are operational knobs that do
    not affect any estimate and are left out.
    """
    parts = [f"master_seed={config.master_seed}"]
    parts.append("caps:" + ",".join(
        f"{k}={config.caps[k]}" for k in sorted(config.caps)))
    for spec in sorted(config.experiments, key=lambda s: s.name):
        bits = [spec.name,
                f"kernel={spec.kernel_spec.family}{tuple(spec.kernel_spec.params)!r}",
                f"reps={spec.reps}", f"seed={spec.seed}"]
        bits.append("grid:" + ";".join(
            f"{k}={spec.grid[k]!r}" for k in sorted(spec.grid)))
        bits.append("tol:" + ";".join(
            f"{k}={spec.tolerances[k]!r}" for k in sorted(spec.tolerances)))
        parts.append("|".join(bits))
    blob = "\n".join(parts).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# execution and persistence


def _write_csv(path: Path, rows: list) -> None:
    if not rows:
        path.write_text("")
        return
    names = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def run_all(config: RunConfig) -> list:
    """Execute every experiment in config order and persist the outputs.

    Raises ReplicateError unchanged when a replicate body fails: the
    message already carries the (experiment, replicate, seed) triple that
    reproduces it, and no partial CSV for that experiment is written.
    """
    records = []
    if not config.experiments:
        return records
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    jsonl_path = out / "verdicts.jsonl"
    with open(jsonl_path, "w") as stream:
        for spec in config.experiments:
            started = time.monotonic()
            outcome = run_experiment(spec, workers=config.workers)
            duration = time.monotonic() - started
            point = ci_low = ci_high = None
            reps = spec.reps
            if len(outcome.rows) == 1 and "point" in outcome.rows[0]:
                row = outcome.rows[0]
                point, ci_low, ci_high = \
                    row["point"], row["ci_low"], row["ci_high"]
                reps = row["reps"]
            record = ResultRecord(
                experiment=spec.name,
                params={k: spec.grid[k] for k in sorted(spec.grid)},
                point=point, ci_low=ci_low, ci_high=ci_high,
                reps=reps, censored=outcome.censored,
                verdict=outcome.verdict, seed=spec.seed,
                duration_seconds=round(duration, 3),
                version=__version__, config_hash=digest,
                timestamp=datetime.now(timezone.utc).isoformat(
                    timespec="seconds"),
                rows=outcome.rows)
            _write_csv(out / f"{spec.name}.csv", outcome.rows)
            stream.write(record.jsonl() + "\n")
            records.append(record)
    return records


# ---------------------------------------------------------------------------
# plot-data reshaping

_PLOT_KINDS = {
    "tightness": ("t", "M", "p_hat", "ci_low", "ci_high"),
    "density": ("K", "density", "ci_low", "ci_high"),
    "schedule": ("k", "M_k", "t_k", "p_hat", "ci_low", "ci_high"),
}


def emit_plot_data(records: list, kind: str) -> str:
    """Project result rows onto the long-format columns for `kind`.

    records: dict rows (e.g. read back from an experiment CSV).  Returns
    CSV text.  Unknown kinds and rows missing a needed column are errors.
    """
    if kind not in _PLOT_KINDS:
        raise ValueError(
            f"unknown plot kind {kind!r}; supported: "
            f"{', '.join(sorted(_PLOT_KINDS))}")
    if not records:
        raise ValueError("no records to reshape")
    cols = _PLOT_KINDS[kind]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(cols)
    for i, row in enumerate(records):
        missing = [c for c in cols if c not in row]
        if missing:
            raise ValueError(
                f"record {i} is missing columns {missing} for kind {kind!r}")
        writer.writerow([row[c] for c in cols])
    return buf.getvalue()
