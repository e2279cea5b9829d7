"""Batch experiment runner: ``ergolab run|validate|decompose``.

Configs are JSON with an explicit schema version; unknown keys are
rejected.  Numbers that must be exact (matrices, probabilities) accept
rational strings "p/q".  Every run writes CSV data artifacts, a JSON
summary, a manifest with content hashes, and optional SVG charts; data
artifacts are byte-identical across reruns and worker counts.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import itertools
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, averages, correlations, dyadic, matrix_growth, sequences, svg, systems
from .errors import ConfigError, ErgolabError
from .seeding import ROLE_QUERY

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "correlate",
    "cumulants",
    "average",
    "ratecheck",
    "dyadic",
    "growth",
    "counting",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


# ---------------------------------------------------------------------------
# Formatting and artifact helpers
# ---------------------------------------------------------------------------

def fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_value(v) for v in row) + "\n")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class RunContext:
    """Artifact sink plus the worker pool configuration for one run."""

    def __init__(self, out_dir: Path, workers: int, emit_svg: bool):
        self.out_dir = out_dir
        self.workers = workers
        self.emit_svg = emit_svg
        self.artifacts: list[Path] = []
        self.steps: dict[str, int] = {}

    def csv(self, name: str, header, rows) -> Path:
        path = self.out_dir / name
        write_csv(path, header, rows)
        self.artifacts.append(path)
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        write_json(path, payload)
        self.artifacts.append(path)
        return path

    def chart(self, name: str, xs, series, title: str, log_x=False, log_y=False) -> None:
        if not self.emit_svg:
            return
        path = self.out_dir / name
        svg.line_chart(path, xs, series, title=title, log_x=log_x, log_y=log_y)
        self.artifacts.append(path)

    def count(self, key: str, n: int) -> None:
        self.steps[key] = self.steps.get(key, 0) + n


def pmap(fn, tasks, workers: int) -> list:
    """Ordered map over tasks; results are identical for any worker count."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def parse_exact(value) -> float:
    """Accept JSON numbers or rational strings 'p/q', exactly."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse rational {value!r}: {exc}") from exc
    raise ConfigError(f"expected a number or 'p/q' string, got {value!r}")


def parse_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{what} must be an integer, got {value!r}")
    return value


def reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def build_system(desc: dict):
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError("system descriptor must be an object with a 'kind'")
    kind = desc["kind"]
    if kind == "shift":
        reject_unknown(desc, {"kind", "adjacency", "transition"}, "system")
        adjacency = desc.get("adjacency")
        transition = desc.get("transition")
        if adjacency is None or transition is None:
            raise ConfigError("shift systems need 'adjacency' and 'transition'")
        rows = [[parse_exact(v) for v in row] for row in transition]
        return systems.build_shift(adjacency, rows)
    if kind == "torus":
        reject_unknown(desc, {"kind", "matrix", "precision_bits"}, "system")
        matrix = desc.get("matrix")
        if matrix is None:
            raise ConfigError("torus systems need a 'matrix'")
        bits = parse_int(desc.get("precision_bits", systems.DEFAULT_PRECISION_BITS), "precision_bits")
        return systems.build_torus(matrix, bits)
    raise ConfigError(f"unknown system kind {kind!r}")


def build_observable(desc: dict, system) -> systems.Observable:
    if not isinstance(desc, dict) or "variant" not in desc:
        raise ConfigError("observable descriptor must be an object with a 'variant'")
    variant = desc["variant"]
    if variant == "cylinder":
        reject_unknown(desc, {"variant", "radius", "table", "default", "centered"}, "observable")
        radius = parse_int(desc.get("radius", 0), "radius")
        table = {}
        for entry in desc.get("table", []):
            reject_unknown(entry, {"word", "value"}, "observable table entry")
            table[tuple(entry["word"])] = parse_exact(entry["value"])
        obs = systems.cylinder_observable(radius, table, parse_exact(desc.get("default", 0.0)))
        if desc.get("centered", False):
            mean = systems.exact_mean(obs, system)
            table = {w: v - mean for w, v in obs.table.items()}
            obs = systems.cylinder_observable(radius, table, obs.default - mean)
        return obs
    if variant == "trig":
        reject_unknown(desc, {"variant", "terms"}, "observable")
        terms = []
        for entry in desc.get("terms", []):
            reject_unknown(entry, {"freq", "cos", "sin"}, "trig term")
            terms.append(
                (
                    tuple(parse_int(k, "frequency") for k in entry["freq"]),
                    parse_exact(entry.get("cos", 0.0)),
                    parse_exact(entry.get("sin", 0.0)),
                )
            )
        return systems.trig_observable(terms)
    raise ConfigError(f"unknown observable variant {variant!r}")


def build_sequence(desc: dict) -> sequences.SequenceSpec:
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError("sequence descriptor must be an object with a 'kind'")
    reject_unknown(desc, {"kind", "coefficients", "values", "multiplicity_bound"}, "sequence")
    return sequences.SequenceSpec(
        kind=desc["kind"],
        coefficients=tuple(parse_int(c, "coefficient") for c in desc.get("coefficients", [])),
        values=tuple(parse_int(v, "sequence value") for v in desc.get("values", [])),
        multiplicity_bound=parse_int(desc.get("multiplicity_bound", 1), "multiplicity_bound"),
    )


TOP_KEYS = {"schema_version", "experiment", "seed", "system", "observables", "params"}


def load_config(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


class ValidatedConfig:
    """Config with constructed objects and derived planning quantities."""

    def __init__(self, cfg: dict):
        reject_unknown(cfg, TOP_KEYS, "config")
        if cfg.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version must be {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}"
            )
        experiment = cfg.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        self.experiment = experiment
        self.seed = parse_int(cfg.get("seed", 0), "seed")
        self.raw = cfg
        self.params = cfg.get("params", {})
        if not isinstance(self.params, dict):
            raise ConfigError("'params' must be an object")
        self.system = None
        self.observables: tuple[systems.Observable, ...] = ()
        if experiment in ("correlate", "cumulants", "average", "ratecheck", "dyadic"):
            if "system" not in cfg:
                raise ConfigError(f"experiment {experiment!r} needs a 'system'")
            self.system = build_system(cfg["system"])
            obs_desc = cfg.get("observables", [])
            if not obs_desc:
                raise ConfigError(f"experiment {experiment!r} needs 'observables'")
            self.observables = tuple(build_observable(d, self.system) for d in obs_desc)
        self.derived: dict = {}
        getattr(self, f"_validate_{experiment}")()

    # -- per-experiment validation ----------------------------------------

    def _average_spec(self, params: dict) -> averages.AverageSpec:
        multipliers = params.get("multipliers")
        if not multipliers:
            raise ConfigError("need 'multipliers'")
        if len(set(multipliers)) != len(multipliers):
            raise ConfigError("multipliers must be pairwise distinct")
        sequence = build_sequence(params.get("sequence", {"kind": "linear"}))
        n_max = parse_int(params.get("n_max", 1024), "n_max")
        checkpoints = params.get("checkpoints")
        return averages.AverageSpec(
            system=self.system,
            observables=self.observables,
            multipliers=tuple(parse_int(m, "multiplier") for m in multipliers),
            sequence=sequence,
            n_max=n_max,
            checkpoints=tuple(checkpoints) if checkpoints else None,
        )

    def _rate_params(self, params: dict) -> tuple[float, float]:
        epsilon = parse_exact(params.get("epsilon", 1.0))
        delta = parse_exact(params.get("delta", 2.0))
        if epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if delta <= 0:
            raise ConfigError("delta must be positive")
        return epsilon, delta

    def _derive_window(self, spec: averages.AverageSpec, points: int) -> None:
        if isinstance(spec.system, systems.ShiftSystem):
            radius = spec.required_radius()
            self.derived["required_window_radius"] = radius
            self.derived["window_bytes_per_point"] = 2 * radius + 1
            self.derived["estimated_memory_bytes"] = points * (2 * radius + 1 + 16 * spec.n_max)
        else:
            self.derived["torus_precision_bits"] = spec.system.precision_bits
            self.derived["estimated_memory_bytes"] = points * 16 * spec.n_max

    def _validate_correlate(self):
        reject_unknown(self.params, {"queries", "method", "samples"}, "params")
        queries = self.params.get("queries")
        if not queries:
            raise ConfigError("correlate needs 'queries'")
        method = self.params.get("method", "exact")
        if method not in ("exact", "mc", "both"):
            raise ConfigError("method must be exact, mc or both")
        if method in ("mc", "both"):
            samples = parse_int(self.params.get("samples", 0), "samples")
            if samples < 2:
                raise ConfigError("Monte Carlo methods need samples >= 2")
        self.queries = []
        for desc in queries:
            reject_unknown(desc, {"times", "multipliers"}, "query")
            times = desc.get("times")
            if not times or len(times) != len(self.observables):
                raise ConfigError("each query needs one time per observable")
            multipliers = desc.get("multipliers")
            query = correlations.CorrelationQuery(
                system=self.system,
                observables=self.observables,
                times=tuple(parse_int(t, "time") for t in times),
                multipliers=tuple(parse_int(m, "multiplier") for m in multipliers)
                if multipliers
                else None,
            )
            if method in ("exact", "both") and not correlations.has_exact_oracle(query):
                raise ConfigError("no exact oracle applies to this system/observables")
            self.queries.append(query)
        eff = [t for q in self.queries for t in q.effective_times()]
        radius = max(obs.radius for obs in self.observables)
        self.derived["required_window_radius"] = max(abs(t) for t in eff) + radius
        self.derived["transfer_span"] = max(eff) - min(eff) + 2 * radius + 1

    def _validate_cumulants(self):
        reject_unknown(self.params, {"time_tuples", "multipliers"}, "params")
        tuples = self.params.get("time_tuples")
        if not tuples:
            raise ConfigError("cumulants needs 'time_tuples'")
        if len(self.observables) > correlations.MAX_CUMULANT_ORDER + 1:
            raise ConfigError("too many observables for the cumulant guard")
        for times in tuples:
            if len(times) != len(self.observables):
                raise ConfigError("each time tuple needs one time per observable")
        if not correlations.has_exact_oracle(
            correlations.CorrelationQuery(
                system=self.system, observables=self.observables, times=tuple(tuples[0])
            )
        ):
            raise ConfigError("cumulant scans need the exact oracle")
        self.time_tuples = [tuple(parse_int(t, "time") for t in row) for row in tuples]
        self.multipliers = (
            tuple(parse_int(m, "multiplier") for m in self.params["multipliers"])
            if self.params.get("multipliers")
            else None
        )

    def _validate_average(self):
        reject_unknown(
            self.params,
            {"multipliers", "sequence", "n_max", "checkpoints", "point_count", "epsilon", "delta"},
            "params",
        )
        self.spec = self._average_spec(self.params)
        self.epsilon, self.delta = self._rate_params(self.params)
        self.point_count = parse_int(self.params.get("point_count", 1), "point_count")
        if self.point_count < 1:
            raise ConfigError("point_count must be >= 1")
        self._derive_window(self.spec, self.point_count)

    def _validate_ratecheck(self):
        reject_unknown(
            self.params,
            {
                "multipliers",
                "sequence",
                "n_max",
                "checkpoints",
                "point_count",
                "epsilon",
                "delta",
                "min_checkpoint",
            },
            "params",
        )
        self.spec = self._average_spec(self.params)
        self.epsilon, self.delta = self._rate_params(self.params)
        self.point_count = parse_int(self.params.get("point_count", 10), "point_count")
        if self.point_count < 10:
            raise ConfigError("ratecheck needs point_count >= 10")
        self.min_checkpoint = (
            parse_int(self.params["min_checkpoint"], "min_checkpoint")
            if "min_checkpoint" in self.params
            else None
        )
        self._derive_window(self.spec, self.point_count)

    def _validate_dyadic(self):
        reject_unknown(
            self.params,
            {"multipliers", "sequence", "point_count", "n_grid", "exceptional"},
            "params",
        )
        grid = self.params.get("n_grid")
        if not grid or len(grid) < 4:
            raise ConfigError("dyadic needs an 'n_grid' with at least 4 entries")
        self.n_grid = [parse_int(n, "grid entry") for n in grid]
        for n in self.n_grid:
            if n < 2 or n & (n - 1):
                raise ConfigError(f"n_grid entries must be powers of two >= 2, got {n}")
        params = dict(self.params)
        params.setdefault("n_max", max(self.n_grid))
        self.spec = self._average_spec(
            {k: params[k] for k in ("multipliers", "sequence", "n_max") if k in params}
        )
        self.point_count = parse_int(self.params.get("point_count", 1000), "point_count")
        if self.point_count < 2:
            raise ConfigError("dyadic needs point_count >= 2")
        exceptional = self.params.get("exceptional")
        if exceptional is not None:
            reject_unknown(exceptional, {"s_values", "epsilon", "sigma"}, "exceptional")
            if not exceptional.get("s_values"):
                raise ConfigError("exceptional needs 's_values'")
        self.exceptional = exceptional
        self._derive_window(self.spec, self.point_count)

    def _validate_growth(self):
        reject_unknown(self.params, {"matrices", "n_max", "pair"}, "params")
        matrices = self.params.get("matrices", [])
        self.n_max = parse_int(self.params.get("n_max", 64), "n_max")
        if self.n_max < 16:
            raise ConfigError("growth needs n_max >= 16")
        self.matrices = [np.array([[parse_exact(v) for v in row] for row in m]) for m in matrices]
        pair = self.params.get("pair")
        self.pair = None
        self.pair_grid = None
        self.balance = None
        if pair is not None:
            reject_unknown(pair, {"g", "h", "m_grid", "k_max", "n_max", "balance"}, "pair")
            g = np.array([[parse_exact(v) for v in row] for row in pair["g"]])
            h = np.array([[parse_exact(v) for v in row] for row in pair["h"]])
            self.pair = matrix_growth.CommutingPair(g=g, h=h)
            m_max = parse_int(pair.get("m_grid", 32), "m_grid")
            self.pair_grid = (
                list(range(1, m_max + 1)),
                parse_int(pair.get("k_max", 512), "k_max"),
                parse_int(pair.get("n_max", 512), "n_max"),
            )
            balance = pair.get("balance")
            if balance is not None:
                reject_unknown(balance, {"m", "n_max"}, "balance")
                self.balance = (
                    parse_int(balance.get("m", 10), "balance m"),
                    parse_int(balance.get("n_max", 40), "balance n_max"),
                )
        if not matrices and pair is None:
            raise ConfigError("growth needs 'matrices' or a 'pair'")

    def _validate_counting(self):
        reject_unknown(self.params, {"checks"}, "params")
        checks = self.params.get("checks")
        if not checks:
            raise ConfigError("counting needs 'checks'")
        self.checks = []
        for desc in checks:
            reject_unknown(
                desc,
                {"type", "sequence", "values", "t_first", "t_second", "K", "n_max", "s_max", "M_claim", "m_max"},
                "counting check",
            )
            kind = desc.get("type")
            if kind not in ("c", "b", "band"):
                raise ConfigError("check type must be c, b or band")
            k_max = parse_int(desc.get("K", 1000), "K")
            if desc.get("values") is not None:
                values = [parse_exact(v) for v in desc["values"]]
                if len(values) < k_max:
                    raise ConfigError("'values' must supply at least K entries")
                source = ("values", values)
            else:
                seq = build_sequence(desc.get("sequence", {"kind": "linear"}))
                t_first = parse_int(desc.get("t_first", 1), "t_first")
                t_second = parse_int(desc.get("t_second", 2), "t_second")
                source = ("sequence", seq, t_first, t_second)
            entry = {
                "type": kind,
                "source": source,
                "K": k_max,
                "n_max": parse_int(desc.get("n_max", 1000), "n_max"),
                "s_max": parse_int(desc.get("s_max", 1000), "s_max"),
                "M_claim": parse_int(desc.get("M_claim", 1), "M_claim"),
                "m_max": parse_int(desc.get("m_max", 100), "m_max"),
            }
            self.checks.append(entry)


def validate_config(cfg: dict) -> tuple[ValidatedConfig | None, dict]:
    """Full validation without execution; always produces a report."""
    try:
        validated = ValidatedConfig(cfg)
    except (ErgolabError, ValueError, KeyError, TypeError) as exc:
        return None, {"ok": False, "errors": [str(exc)], "derived": {}}
    return validated, {"ok": True, "errors": [], "derived": validated.derived}


# ---------------------------------------------------------------------------
# Worker task functions (top level: picklable)
# ---------------------------------------------------------------------------

def _task_mc_query(args):
    query, samples, seed, index = args
    return correlations.mc_correlation(query, samples, seed + index)


def _task_member_stats(args):
    spec, epsilon, delta, seed, index, radius = args
    return averages.ensemble_member_statistics(spec, epsilon, delta, seed, index, radius)


def _task_series(args):
    spec, seed, index, radius = args
    point = averages.sample_spec_point(spec, seed, index, radius)
    return averages.ergodic_average_stream(spec, point)


def _task_empirical_e(args):
    spec, seed, points, n = args
    generator = averages.product_term_generator(spec, seed)
    return dyadic.empirical_E(generator, points, 0, n)


# ---------------------------------------------------------------------------
# Experiment runners
# ---------------------------------------------------------------------------

def run_correlate(v: ValidatedConfig, ctx: RunContext) -> dict:
    method = v.params.get("method", "exact")
    samples = parse_int(v.params.get("samples", 0), "samples") if method != "exact" else 0
    k = len(v.observables) - 1
    header = [f"t_{i}" for i in range(k + 1)] + ["estimate", "std_error", "exact", "defect"]
    rows = []
    mc_results = None
    if method in ("mc", "both"):
        tasks = [(q, samples, v.seed + ROLE_QUERY, i) for i, q in enumerate(v.queries)]
        mc_results = pmap(_task_mc_query, tasks, ctx.workers)
    summary_rows = []
    gaps = []
    defects = []
    for i, query in enumerate(v.queries):
        means = [systems.exact_mean(obs, v.system) for obs in query.observables]
        product = float(np.prod(means))
        eff = query.effective_times()
        defect = None
        if method in ("exact", "both"):
            value = correlations.exact_correlation(query)
            defect = abs(value - product)
            rows.append(list(eff) + [value, 0.0, True, defect])
        if method in ("mc", "both"):
            estimate, std_error = mc_results[i]
            if defect is None:
                defect = abs(estimate - product)
            rows.append(list(eff) + [estimate, std_error, False, abs(estimate - product)])
        if len(eff) > 1:
            gaps.append(min(abs(a - b) for a, b in itertools.combinations(eff, 2)))
            defects.append(defect)
        summary_rows.append({"times": list(eff), "product_of_means": product})
    ctx.csv("correlations.csv", header, rows)
    ctx.count("queries", len(v.queries))
    if gaps:
        ctx.chart(
            "correlations.svg",
            gaps,
            [("defect", defects)],
            "mixing defect vs min gap",
            log_x=True,
            log_y=True,
        )
    return {"queries": summary_rows, "method": method}


def run_cumulants(v: ValidatedConfig, ctx: RunContext) -> dict:
    fit, rows = correlations.cumulant_decay_scan(
        v.system, v.observables, v.time_tuples, v.multipliers
    )
    k = len(v.observables) - 1
    header = [f"t_{i}" for i in range(k + 1)] + ["x", "moment", "cumulant"]
    csv_rows = [list(r["times"]) + [r["x"], r["moment"], r["cumulant"]] for r in rows]
    ctx.csv("cumulants.csv", header, csv_rows)
    ctx.json("cumulant_fit.json", fit.to_json_dict())
    ctx.count("tuples", len(rows))
    ctx.chart(
        "cumulants.svg",
        [r["x"] for r in rows],
        [("abs cumulant", [abs(r["cumulant"]) for r in rows])],
        "top cumulant vs recentred span",
        log_y=True,
    )
    return {"fit": fit.to_json_dict(), "tuples": len(rows)}


def run_average(v: ValidatedConfig, ctx: RunContext) -> dict:
    radius = (
        v.spec.required_radius() if isinstance(v.system, systems.ShiftSystem) else None
    )
    tasks = [(v.spec, v.seed, i, radius) for i in range(v.point_count)]
    series_list = pmap(_task_series, tasks, ctx.workers)
    header = ["seed", "N", "A_N", "S_N", "rate_statistic"]
    rows = []
    for index, series in enumerate(series_list):
        stats = averages.rate_statistic(series, v.epsilon, v.delta, series.target)
        table = dict(stats.rows)
        for n, a_n, s_n in series.entries:
            rows.append([index, n, a_n, s_n, table.get(n, "")])
    ctx.csv("average.csv", header, rows)
    ctx.count("orbits", len(series_list))
    first = series_list[0]
    ctx.chart(
        "average.svg",
        [n for n, _, _ in first.entries],
        [("A_N point 0", [a for _, a, _ in first.entries])],
        "streamed average",
        log_x=True,
    )
    return {
        "target": first.target,
        "points": v.point_count,
        "final": {str(i): s.entries[-1][1] for i, s in enumerate(series_list)},
    }


def run_ratecheck(v: ValidatedConfig, ctx: RunContext) -> dict:
    radius = (
        v.spec.required_radius() if isinstance(v.system, systems.ShiftSystem) else None
    )
    tasks = [
        (v.spec, v.epsilon, v.delta, v.seed, i, radius) for i in range(v.point_count)
    ]
    results = pmap(_task_member_stats, tasks, ctx.workers)
    checkpoints = results[0][0]
    summary = averages.summarize_ensemble(
        v.spec,
        [values for _, values in results],
        checkpoints,
        v.epsilon,
        v.delta,
        v.min_checkpoint,
    )
    header = ["checkpoint", "fraction_above_own", "fraction_above_median", "median"]
    rows = [
        [n, fo, fm, md]
        for n, fo, fm, md in zip(
            summary.checkpoints,
            summary.fractions_above_own,
            summary.fractions_above_median,
            summary.medians,
        )
    ]
    ctx.csv("ratecheck.csv", header, rows)
    ctx.json("ratecheck_summary.json", summary.to_json_dict())
    ctx.count("orbits", v.point_count)
    ctx.chart(
        "ratecheck.svg",
        list(summary.checkpoints),
        [
            ("median statistic", list(summary.medians)),
            ("fraction > median ref", list(summary.fractions_above_median)),
        ],
        "rate statistic trend",
        log_x=True,
        log_y=True,
    )
    return summary.to_json_dict()


def run_dyadic(v: ValidatedConfig, ctx: RunContext) -> dict:
    tasks = [(v.spec, v.seed, v.point_count, n) for n in v.n_grid]
    results = pmap(_task_empirical_e, tasks, ctx.workers)
    rows = [[n, e, se] for n, (e, se) in zip(v.n_grid, results)]
    ctx.csv("dyadic_e.csv", ["N", "E", "std_error"], rows)
    fit = dyadic.sigma_fit(v.n_grid, [e for e, _ in results])
    ctx.json("sigma_fit.json", fit.to_json_dict())
    ctx.count("grid_points", len(v.n_grid))
    summary = {"sigma_fit": fit.to_json_dict(), "E": {str(n): e for n, (e, _) in zip(v.n_grid, results)}}
    if v.exceptional:
        generator = averages.product_term_generator(v.spec, v.seed)
        eps = parse_exact(v.exceptional.get("epsilon", 1.0))
        sigma = parse_exact(v.exceptional.get("sigma", 1.0))
        exc_rows = []
        profile_rows = []
        partial = 0.0
        for s in v.exceptional["s_values"]:
            s = parse_int(s, "s value")
            ks = np.arange(1, (1 << s) + 1, dtype=np.int64)
            terms = generator(np.arange(v.point_count, dtype=np.int64), ks)
            profile = dyadic.variance_profile(terms, s)
            for level, mean in enumerate(profile.level_means):
                profile_rows.append([s, level, mean])
            profile_rows.append([s, "total", profile.total_mean])
            fraction, bound = dyadic.exceptional_fraction(terms, s, eps, sigma)
            partial += fraction
            exc_rows.append([s, fraction, bound, partial])
        ctx.csv(
            "dyadic_variance_profile.csv",
            ["s", "level", "mean_square_block_sum"],
            profile_rows,
        )
        ctx.csv(
            "dyadic_exceptional.csv",
            ["s", "fraction", "chebyshev_bound", "partial_sum"],
            exc_rows,
        )
        summary["exceptional_partial_sum"] = partial
    ctx.chart(
        "dyadic_e.svg",
        v.n_grid,
        [("E(0,N)", [e for e, _ in results])],
        "ensemble second moment growth",
        log_x=True,
        log_y=True,
    )
    return summary


def run_growth(v: ValidatedConfig, ctx: RunContext) -> dict:
    summary: dict = {}
    rows = []
    profiles = []
    for idx, matrix in enumerate(v.matrices):
        profile = matrix_growth.growth_profile(matrix, v.n_max)
        profiles.append(profile)
        for n in range(1, v.n_max + 1):
            norm = matrix_growth.norm_power(matrix, n)
            rows.append([idx, n, norm.value, norm.log])
        summary[f"matrix_{idx}"] = {
            "base": profile.base,
            "poly_degree": profile.poly_degree,
            "residual": profile.residual,
        }
    if rows:
        ctx.csv("growth_curves.csv", ["matrix", "n", "norm", "log_norm"], rows)
        ns = list(range(1, v.n_max + 1))
        ctx.chart(
            "growth_curves.svg",
            ns,
            [
                (f"matrix {idx}", [r[3] for r in rows if r[0] == idx])
                for idx in range(len(v.matrices))
            ],
            "log norm growth",
            log_x=True,
        )
    if v.pair is not None:
        m_grid, k_max, n_max = v.pair_grid
        result = matrix_growth.pair_counting_check(v.pair, m_grid, k_max, n_max)
        reports = [result.decisive] + ([result.other] if result.other else [])
        ctx.csv(
            "pair_counting.csv",
            sequences.CountingReport.CSV_HEADER,
            [r.to_csv_row() for r in reports],
        )
        summary["pair"] = {
            "orientation": result.orientation,
            "decisive": result.decisive.to_json_dict(),
        }
        if v.balance is not None:
            m, bal_n_max = v.balance
            bound = matrix_growth.hyperbolic_balance_bound(v.pair, m, range(0, bal_n_max + 1))
            ctx.csv(
                "balance_bound.csv",
                ["n", "norm", "lower_bound"],
                [[n, no, cu] for n, no, cu in zip(bound.ns, bound.norms, bound.curve)],
            )
            summary["balance"] = {
                "m": bound.m,
                "threshold": bound.threshold,
                "passed": bound.passed,
            }
            ctx.chart(
                "balance_bound.svg",
                list(bound.ns),
                [("norm", list(bound.norms)), ("lower bound", list(bound.curve))],
                "hyperbolic balance bound",
                log_y=True,
            )
    ctx.count("matrices", len(v.matrices))
    return summary


def run_counting(v: ValidatedConfig, ctx: RunContext) -> dict:
    rows = []
    summary = []
    for entry in v.checks:
        kind = entry["type"]
        k_max = entry["K"]
        if entry["source"][0] == "values":
            values = entry["source"][1]

            def value_fn(k, _values=values):
                return _values[k - 1]

            c_fn = value_fn
            b_fn = None
        else:
            _, seq, t_first, t_second = entry["source"]
            count = max(k_max, entry["m_max"])
            c_fn = sequences.sequence_gap_c(seq, t_first, t_second, count)
            b_fn = sequences.sequence_gap_b(seq, t_first, t_second, count)
        if kind == "c":
            report = sequences.check_c_condition(c_fn, k_max, entry["n_max"])
            reports = [report]
        elif kind == "band":
            report = sequences.check_band_condition(c_fn, k_max, entry["s_max"], entry["M_claim"])
            reports = [report]
        else:
            if b_fn is None:
                raise ConfigError("b checks need a sequence source")
            decisive, other = sequences.check_b_either(
                b_fn, range(1, entry["m_max"] + 1), k_max, entry["n_max"]
            )
            reports = [decisive] + ([other] if other else [])
        for report in reports:
            rows.append(report.to_csv_row())
            summary.append(report.to_json_dict())
    ctx.csv("counting.csv", sequences.CountingReport.CSV_HEADER, rows)
    ctx.count("checks", len(v.checks))
    return {"reports": summary}


RUNNERS = {
    "correlate": run_correlate,
    "cumulants": run_cumulants,
    "average": run_average,
    "ratecheck": run_ratecheck,
    "dyadic": run_dyadic,
    "growth": run_growth,
    "counting": run_counting,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def run(config_path: Path, out_dir: Path | None, workers: int, emit_svg: bool) -> int:
    try:
        cfg = load_config(config_path)
        validated, report = validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if validated is None:
        for message in report["errors"]:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    out = out_dir or Path(f"{config_path.stem}_out")
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(out, workers, emit_svg)
    started = time.monotonic()
    try:
        summary = RUNNERS[validated.experiment](validated, ctx)
        status = {"ok": True, "error": None}
    except ErgolabError as exc:
        summary = {}
        status = {"ok": False, "error": {"code": exc.code, "message": str(exc)}}
    except Exception as exc:  # noqa: BLE001 - surfaced in the summary artifact
        summary = {}
        status = {"ok": False, "error": {"code": "runtime", "message": repr(exc)}}
    elapsed = time.monotonic() - started
    summary_payload = {
        "experiment": validated.experiment,
        "seed": validated.seed,
        "status": status,
        "result": summary,
        "artifacts": [p.name for p in ctx.artifacts],
        "csv_columns": {p.name: _csv_header(p) for p in ctx.artifacts if p.suffix == ".csv"},
    }
    ctx.json("summary.json", summary_payload)
    manifest = {
        "config": validated.raw,
        "artifacts": [
            {"name": p.name, "sha256": sha256_file(p), "bytes": p.stat().st_size}
            for p in ctx.artifacts
        ],
        "wall_seconds": elapsed,
        "steps": ctx.steps,
        "versions": {
            "ergolab": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
    }
    write_json(out / "manifest.json", manifest)
    if not status["ok"]:
        print(f"runtime error: {status['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _csv_header(path: Path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.readline().strip().split(",")


def validate_command(config_path: Path) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(json.dumps({"ok": False, "errors": [str(exc)], "derived": {}}, indent=2))
        return EXIT_CONFIG
    _validated, report = validate_config(cfg)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["ok"] else EXIT_CONFIG


def decompose_command(n: int, s: int | None) -> int:
    s = s if s is not None else dyadic.s_of(n)
    blocks = dyadic.decompose(n, s)
    print(f"n={n} s={s} blocks={len(blocks)}")
    for block in blocks:
        print(f"  level {block.level:2d}  [{block.lo}..{block.hi}]  length {len(block)}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ergolab", description="batch experiments for ergodic-average rate checks"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=None, help="output directory")
    p_run.add_argument(
        "--workers",
        type=int,
        default=int(os.environ.get("ERGOLAB_WORKERS", "1")),
        help="worker pool size (default: ERGOLAB_WORKERS or 1)",
    )
    p_run.add_argument("--no-svg", action="store_true", help="skip SVG charts")

    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("config", type=Path)

    p_dec = sub.add_parser("decompose", help="inspect a dyadic decomposition")
    p_dec.add_argument("n", type=int)
    p_dec.add_argument("--s", type=int, default=None)

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.out, args.workers, not args.no_svg)
    if args.command == "validate":
        return validate_command(args.config)
    return decompose_command(args.n, args.s)


if __name__ == "__main__":
    sys.exit(main())
