"""Command line runner: ``bootperc COMMAND --config run.json [options]``.

Each command expands into units.  A unit is either a run of independent
trials (resumable one trial at a time) or a single adaptive computation
(resumable as a whole).  Records go to ``records.jsonl`` in a fixed order,
and the summary is always rebuilt from that file, so an interrupted and
resumed run ends with the same bytes as an uninterrupted one.

Exit status: 0 when every hard check held and no verdict is FAIL, 1
otherwise, 2 for an unusable configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from bootperc import __version__
from bootperc.cells import LAMBDA, ScaleParams
from bootperc.config import COMMANDS, ConfigError, RunConfig
from bootperc.experiments import estimators as est
from bootperc.experiments import trials as tr
from bootperc.experiments.checks import coffeetime_corpus
from bootperc.experiments.records import TrialRecord
from bootperc.experiments.stats import Verdict, experiment_seed, median_ci
from bootperc.grid import NOT_PERCOLATED, SiteSet, evolve, longest_empty_double_line
from bootperc.persist import (SUMMARY, TABLE, RecordWriter, ResumeError, RunManifest, dump_json,
                              load_manifest, read_records, write_atomic, write_csv)
from bootperc.waves import flood_mask

log = logging.getLogger("bootperc")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


@dataclass(frozen=True)
class Unit:
    id: str
    fn: Callable  # trials: fn(i) -> TrialRecord; whole: fn() -> list[TrialRecord]
    trials: int | None = None  # None for a whole unit

    @property
    def whole(self) -> bool:
        return self.trials is None


class Interrupted(Exception):
    """Raised by the ``stop_after`` hook to simulate a killed run."""


# units ---------------------------------------------------------------------

def _seeded(cfg: RunConfig, exp: str) -> int:
    return experiment_seed(cfg.master_seed, exp)


def _time_units(cfg: RunConfig, prefix: str) -> list[Unit]:
    out = []
    for p in cfg.options["p"]:
        for n in cfg.options["n"]:
            exp = f"simulate/n={n}/p={p}"
            out.append(Unit(f"{prefix}/n={n}/p={p}",
                            partial(est.time_trial, exp, n, p, _seeded(cfg, exp)), cfg.trials))
    return out


def _estimate_k_whole(p: float, trials: int, tolerance: float, seed: int, K_max) -> list[TrialRecord]:
    exp = f"estimate-k/p={p}"
    try:
        res = est.estimate_critical_K(p, trials, tolerance, seed, K_max)
        path, K, error = res.path, res.scale.K_hat, None
    except est.BracketError as e:
        path, K, error = e.path, None, {"message": str(e), "bracket": list(e.bracket)}
    recs = [TrialRecord(exp, j, r.seed, K_, p, diagnostics={
        "successes": r.successes, "trials": r.trials, "point": r.point,
        "ci": [r.ci_low, r.ci_high]}) for j, (K_, r) in enumerate(path)]
    recs.append(TrialRecord(exp, len(path), seed, K, p, diagnostics={
        "result": True, "K_hat": K, "error": error}))
    return recs


def _slab_whole(p: float, M: float, trials: int, scale: dict, seed: int) -> list[TrialRecord]:
    params = ScaleParams(**scale)
    return est.slab_experiment(p, params, trials, seed, M).records


def _fixture_whole() -> list[TrialRecord]:
    """Recompute every bundled fixture and compare field by field."""
    data = json.loads(resources.files("bootperc").joinpath("fixtures/grids.json").read_text())
    out = []
    for j, case in enumerate(data["cases"]):
        A = SiteSet.from_text(case["grid"])
        checks = {}
        for engine in ("bitboard", "queue"):
            ev = evolve(A, engine=engine)
            T = None if ev.T is NOT_PERCOLATED else int(ev.T)
            checks[f"closure_{engine}"] = ev.closure.to_text() == case["closure"]
            checks[f"T_{engine}"] = T == case["T"]
        checks["double_line"] = longest_empty_double_line(A).length == case["double_line"]
        checks["flood"] = bool(np.array_equal(flood_mask(A.mask()), np.array(case["flood"])))
        out.append(TrialRecord("verify/fixtures", j, 0, A.config.width, None, T=case["T"],
                               diagnostics={"name": case["name"], "checks": checks,
                                            "ok": all(checks.values())}))
    return out


def _coffee_whole() -> list[TrialRecord]:
    rep = coffeetime_corpus()
    return [TrialRecord("verify/coffeetime", 0, 0, None, None, diagnostics={
        "checks": rep.checks, "failures": [list(map(str, f)) for f in rep.failures],
        "ok": rep.passed})]


def build_units(cfg: RunConfig) -> list[Unit]:
    o = cfg.options
    cmd = cfg.command
    if cmd == "simulate":
        return _time_units(cfg, "simulate")
    if cmd == "scan":
        return _time_units(cfg, "scan")
    if cmd == "closure":
        exp = f"closure/n_max={o['n_max']}"
        return [Unit(exp, partial(tr.closure_trial, exp, o["n_max"], _seeded(cfg, exp)), cfg.trials)]
    if cmd == "estimate-k":
        return [Unit(f"estimate-k/p={p}",
                     partial(_estimate_k_whole, p, cfg.trials, o["tolerance"],
                             cfg.master_seed, o["K_max"]))
                for p in o["p"]]
    if cmd == "slab":
        return [Unit(f"slab/p={p}/M={M}", partial(_slab_whole, p, M, cfg.trials, o["scale"],
                                                  cfg.master_seed))
                for p in o["p"] for M in o["M"]]
    if cmd == "waves":
        exp = f"waves/{o['wave_mode']}"
        return [Unit(exp, partial(tr.wave_trial, exp, o["wave_mode"], _seeded(cfg, exp)), cfg.trials)]
    if cmd == "verify":
        units = [Unit("verify/fixtures", _fixture_whole), Unit("verify/coffeetime", _coffee_whole)]
        for name, fn, extra in (("closure", tr.closure_trial, (32,)),
                                ("al-scan", tr.al_trial, ()),
                                ("containment", tr.containment_trial, ()),
                                ("waves-ring", tr.wave_trial, ("ring",)),
                                ("restriction", tr.restriction_trial, ())):
            exp = f"verify/{name}"
            units.append(Unit(exp, partial(fn, exp, *extra, _seeded(cfg, exp)), cfg.trials))
        return units
    raise ConfigError(f"unknown command {cmd!r}", {"path": "command"})


# summaries -----------------------------------------------------------------

def _by_unit(records: list[tuple[str, TrialRecord]]) -> dict[str, list[TrialRecord]]:
    out: dict[str, list[TrialRecord]] = {}
    for unit, r in records:
        out.setdefault(unit, []).append(r)
    return out


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def summarize(cfg: RunConfig, records: list[tuple[str, TrialRecord]]) -> tuple[dict, list[dict]]:
    """Summary JSON and CSV rows; the summary has a ``verdicts`` list of
    ``{"check", "verdict"}`` entries."""
    o = cfg.options
    groups = _by_unit(records)
    verdicts, rows = [], []
    cmd = cfg.command
    if cmd in ("simulate", "scan"):
        for p in o["p"]:
            for n in o["n"]:
                recs = groups.get(f"{cmd}/n={n}/p={p}", [])
                if not recs:
                    continue
                Ts = [r.T for r in recs if r.percolated]
                q = 1 - p
                pred = est.predicted_time(n, p) if 0 < q < 1 else None
                row = {"n": n, "p": p, "trials": len(recs), "percolated": len(Ts),
                       "median_T": None, "median_lo": None, "median_hi": None,
                       "min_T": min(Ts, default=None), "max_T": max(Ts, default=None),
                       "predicted": pred, "ratio": None}
                if Ts:
                    row["median_T"], row["median_lo"], row["median_hi"] = median_ci(Ts)
                    if pred:
                        row["ratio"] = row["median_T"] / pred
                rows.append(row)
        if cmd == "scan":
            for p in o["p"]:
                trs = []
                for n in o["n"]:
                    recs = groups.get(f"scan/n={n}/p={p}", [])
                    if recs:
                        t = est.time_row(n, p, recs)
                        trs.append(t)
                        verdicts.append({"check": f"band n={n} p={p}", "ratio": _finite(t.ratio),
                                         "verdict": (Verdict.PASS if t.in_band else Verdict.FAIL).value})
                if len(trs) >= 2:
                    tc = est.trend_check(trs[0], trs[-1])
                    verdicts.append({"check": f"trend p={p} n={tc.n_small}->{tc.n_large}",
                                     "verdict": (Verdict.PASS if tc.ok else Verdict.FAIL).value})
        summary = {"rows": rows}
    elif cmd in ("closure", "waves") or cmd == "verify":
        for unit, recs in groups.items():
            bad = [r.trial_index for r in recs if not r.diagnostics.get("ok")]
            row = {"unit": unit, "trials": len(recs), "failures": len(bad), "failed_trials": bad[:20]}
            if unit.startswith("waves/") or unit == "verify/waves-ring":
                row["routes"] = dict(sorted(Counter(r.diagnostics.get("route", "counterexample")
                                                    for r in recs).items()))
            rows.append(row)
            verdicts.append({"check": unit, "verdict": (Verdict.FAIL if bad else Verdict.PASS).value})
        summary = {"rows": rows}
    elif cmd == "estimate-k":
        for p in o["p"]:
            recs = groups.get(f"estimate-k/p={p}", [])
            if not recs:
                continue
            final = recs[-1].diagnostics
            path = [(r.n, r.diagnostics) for r in recs[:-1]]
            K = final["K_hat"]
            mu = p * math.log(K) if K else None
            pts = sorted(path, key=lambda kv: kv[0])
            monotone = all(a[1]["ci"][0] <= b[1]["ci"][1] for i, a in enumerate(pts) for b in pts[i + 1:])
            rows.append({"p": p, "K_hat": K, "mu_hat": mu, "lambda": LAMBDA, "monotone": monotone,
                         "path": [[k, d["point"]] for k, d in path], "error": final["error"]})
            ok = mu is not None and 0 < mu < LAMBDA
            verdicts.append({"check": f"mu band p={p}", "mu_hat": mu,
                             "verdict": (Verdict.PASS if ok else Verdict.FAIL).value})
            verdicts.append({"check": f"monotone p={p}",
                             "verdict": (Verdict.PASS if monotone else Verdict.FAIL).value})
        summary = {"rows": rows}
    elif cmd == "slab":
        from scipy import stats as sps
        for p in o["p"]:
            xs, ys = [], []
            for M in o["M"]:
                recs = groups.get(f"slab/p={p}/M={M}", [])
                kept = [r for r in recs if r.diagnostics["subcritical"]]
                totals = [r.diagnostics["flood_total"] for r in kept]
                fast = sum(r.diagnostics["fast"] for r in kept)
                row = {"p": p, "M": M, "kept": len(kept), "rejected": len(recs) - len(kept),
                       "partial": len(kept) < cfg.trials,
                       "fast_given_subcritical": fast / len(kept) if kept else None,
                       "mean_flood_total": float(np.mean(totals)) if totals else None,
                       "mean_speed": float(np.mean(totals) / (M / p)) if totals else None}
                rows.append(row)
                xs += [M] * len(totals)
                ys += totals
            if len(set(xs)) >= 2:
                rho = float(sps.spearmanr(xs, ys)[0])
                verdicts.append({"check": f"flood time grows with M at p={p}", "spearman": _finite(rho),
                                 "verdict": (Verdict.PASS if rho > 0 else Verdict.FAIL).value})
        summary = {"rows": rows}
    else:
        raise ConfigError(f"unknown command {cmd!r}")
    summary.update(command=cmd, config=cfg.identity(), code_version=__version__,
                   records=len(records), verdicts=verdicts)
    return summary, rows


# running -------------------------------------------------------------------

def resolve_threads(requested: int | None) -> int:
    if requested is None:
        env = os.environ.get("BOOTPERC_THREADS")
        requested = int(env) if env else 1
    if requested == 0:
        requested = os.cpu_count() or 1
    return max(1, requested)


def _call(fn, i):
    return fn(i)


def _line(unit: str, r: TrialRecord) -> str:
    return json.dumps({"unit": unit, "record": json.loads(r.to_json())},
                      sort_keys=True, separators=(",", ":"))


def run(cfg: RunConfig, *, stop_after: int | None = None, threads: int | None = None) -> int:
    """Execute ``cfg`` and write its artifacts; returns the exit status.

    ``stop_after`` raises :class:`Interrupted` after that many records have
    been written in this invocation (used to test resumption).
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    units = build_units(cfg)
    manifest = load_manifest(out) if cfg.resume else None
    if manifest is not None:
        if manifest.config != cfg.identity():
            raise ConfigError("resume requested but the manifest belongs to a different config",
                              {"manifest": manifest.config})
    else:
        manifest = RunManifest(cfg.identity(), __version__)
    writer = RecordWriter(out, manifest)
    written = 0
    nthreads = resolve_threads(threads if threads is not None else cfg.threads)
    pool = ProcessPoolExecutor(nthreads) if nthreads > 1 else None
    error = None
    try:
        for unit in units:
            state = manifest.units.get(unit.id, {"done": 0, "complete": False})
            if state["complete"]:
                continue
            if unit.whole:
                if state["done"]:
                    raise ResumeError(f"whole unit {unit.id} was partly written")
                if stop_after is not None and written >= stop_after:
                    raise Interrupted(f"stopped after {written} records")
                lines = [_line(unit.id, r) for r in unit.fn()]
                writer.write_many(unit.id, lines)
                written += len(lines)
            else:
                todo = range(state["done"], unit.trials)
                if pool is not None:
                    recs = pool.map(partial(_call, unit.fn), todo, chunksize=8)
                else:
                    recs = (unit.fn(i) for i in todo)
                for r in recs:
                    if stop_after is not None and written >= stop_after:
                        raise Interrupted(f"stopped after {written} records")
                    writer.write(unit.id, _line(unit.id, r))
                    written += 1
            writer.complete(unit.id)
    except AssertionError as e:
        error = f"hard assertion failed: {e}"
        log.error(error)
    finally:
        writer.close()
        if pool is not None:
            pool.shutdown(cancel_futures=True)

    lines = read_records(out)
    records = []
    for line in lines:
        d = json.loads(line)
        records.append((d["unit"], TrialRecord(**d["record"])))
    summary, rows = summarize(cfg, records)
    summary["hard_failure"] = error
    manifest.finished = error is None
    write_atomic(out / "manifest.json", dump_json(manifest.to_dict()))
    write_atomic(out / SUMMARY, dump_json(summary))
    write_csv(out / TABLE, rows)
    failed = [v["check"] for v in summary["verdicts"] if v["verdict"] == Verdict.FAIL.value]
    for v in summary["verdicts"]:
        log.info("%-45s %s", v["check"], v["verdict"])
    if error is not None or failed:
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bootperc", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="overrides the command named in the config")
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--resume", action="store_true", help="continue an interrupted run")
    ap.add_argument("--threads", type=int, help="worker processes (0 = all cores); "
                    "falls back to BOOTPERC_THREADS")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _error(kind: str, message: str, details: dict | None = None) -> int:
    print(json.dumps({"error": kind, "message": message, "details": details or {}}, sort_keys=True),
          file=sys.stderr)
    return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        return _error("config", f"config file {args.config} not found")
    except json.JSONDecodeError as e:
        return _error("config", f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        return _error("config", "config must be a JSON object")
    overrides = {"command": args.command, "trials": args.trials, "master_seed": args.seed,
                 "out": args.out, "threads": args.threads}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if args.resume:
        raw["resume"] = True
    if args.threads is None and "threads" not in raw and os.environ.get("BOOTPERC_THREADS"):
        raw["threads"] = int(os.environ["BOOTPERC_THREADS"])
    try:
        cfg = RunConfig.from_dict(raw)
        return run(cfg)
    except ConfigError as e:
        return _error("config", str(e), e.details)
    except ResumeError as e:
        return _error("resume", str(e))


if __name__ == "__main__":
    sys.exit(main())
