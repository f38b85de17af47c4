"""Experiment sweeps: generate hosts and trees, embed, verify, tabulate."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .embedder import INTO_G, INTO_SQUARE, EmbeddingError, EmbedParams, embed_in_square, embed_spanning_tree
from .embedder import verify_embedding
from .graphs import (
    Graph,
    complete_graph,
    estimate_lambda,
    gen_paley,
    gen_random_regular,
    is_prime,
)
from .matchmakers import MatchmakerError
from .trees import PlanInfeasible, Tree, extract_bare_paths, make_tree

OUTPUT_ENV = "SQEMBED_OUTPUT_DIR"
DEFAULT_OUTPUT = "sqembed-out"

HOSTS = ("random-regular", "paley", "complete")
FAMILIES = ("random", "path", "caterpillar", "binary", "spider")
MODES = (INTO_G, INTO_SQUARE)
CSV_COLUMNS = (
    "seed",
    "n",
    "d",
    "lambda",
    "ratio",
    "tree_family",
    "leaves",
    "mode",
    "outcome",
    "failing_step",
    "rollbacks",
    "millis",
)


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str) -> None:
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


def _as_tuple(value: Any) -> tuple:
    if value is None:
        return ()
    if isinstance(value, (str, int, float)):
        return (value,)
    return tuple(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: every ``d`` crossed with every tree family, ``trials`` each.

    ``d`` is ignored for Paley and complete hosts, whose degree is fixed by
    ``n``. ``allow_dense`` lifts the ``d <= 3n/5`` restriction.
    """

    n: int
    d: tuple[int, ...] = ()
    paley_q: int | None = None
    host: str = "random-regular"
    tree_family: tuple[str, ...] = ("random",)
    delta: int = 3
    leaf_target: float | None = None
    trials: int = 1
    seed: int = 0
    t_param: float = 4.0
    d_param: int | None = None
    alpha: float = 1 / 16
    leaf_floor: int = 2
    ratio_threshold: float = 2.0
    candidate_budget: int = 8
    rollback_factor: int = 50
    attempts: int = 5
    mode: str = INTO_SQUARE
    output: str | None = None
    workers: int = 1
    allow_dense: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "d", tuple(int(x) for x in _as_tuple(self.d)))
        object.__setattr__(self, "tree_family", tuple(str(x) for x in _as_tuple(self.tree_family)))
        self.validate()

    def validate(self) -> None:
        if self.host not in HOSTS:
            raise ConfigError("host", f"{self.host!r} not in {HOSTS}")
        if self.n < 2:
            raise ConfigError("n", f"need n >= 2, got {self.n}")
        if self.host == "paley":
            q = self.paley_q
            if q is None or not is_prime(q) or q % 4 != 1:
                raise ConfigError("paley_q", f"need a prime q = 1 mod 4, got {q}")
            if q != self.n:
                raise ConfigError("n", f"Paley host has n = q = {q}, got n = {self.n}")
        if self.host == "random-regular":
            if not self.d:
                raise ConfigError("d", "random-regular hosts need at least one degree")
            for d in self.d:
                if not 1 <= d < self.n:
                    raise ConfigError("d", f"need 1 <= d < n, got d={d}")
                if self.n * d % 2:
                    raise ConfigError("d", f"n*d must be even, got n={self.n}, d={d}")
        for d in self.degrees():
            if d > 3 * self.n / 5 and not self.allow_dense:
                raise ConfigError("d", f"d={d} exceeds 3n/5={3 * self.n / 5:g}; set allow_dense to override")
        if not self.tree_family:
            raise ConfigError("tree_family", "need at least one family")
        for fam in self.tree_family:
            if fam not in FAMILIES:
                raise ConfigError("tree_family", f"{fam!r} not in {FAMILIES}")
        if self.delta < 1:
            raise ConfigError("delta", f"need delta >= 1, got {self.delta}")
        big_d = self.embed_params().resolve_d(self.delta)
        if 2 * self.delta > big_d:
            raise ConfigError("delta", f"delta={self.delta} exceeds D/2={big_d / 2:g}")
        if self.leaf_target is not None and not 0 < self.leaf_target < 1:
            raise ConfigError("leaf_target", f"need a fraction in (0, 1), got {self.leaf_target}")
        if self.trials < 1:
            raise ConfigError("trials", f"need trials >= 1, got {self.trials}")
        if self.mode not in MODES:
            raise ConfigError("mode", f"{self.mode!r} not in {MODES}")
        if self.workers < 1:
            raise ConfigError("workers", f"need workers >= 1, got {self.workers}")
        for name in ("candidate_budget", "rollback_factor", "attempts", "leaf_floor"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"need {name} >= 1")
        if self.t_param <= 0:
            raise ConfigError("t_param", "need t_param > 0")

    def degrees(self) -> tuple[int, ...]:
        if self.host == "paley":
            return ((self.n - 1) // 2,)
        if self.host == "complete":
            return (self.n - 1,)
        return self.d

    def embed_params(self, seed: int = 0) -> EmbedParams:
        return EmbedParams(
            t_param=self.t_param,
            d_param=self.d_param,
            alpha=self.alpha,
            leaf_floor=self.leaf_floor,
            ratio_threshold=self.ratio_threshold,
            candidate_budget=self.candidate_budget,
            rollback_factor=self.rollback_factor,
            attempts=self.attempts,
            seed=seed,
        )

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["d"] = list(self.d)
        obj["tree_family"] = list(self.tree_family)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown config field")
        if "n" not in obj:
            raise ConfigError("n", "missing required field")
        return cls(**obj)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    n: int
    d: int
    host: str
    fingerprint: str
    lam: float
    lambda_error: float
    ratio: float
    tree_family: str
    delta: int
    leaf_target: float | None
    leaves: int
    bare_paths: int
    mode: str
    outcome: str
    failing_step: str
    verified: bool
    rollbacks: int
    attempts: int
    millis: int
    map: tuple[int, ...] | None = None
    detail: str = ""

    def __post_init__(self) -> None:
        if self.outcome == "success" and not self.verified:
            raise ValueError("a success record must be verified")

    def csv_row(self) -> dict:
        return {
            "seed": self.seed,
            "n": self.n,
            "d": self.d,
            "lambda": repr(self.lam),
            "ratio": repr(self.ratio),
            "tree_family": self.tree_family,
            "leaves": self.leaves,
            "mode": self.mode,
            "outcome": self.outcome,
            "failing_step": self.failing_step,
            "rollbacks": self.rollbacks,
            "millis": self.millis,
        }

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["map"] = list(self.map) if self.map is not None else None
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "TrialRecord":
        obj = dict(obj)
        if obj.get("map") is not None:
            obj["map"] = tuple(int(x) for x in obj["map"])
        return cls(**obj)


def trial_seed(base: int, d: int, trial: int) -> int:
    return int(np.random.SeedSequence([base, d, trial]).generate_state(1)[0])


def build_host(host: str, n: int, d: int, seed: int) -> Graph:
    if host == "paley":
        return gen_paley(n)
    if host == "complete":
        return complete_graph(n)
    return gen_random_regular(n, d, seed)


def build_tree(family: str, n: int, delta: int, leaf_target: float | None, seed: int) -> Tree:
    return make_tree(family, n, delta, leaf_target, seed)


def _failure_step(exc: BaseException) -> str:
    if isinstance(exc, EmbeddingError):
        return exc.step
    if isinstance(exc, MatchmakerError):
        return "matchmakers"
    if isinstance(exc, PlanInfeasible):
        return "plan"
    return "precondition"


def run_trial(cfg: ExperimentConfig, d: int, family: str, trial: int) -> TrialRecord:
    """One isolated trial; never raises for embedding failures."""
    seed = trial_seed(cfg.seed, d, trial)
    g = build_host(cfg.host, cfg.n, d, seed)
    cert = estimate_lambda(g)
    t = build_tree(family, cfg.n, cfg.delta, cfg.leaf_target, seed)
    bare = len(extract_bare_paths(t, 3)) if t.n >= 4 else 0
    entry = embed_spanning_tree if cfg.mode == INTO_G else embed_in_square
    start = time.perf_counter()
    image, stats, step, detail = None, {}, "", ""
    try:
        emb = entry(g, cert, t, cfg.embed_params(seed))
        image, stats = emb.map, emb.stats
    except (EmbeddingError, MatchmakerError, PlanInfeasible, ValueError) as exc:
        step, detail = _failure_step(exc), str(exc)
    millis = round((time.perf_counter() - start) * 1000)
    verified = False
    if image is not None:
        check = verify_embedding(g, t, image, cfg.mode)
        verified = bool(check)
        if not verified:
            step, detail = "verify", check.reason
    return TrialRecord(
        seed=seed,
        n=cfg.n,
        d=g.degree if g.degree is not None else d,
        host=cfg.host,
        fingerprint=g.fingerprint(),
        lam=cert.lam,
        lambda_error=cert.lambda_error,
        ratio=cert.ratio,
        tree_family=family,
        delta=t.delta,
        leaf_target=cfg.leaf_target,
        leaves=len(t.leaves),
        bare_paths=bare,
        mode=cfg.mode,
        outcome="success" if verified else "failure",
        failing_step=step,
        verified=verified,
        rollbacks=int(stats.get("rollbacks", 0)),
        attempts=int(stats.get("attempts", cfg.attempts if step else 0)),
        millis=millis,
        map=tuple(image) if verified else None,
        detail=detail,
    )


def _run_task(task: tuple[ExperimentConfig, int, str, int]) -> TrialRecord:
    return run_trial(*task)


def reverify_record(rec: TrialRecord) -> None:
    """Regenerate host and tree from the record and re-check its map."""
    if rec.map is None:
        raise ValueError(f"success record (seed {rec.seed}) has no map")
    g = build_host(rec.host, rec.n, rec.d, rec.seed)
    if g.fingerprint() != rec.fingerprint:
        raise ValueError(f"host fingerprint mismatch for seed {rec.seed}")
    t = build_tree(rec.tree_family, rec.n, rec.delta, rec.leaf_target, rec.seed)
    check = verify_embedding(g, t, rec.map, rec.mode)
    if not check:
        raise ValueError(f"record with seed {rec.seed} fails verification: {check.reason}")


def run_experiments(cfg: ExperimentConfig) -> list[TrialRecord]:
    """Run every trial of ``cfg`` in submission order and, if ``cfg.output``
    is set, write ``trials.csv``, ``summary.json`` and ``results.json``."""
    cfg.validate()
    tasks = [(cfg, d, fam, i) for d in cfg.degrees() for fam in cfg.tree_family for i in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_task, tasks))
    else:
        records = [_run_task(t) for t in tasks]
    if cfg.output is not None:
        write_outputs(records, cfg, Path(cfg.output))
    return records


def records_csv(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def summarize(records: Sequence[TrialRecord]) -> dict:
    """Success rates grouped by host degree, ordered by mean ``d / lambda``."""
    groups: dict[int, list[TrialRecord]] = defaultdict(list)
    for r in records:
        groups[r.d].append(r)
    rows = []
    for d, recs in groups.items():
        ratios = [r.ratio for r in recs]
        by_family: dict[str, dict] = {}
        for fam in sorted({r.tree_family for r in recs}):
            sub = [r for r in recs if r.tree_family == fam]
            ok = sum(r.verified for r in sub)
            by_family[fam] = {"trials": len(sub), "successes": ok, "success_rate": ok / len(sub)}
        ok = sum(r.verified for r in recs)
        rows.append(
            {
                "d": d,
                "ratio_mean": float(np.mean(ratios)),
                "ratio_min": min(ratios),
                "ratio_max": max(ratios),
                "trials": len(recs),
                "successes": ok,
                "success_rate": ok / len(recs),
                "millis_mean": float(np.mean([r.millis for r in recs])),
                "millis_max": max(r.millis for r in recs),
                "failing_steps": dict(sorted(Counter(r.failing_step for r in recs if r.failing_step).items())),
                "by_family": by_family,
            }
        )
    rows.sort(key=lambda row: row["ratio_mean"])
    rates = [row["success_rate"] for row in rows]
    total_ok = sum(r.verified for r in records)
    return {
        "trials": len(records),
        "successes": total_ok,
        "success_rate": total_ok / len(records) if records else math.nan,
        "all_verified": total_ok == len(records),
        "monotone_in_ratio": all(a <= b for a, b in zip(rates, rates[1:])),
        "groups": rows,
    }


def write_outputs(records: Sequence[TrialRecord], cfg: ExperimentConfig, out: Path) -> None:
    from .io import save_results

    out.mkdir(parents=True, exist_ok=True)
    (out / "trials.csv").write_text(records_csv(records), encoding="utf-8")
    summary = {"config": cfg.to_json(), **summarize(records)}
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    save_results(list(records), out / "results.json")


def exit_code(records: Sequence[TrialRecord]) -> int:
    return 0 if records and all(r.verified for r in records) else 1
