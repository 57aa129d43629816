"""Batch runs, run records, front/stats CSV files and performance profiles."""
from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .biobab import RunStats, run
from .bruteforce import FrontPoint
from .instance import Instance, ScenarioSet, generate_scenarios
from .master import Settings, Strategy

log = logging.getLogger(__name__)

STATS_COLUMNS = ("instance", "vertices", "samples", "setting", "lps", "bb_nodes", "cuts", "cpu_seconds", "converged")
FRONT_COLUMNS = ("f1", "f2_num", "f2_den", "z_bits")


@dataclass(frozen=True)
class RunRecord:
    instance: str
    vertices: int
    samples: int
    setting: str
    lps: int
    bb_nodes: int
    cuts: int
    cpu_seconds: float
    converged: bool

    def __post_init__(self):
        if min(self.vertices, self.samples, self.lps, self.bb_nodes, self.cuts) < 0:
            raise ValueError("run record counts must be nonnegative")
        if self.cpu_seconds < 0:
            raise ValueError("cpu_seconds must be nonnegative")

    @classmethod
    def from_stats(cls, instance: Instance, samples: int, setting: str, stats: RunStats) -> "RunRecord":
        return cls(
            instance=instance.name or "instance",
            vertices=instance.n,
            samples=samples,
            setting=setting,
            lps=stats.lps_solved,
            bb_nodes=stats.bb_nodes,
            cuts=stats.cuts_generated,
            cpu_seconds=stats.cpu_seconds,
            converged=stats.converged,
        )

    def counts(self) -> tuple:
        """Everything except the timing, which is exempt from reproducibility."""
        return (self.instance, self.vertices, self.samples, self.setting, self.lps, self.bb_nodes, self.cuts, self.converged)


def setting_label(settings: Settings) -> str:
    label = settings.strategy.value
    return label if settings.cut_mode == "multi" else f"{label}/single"


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def front_csv(points: Iterable[FrontPoint], samples: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRONT_COLUMNS)
    for p in points:
        num = p.f2 * samples
        if num.denominator != 1:
            raise ValueError(f"f2 = {p.f2} is not a multiple of 1/{samples}")
        w.writerow((p.f1, int(num), samples, "".join(str(int(v)) for v in p.z)))
    return buf.getvalue()


def read_front_csv(path: str | os.PathLike) -> list[FrontPoint]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [
        FrontPoint(int(r["f1"]), Fraction(int(r["f2_num"]), int(r["f2_den"])), tuple(int(c) for c in r["z_bits"]))
        for r in rows
    ]


def stats_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for r in records:
        row = asdict(r)
        row["cpu_seconds"] = f"{r.cpu_seconds:.3f}"
        row["converged"] = "true" if r.converged else "false"
        w.writerow(row[c] for c in STATS_COLUMNS)
    return buf.getvalue()


def read_stats_csv(path: str | os.PathLike) -> list[RunRecord]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != STATS_COLUMNS:
            raise ValueError(f"unexpected stats columns {reader.fieldnames}")
        out = []
        for r in reader:
            out.append(
                RunRecord(
                    instance=r["instance"],
                    vertices=int(r["vertices"]),
                    samples=int(r["samples"]),
                    setting=r["setting"],
                    lps=int(r["lps"]),
                    bb_nodes=int(r["bb_nodes"]),
                    cuts=int(r["cuts"]),
                    cpu_seconds=float(r["cpu_seconds"]),
                    converged=r["converged"].strip().lower() in ("true", "1", "yes"),
                )
            )
    return out


def all_settings(partial_k: int = 4, cut_modes: Sequence[str] = ("multi",)) -> list[Settings]:
    return [Settings(strategy=s, cut_mode=m, partial_k=partial_k) for s in Strategy for m in cut_modes]


def run_experiments(
    instances: Sequence[Instance],
    sample_sizes: Sequence[int],
    settings: Sequence[Settings],
    budget: float,
    out_dir: str | os.PathLike | None = None,
    cv: float = 0.3,
    seed: int = 0,
) -> list[RunRecord]:
    """Cross product instances x sample sizes x settings, one run each.

    Scenario sets are drawn once per (instance, size) from ``seed`` so every
    setting sees the same data.  With ``out_dir``, writes ``stats.csv`` and
    one front CSV per run under ``fronts/``.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    records = []
    for k, inst in enumerate(instances):
        name = inst.name or f"instance{k}"
        for samples in sample_sizes:
            scen = generate_scenarios(inst, samples, cv, seed + 7919 * k + samples)
            for base in settings:
                cfg = replace(base, time_limit=budget)
                label = setting_label(cfg)
                ub, stats = run(inst, scen, cfg)
                record = RunRecord.from_stats(inst, samples, label, stats)
                records.append(record)
                log.info("%s N=%d %s: %d nodes, %.2fs%s", name, samples, label, stats.bb_nodes,
                         stats.cpu_seconds, "" if stats.converged else " (not converged)")
                if out_dir is not None:
                    target = Path(out_dir) / "fronts" / f"{name}_N{samples}_{label.replace('/', '-')}.csv"
                    try:
                        atomic_write(target, front_csv(ub.entries, samples))
                    except OSError as exc:
                        log.error("could not write %s: %s", target, exc)
    if out_dir is not None:
        atomic_write(Path(out_dir) / "stats.csv", stats_csv(records))
    return records


def performance_profile(records: Sequence[RunRecord]) -> dict[str, list[tuple[float, float]]]:
    """Step tables ``(tau, fraction of groups with ratio <= tau)`` per setting.

    Groups are (instance, samples).  Ratios are taken against the fastest
    converged run of the group; runs that did not converge get no ratio.
    Every table starts at tau = 1.
    """
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.instance, r.samples), []).append(r)
    labels = sorted({r.setting for r in records})
    ratios: dict[str, list[float]] = {s: [] for s in labels}
    kept = 0
    for key in sorted(groups):
        done = [r for r in groups[key] if r.converged]
        if not done:
            log.warning("group %s has no converged run; dropped from the profile", key)
            continue
        kept += 1
        best = min(r.cpu_seconds for r in done)
        for r in done:
            ratios[r.setting].append(1.0 if r.cpu_seconds == best else r.cpu_seconds / best if best > 0 else float("inf"))
    table = {}
    for s in labels:
        vals = sorted(ratios[s])
        steps = [(1.0, sum(v <= 1.0 for v in vals) / kept if kept else 0.0)]
        for tau in sorted(set(vals)):
            if tau > 1.0:
                steps.append((tau, sum(v <= tau for v in vals) / kept))
        table[s] = steps
    return table


def profile_csv(table: dict[str, list[tuple[float, float]]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("setting", "tau", "fraction"))
    for s in sorted(table):
        for tau, frac in table[s]:
            w.writerow((s, repr(tau), repr(frac)))
    return buf.getvalue()
