"""Matched-seed revenue comparisons across policies and sweep points."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from ..config import Policy, SimConfig, SweepConfig
from ..exceptions import SweepMismatchError
from ..utils.parallel import parallel_map
from .engine import run
from .metrics import RunMetrics, run_dir_name

logger = logging.getLogger(__name__)

# Settings every comparison may vary
IMPLICIT_DIMENSIONS = ("policy", "seed")

RUN_COLUMNS = ["point", "policy", "seed", "total_revenue", "trips", "per_trip_mean", "run_id"]
RATIO_COLUMNS = ["point", "policy", "baseline", "seeds", "revenue", "baseline_revenue", "ratio"]


@dataclass
class Comparison:
    """Outcome of ``compare_runs``.

    Attributes:
        runs: One row per simulation
        ratios: Revenue ratio of each policy to the baseline per sweep point
        dimensions: Declared sweep dimensions, in the order used for ``point``
    """
    runs: pd.DataFrame
    ratios: pd.DataFrame
    dimensions: List[str]

    def ratio(self, policy: Union[Policy, str], point: str = "") -> float:
        """Ratio of one policy at one sweep point."""
        value = Policy(policy).value
        rows = self.ratios[(self.ratios["policy"] == value) & (self.ratios["point"] == point)]
        if rows.empty:
            raise KeyError(f"No ratio for policy '{value}' at point '{point}'")
        return float(rows["ratio"].iloc[0])

    def export(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.runs.to_csv(directory / "runs.csv", index=False)
        self.ratios.to_csv(directory / "comparison.csv", index=False)
        return directory


def point_label(flat: Dict[str, Any], dimensions: Sequence[str]) -> str:
    """Readable key of a sweep point, e.g. ``game.comm_radius=2.0``."""
    return ",".join(f"{d}={flat.get(d)}" for d in dimensions)


def check_sweep(cfgs: Sequence[SimConfig], dimensions: Sequence[str] = ()) -> None:
    """Check that configs differ only in declared dimensions, policy and seed.

    Raises:
        SweepMismatchError: Naming the settings that differ
    """
    if not cfgs:
        return
    allowed = set(dimensions) | set(IMPLICIT_DIMENSIONS)
    flats = [c.flatten() for c in cfgs]
    keys = set().union(*flats)
    differing = sorted(
        k for k in keys if k not in allowed and any(f.get(k) != flats[0].get(k) for f in flats[1:])
    )
    if differing:
        raise SweepMismatchError(
            f"Configurations differ outside the sweep dimensions: {', '.join(differing)}"
        )


def compare_runs(
    cfgs: Sequence[SimConfig],
    baseline: Optional[Union[Policy, str]] = None,
    dimensions: Sequence[str] = (),
    runner: Callable[[SimConfig], RunMetrics] = run,
    max_workers: Optional[int] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> Comparison:
    """Run every config and compare revenue against a baseline policy.

    At each sweep point, a policy's ratio is its total revenue summed over
    the seeds it shares with the baseline, divided by the baseline's total
    over the same seeds. Runs are independent and execute on
    ``parallel_map``.

    Args:
        cfgs: Configurations to run
        baseline: Denominator policy (default: policy of the first config)
        dimensions: Dotted settings allowed to differ between sweep points
        runner: Simulation function
        max_workers: Thread cap (None: FLEETRL_THREADS)
        out_dir: When given, each run's metrics are exported under it

    Returns:
        Comparison with per-run and per-point tables

    Raises:
        SweepMismatchError: If configs differ outside ``dimensions``
        ValueError: If no configs are given or the baseline never ran
    """
    if not cfgs:
        raise ValueError("compare_runs needs at least one configuration")
    dims = list(dimensions)
    check_sweep(cfgs, dims)
    base_policy = Policy(baseline).value if baseline is not None else cfgs[0].policy.value
    if base_policy not in {c.policy.value for c in cfgs}:
        raise ValueError(f"Baseline policy '{base_policy}' is not among the compared runs")

    logger.info(f"Comparing {len(cfgs)} runs against '{base_policy}'")
    results = parallel_map(runner, cfgs, max_workers=max_workers)

    rows = []
    for cfg, metrics in zip(cfgs, results):
        if out_dir is not None:
            metrics.export(Path(out_dir) / run_dir_name(cfg))
        rows.append(
            {
                "point": point_label(cfg.flatten(), dims),
                "policy": cfg.policy.value,
                "seed": cfg.seed,
                "total_revenue": metrics.total_revenue,
                "trips": len(metrics.trips),
                "per_trip_mean": metrics.per_trip_mean,
                "run_id": metrics.run_id,
            }
        )
    runs = pd.DataFrame(rows, columns=RUN_COLUMNS)
    return Comparison(runs, _ratios(runs, base_policy), dims)


def _ratios(runs: pd.DataFrame, baseline: str) -> pd.DataFrame:
    revenue: Dict[Tuple[str, str], Dict[int, float]] = {}
    for row in runs.itertuples(index=False):
        revenue.setdefault((row.point, row.policy), {})[int(row.seed)] = float(row.total_revenue)

    rows = []
    for (point, policy), by_seed in revenue.items():
        base = revenue.get((point, baseline), {})
        seeds = sorted(set(by_seed) & set(base))
        total = sum(by_seed[s] for s in seeds)
        base_total = sum(base[s] for s in seeds)
        if not seeds:
            logger.warning(f"No seeds shared with the baseline for '{policy}' at '{point}'")
        ratio = total / base_total if base_total > 0 else float("nan")
        rows.append(
            {
                "point": point,
                "policy": policy,
                "baseline": baseline,
                "seeds": len(seeds),
                "revenue": total,
                "baseline_revenue": base_total,
                "ratio": ratio,
            }
        )
    return pd.DataFrame(rows, columns=RATIO_COLUMNS)


def run_sweep(
    sweep: SweepConfig,
    runner: Callable[[SimConfig], RunMetrics] = run,
    max_workers: Optional[int] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> Comparison:
    """Expand a sweep and compare every policy against its baseline."""
    return compare_runs(
        sweep.expand(),
        baseline=sweep.baseline,
        dimensions=list(sweep.dimensions),
        runner=runner,
        max_workers=max_workers,
        out_dir=out_dir,
    )
