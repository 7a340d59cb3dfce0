import asyncio
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from .cache import FieldCache, field_key
from .errors import HpfNavError, ScenarioValidationError
from .scenario import apply_overrides, scenario_from_dict
from .simulator import run
from .storage import Storage

SUMMARY_COLUMNS = ("converged", "convergence_time", "max_deviation", "min_clearance", "diverged")


@dataclass(frozen=True)
class Axis:
    key: str
    values: Tuple[Any, ...]

    def overrides(self) -> List[str]:
        return [f"{self.key}={json.dumps(v)}" for v in self.values]


def parse_axis(text: str) -> Axis:
    """'controller.K1=1,2,4' -> Axis('controller.K1', (1, 2, 4))."""
    key, sep, raw = text.partition("=")
    if not sep or not key or not raw:
        raise ScenarioValidationError(f"axis '{text}' is not of the form key=v1,v2,...", text)
    values = []
    for item in raw.split(","):
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return Axis(key, tuple(values))


def sweep_points(axes: Sequence[Axis]) -> List[List[str]]:
    """Override lists of the full grid, first axis varying slowest."""
    return [list(combo) for combo in itertools.product(*(a.overrides() for a in axes))]


def run_point(doc: dict, overrides: List[str], cache_dir: Optional[str]) -> Dict[str, Any]:
    """One sweep point; picklable so it can run in a worker process."""
    try:
        sc = scenario_from_dict(apply_overrides(doc, overrides))
        field = FieldCache(cache_dir).get_or_solve(sc.workspace, sc.bvp, sc.solver)
        _, metrics = run(sc, field)
    except HpfNavError as e:
        logging.error(f"Sweep point {overrides} failed: {e}")
        return {"converged": False, "convergence_time": None, "max_deviation": None,
                "min_clearance": None, "diverged": None}
    return {name: getattr(metrics, name) for name in SUMMARY_COLUMNS}


class SweepCollector:
    def __init__(self, storage: Storage, jobs: int = 1, cache_dir: Optional[Union[str, Path]] = None,
                 summary_name: str = "summary.csv"):
        self.storage = storage
        self.jobs = max(1, jobs)
        self.cache_dir = str(cache_dir) if cache_dir is not None else None
        self.summary_name = summary_name
        self.stop_event = asyncio.Event()

    def prepare(self, doc: dict, points: List[List[str]]):
        """Validates every point and solves each distinct field once, before fanning out."""
        cache = FieldCache(self.cache_dir)
        seen = set()
        for overrides in points:
            sc = scenario_from_dict(apply_overrides(doc, overrides))
            if sc.bvp.kind.is_analytic:
                continue
            key = field_key(sc.workspace, sc.bvp, sc.solver)
            if key not in seen:
                seen.add(key)
                cache.get_or_solve(sc.workspace, sc.bvp, sc.solver)
        logging.info(f"Sweep of {len(points)} points uses {len(seen)} distinct fields")

    async def collect(self, doc: dict, axes: Sequence[Axis]) -> List[Dict[str, Any]]:
        self.stop_event.clear()
        points = sweep_points(axes)
        self.prepare(doc, points)
        header = [a.key for a in axes] + list(SUMMARY_COLUMNS)
        await self.storage.start_table(self.summary_name, header)

        loop = asyncio.get_running_loop()
        semaphore = asyncio.Semaphore(self.jobs)
        executor = ProcessPoolExecutor(max_workers=self.jobs) if self.jobs > 1 else None

        async def worker(idx: int, overrides: List[str]):
            async with semaphore:
                if self.stop_event.is_set():
                    return idx, None
                row = await loop.run_in_executor(executor, run_point, doc, overrides, self.cache_dir)
                return idx, row

        results: Dict[int, Dict[str, Any]] = {}
        next_row = 0
        try:
            tasks = [asyncio.ensure_future(worker(k, o)) for k, o in enumerate(points)]
            with tqdm(total=len(points), desc="sweep", unit="run") as bar:
                for fut in asyncio.as_completed(tasks):
                    idx, row = await fut
                    bar.update(1)
                    if row is None:
                        continue
                    results[idx] = row
                    # rows go out in sweep order regardless of completion order
                    while next_row in results:
                        values = [json.loads(o.partition("=")[2]) for o in points[next_row]]
                        values += [results[next_row][name] for name in SUMMARY_COLUMNS]
                        await self.storage.append_row(self.summary_name, values)
                        next_row += 1
        finally:
            if executor is not None:
                executor.shutdown()
        logging.info(f"Sweep finished: {len(results)} of {len(points)} points")
        return [results[k] for k in sorted(results)]
