import dataclasses
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Optional, Set, Union

from .env import BvpSpec, Workspace
from .solver import GuidanceField, PotentialField, SolverConfig, rebuild_field, solve
from .storage import atomic_write_text, format_field_csv, read_field_csv

DEFAULT_CACHE_DIR = os.path.join("~", ".cache", "hpfnav")


def default_cache_dir() -> Path:
    return Path(os.path.expanduser(os.getenv("HPFNAV_CACHE", DEFAULT_CACHE_DIR)))


def field_key(ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> str:
    """Content hash of everything that determines a solved field."""
    payload = {
        "rows": ws.to_rows(),
        "cell_size": ws.cell_size,
        "origin": list(ws.origin),
        "gamma": ws.gamma_rows_top_first(),
        "bvp": {k: (v.value if hasattr(v, "value") else v) for k, v in dataclasses.asdict(bvp).items()},
        "solver": dataclasses.asdict(cfg),
    }
    canonical = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class FieldCache:
    def __init__(self, cache_dir: Optional[Union[str, Path]] = None):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.cache_dir / "index.json"
        self.hashes: Set[str] = set()
        self.load()

    def load(self):
        """Loads the registry of cached field hashes."""
        if self.index_path.exists():
            try:
                with open(self.index_path, "r", encoding="utf-8") as f:
                    data = json.load(f)
                if isinstance(data, list):
                    self.hashes = set(data)
                else:
                    logging.warning("Cache index format invalid, starting fresh.")
            except Exception as e:
                logging.error(f"Failed to load cache index: {e}")

    def save(self):
        try:
            atomic_write_text(self.index_path, json.dumps(sorted(self.hashes)))
        except OSError as e:
            logging.error(f"Failed to save cache index: {e}")

    def _load_entry(self, key: str, ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> Optional[PotentialField]:
        try:
            width, height, cell_size, values = read_field_csv(self.cache_dir / f"{key}.csv")
            with open(self.cache_dir / f"{key}.json", "r", encoding="utf-8") as f:
                meta = json.load(f)
            if (width, height) != (ws.width_cells, ws.height_cells) or cell_size != ws.cell_size:
                raise ValueError("cached field has the wrong shape")
            field = rebuild_field(ws, bvp, cfg, values, meta["iterations_used"],
                                  meta["picard_converged"], meta["picard_iterations"])
        except Exception as e:
            logging.warning(f"Discarding corrupted cache entry {key[:12]}: {e}")
            return None
        if not field.residual <= cfg.tolerance:
            logging.warning(f"Discarding cache entry {key[:12]}: residual {field.residual:.3e} above tolerance")
            return None
        return field

    def store(self, key: str, field: PotentialField):
        try:
            atomic_write_text(self.cache_dir / f"{key}.csv", format_field_csv(field))
            meta = {
                "iterations_used": field.iterations_used,
                "residual": field.residual,
                "picard_converged": field.picard_converged,
                "picard_iterations": field.picard_iterations,
            }
            atomic_write_text(self.cache_dir / f"{key}.json", json.dumps(meta, indent=2))
        except OSError as e:
            logging.error(f"Failed to write cache entry {key[:12]}: {e}")
            return
        self.hashes.add(key)
        self.save()

    def get_or_solve(self, ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> GuidanceField:
        if bvp.kind.is_analytic:
            return solve(ws, bvp, cfg)
        key = field_key(ws, bvp, cfg)
        if key in self.hashes:
            field = self._load_entry(key, ws, bvp, cfg)
            if field is not None:
                logging.info(f"Loaded cached field {key[:12]}")
                return field
            self.hashes.discard(key)
        field = solve(ws, bvp, cfg)
        self.store(key, field)
        return field
