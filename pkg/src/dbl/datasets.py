"""Small UCI datasets shipped with the package (CSV plus schema sidecar)."""
from __future__ import annotations

from pathlib import Path

from .dataset import RawDataset, load_csv, load_schema

DATA_DIR = Path(__file__).resolve().parent / "data"


def available() -> list[str]:
    return sorted(p.stem for p in DATA_DIR.glob("*.csv"))


def paths(name: str) -> tuple[Path, Path]:
    csv_path, meta_path = DATA_DIR / f"{name}.csv", DATA_DIR / f"{name}.json"
    if not csv_path.exists():
        raise KeyError(f"no bundled dataset {name!r}; available: {available()}")
    return csv_path, meta_path


def load_bundled(name: str) -> RawDataset:
    csv_path, meta_path = paths(name)
    return load_csv(csv_path, load_schema(meta_path))
