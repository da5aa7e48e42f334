import csv
import hashlib
import json
import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import CacheError

log = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 1


def _hash_arrays(arrays: Dict[str, np.ndarray]) -> str:
    """Create a unique hash of a set of named arrays."""
    m = hashlib.sha256()
    for name in sorted(arrays):
        m.update(name.encode())
        m.update(np.ascontiguousarray(arrays[name]).tobytes())
    return m.hexdigest()


class PlanCacheWriter:
    """PlanCacheWriter.

    Handler class for writing precomputed plan arrays. Each plan is stored as
    an .npz file next to a json index, which records the cache key, the
    format version and a hash of the arrays.

    Parameters
    ----------
    filename : str
        A path and filename for the json index.

    Usage
    -----

    with PlanCacheWriter('/path/to/cache/index.json') as writer:
        writer.write(plan.cache_key(), plan.arrays(), metadata={'B': 257})

    """

    def __init__(self, filename: str):
        if not filename.endswith(".json"):
            raise ValueError("The cache index must be a .json file.")

        # check that the path to the filename exists
        path, _ = os.path.split(filename)
        if path and not os.path.exists(path):
            os.makedirs(path)

        self._filename = filename
        self._path = path

        # keep entries already in the index
        self._json_data = _load_index(filename)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        with open(self._filename, "w") as file:
            json.dump(self._json_data, file, separators=(",", ":"), indent=2)

    def write(
        self, key: str, arrays: Dict[str, np.ndarray], metadata: Optional[dict] = None
    ):
        """Write out the arrays of one plan."""
        dst_file = os.path.join(self._path, f"{key}.npz")
        np.savez(dst_file, **arrays)

        data = {
            "dst_file": dst_file,
            "key": key,
            "version": CACHE_FORMAT_VERSION,
            "hash": _hash_arrays(arrays),
        }
        self._json_data[key] = {**data, **(metadata or {})}
        log.info(f"Cached plan {key[:12]} in {dst_file}")


def _load_index(filename: str) -> dict:
    if not os.path.exists(filename):
        return {}
    with open(filename, "r") as file:
        return json.load(file)


class PlanCacheReader:
    """PlanCacheReader.

    Handler class for reading cached plan arrays. The hash of the loaded
    arrays is compared with the one stored in the index, so that the index
    and the arrays are known to match.

    Parameters
    ----------
    filename : str
        A path and filename for the json index.

    Usage
    -----
    cache = PlanCacheReader('/path/to/cache/index.json')
    if key in cache:
        arrays, metadata = cache[key]

    """

    def __init__(self, filename: str):
        self._filename = filename
        self._index = _load_index(filename)
        self._keys = list(self._index.keys())

        # iterator position
        self._idx = 0

    def __contains__(self, key: str) -> bool:
        entry = self._index.get(key)
        return entry is not None and entry.get("version") == CACHE_FORMAT_VERSION

    def __iter__(self):
        self._idx = 0
        return self

    def __next__(self) -> str:
        if self._idx >= len(self):
            raise StopIteration
        self._idx += 1
        return self._keys[self._idx - 1]

    def __len__(self) -> int:
        """Return the number of cached plans."""
        return len(self._keys)

    def metadata(self, key: str) -> dict:
        return dict(self._index[key])

    def __getitem__(self, key: str) -> Tuple[Dict[str, np.ndarray], dict]:
        """Get the arrays and metadata of a cached plan."""
        if key not in self:
            raise CacheError(f"No cached plan for key {key[:12]}.")
        metadata = self._index[key]

        with np.load(metadata["dst_file"]) as stored:
            arrays = {name: stored[name] for name in stored.files}

        if _hash_arrays(arrays) != metadata["hash"]:
            raise CacheError(f"Cached plan {key[:12]} does not match its hash.")
        return arrays, metadata


def clear_cache(filename: str) -> int:
    """Delete every plan listed in a cache index, and the index itself.
    Returns the number of plans removed."""
    index = _load_index(filename)
    for entry in index.values():
        if os.path.exists(entry["dst_file"]):
            os.remove(entry["dst_file"])
    if os.path.exists(filename):
        os.remove(filename)
    return len(index)


class ResultWriter:
    """ResultWriter.

    Writes experiment results as CSV: a block of `# key: value` metadata
    lines, a header row, then one row per result.

    Parameters
    ----------
    filename : str
        Destination .csv file.
    columns : list of str
        Column names.
    metadata : dict, optional
        Written as comment lines before the header.

    Usage
    -----
    with ResultWriter('snr.csv', ['nominal_snr_db', 'algorithm'], meta) as out:
        out.write({'nominal_snr_db': -30, 'algorithm': 'das'})
    """

    def __init__(
        self, filename: str, columns: Sequence[str], metadata: Optional[dict] = None
    ):
        path, _ = os.path.split(filename)
        if path and not os.path.exists(path):
            os.makedirs(path)
        self._filename = filename
        self._columns = list(columns)
        self._metadata = metadata or {}
        self._rows: List[dict] = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            log.warning(
                f"Not writing {self._filename}: run failed after {len(self._rows)} row(s)"
            )
            return
        with open(self._filename, "w", newline="") as file:
            for key, value in self._metadata.items():
                file.write(f"# {key}: {value}\n")
            writer = csv.DictWriter(file, fieldnames=self._columns)
            writer.writeheader()
            writer.writerows(self._rows)

    def write(self, row: Union[dict, Sequence]):
        if not isinstance(row, dict):
            row = dict(zip(self._columns, row))
        missing = set(self._columns) - set(row)
        if missing:
            raise ValueError(f"Result row is missing columns {sorted(missing)}.")
        self._rows.append({c: row[c] for c in self._columns})

    def extend(self, rows: Iterable[Union[dict, Sequence]]):
        for row in rows:
            self.write(row)


def read_results(filename: str) -> Tuple[dict, List[dict]]:
    """Read a results CSV written by `ResultWriter`: (metadata, rows)."""
    metadata = {}
    with open(filename, "r", newline="") as file:
        lines = file.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            metadata[key] = value
        else:
            body.append(line)
    rows = list(csv.DictReader(body))
    return metadata, rows
