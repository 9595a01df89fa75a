"""Reader for the flat ``key = value`` text files used for constants, donor
presets and run configurations.

Lines starting with ``#`` are comments, trailing ``# ...`` is stripped, blank
lines are ignored.  A line ``include = NAME`` splices another file in place;
``NAME`` is resolved relative to the including file first, then against the
packaged data directory (so ``include = bismuth.donor`` works anywhere).
Later keys override earlier ones.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path


class KVError(ValueError):
    """Malformed key-value file."""


def data_path(name: str) -> Path:
    return Path(str(resources.files("owpcce") / "data" / name))


def _resolve(name: str, base: Path | None) -> Path:
    candidates = []
    if base is not None:
        candidates.append(base / name)
    candidates.append(Path(name))
    candidates.append(data_path(name))
    for c in candidates:
        if c.is_file():
            return c
    raise KVError(f"cannot find included file {name!r}")


def parse_text(text: str, base: Path | None = None, _depth: int = 0) -> dict[str, str]:
    if _depth > 8:
        raise KVError("include nesting too deep")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KVError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise KVError(f"line {lineno}: empty key")
        if key == "include":
            path = _resolve(value, base)
            out.update(parse_text(path.read_text(), path.parent, _depth + 1))
        else:
            out[key] = value
    return out


def read_kv(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        path = _resolve(str(path), None)
    return parse_text(path.read_text(), path.parent)
