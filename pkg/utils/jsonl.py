#!/usr/bin/env python3
"""
Line-oriented JSON helpers shared by the trace, index, label and log files
"""

import json
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, TypeVar, Union

from errors import TraceParseError

T = TypeVar("T")
PathLike = Union[str, Path]


def dumps_line(obj: Dict[str, Any]) -> str:
    """Serialize one record compactly; key order is the dict's insertion order"""
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def write_lines(path: PathLike, records: Iterable[Dict[str, Any]]) -> int:
    """Write records as JSON Lines and return the number written"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(dumps_line(record))
            f.write("\n")
            count += 1
    return count


def iter_lines(path: PathLike, parse: Callable[[Dict[str, Any]], T]) -> Iterator[T]:
    """
    Stream parsed records from a JSON Lines file.

    Blank lines are skipped. Any decoding or conversion failure is raised as a
    TraceParseError carrying the 1-based line number (0 when the file
    cannot be opened).
    """
    path = Path(path)
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise TraceParseError(str(path), 0, f"cannot open file ({e.strerror})") from e
    with f:
        for line_no, line in enumerate(f, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise TraceParseError(str(path), line_no, f"invalid JSON ({e.msg})") from e
            if not isinstance(data, dict):
                raise TraceParseError(str(path), line_no, "expected a JSON object")
            try:
                yield parse(data)
            except TraceParseError:
                raise
            except (KeyError, TypeError, ValueError) as e:
                raise TraceParseError(str(path), line_no, _describe(e)) from e


def read_lines(path: PathLike, parse: Callable[[Dict[str, Any]], T]) -> List[T]:
    """Read a whole JSON Lines file into a list"""
    return list(iter_lines(path, parse))


def _describe(error: Exception) -> str:
    if isinstance(error, KeyError):
        return f"missing field {error.args[0]!r}"
    return str(error) or error.__class__.__name__
