"""300W-style .pts landmark files.

    version: 1
    n_points: 68
    {
    x y
    ...
    }

Parsing tolerates extra whitespace and blank lines; emission is canonical
(shortest round-tripping float repr), so emit -> parse -> emit is stable.
"""
import os
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core.errors import PtsParseError
from ..models.landmarks import LandmarkSet


def _header_value(line: str, key: str, line_number: int, path: Optional[str]) -> str:
    name, sep, value = line.partition(':')
    if not sep or name.strip().lower() != key:
        raise PtsParseError(f"expected '{key}: <value>', got {line!r}", line_number, path)
    return value.strip()


def parse_pts(text: str, path: Optional[str] = None) -> LandmarkSet:
    lines = [(number, raw.strip()) for number, raw in enumerate(text.splitlines(), start=1)]
    lines = [(number, line) for number, line in lines if line]
    if len(lines) < 3:
        last = lines[-1][0] if lines else 1
        raise PtsParseError("file too short for a pts header", last, path)

    number, line = lines[0]
    version = _header_value(line, 'version', number, path)
    if version not in ('1', '1.0'):
        raise PtsParseError(f"unsupported version {version!r}", number, path)

    number, line = lines[1]
    raw_count = _header_value(line, 'n_points', number, path)
    try:
        count = int(raw_count)
    except ValueError:
        raise PtsParseError(f"n_points must be an integer, got {raw_count!r}", number, path)
    if count < 0:
        raise PtsParseError("n_points cannot be negative", number, path)

    number, line = lines[2]
    if line != '{':
        raise PtsParseError(f"expected '{{', got {line!r}", number, path)

    body = lines[3:]
    if len(body) < count + 1:
        last = body[-1][0] if body else number
        raise PtsParseError(f"expected {count} points and '}}', file ends early", last, path)

    points = np.zeros((count, 2), dtype=np.float64)
    for index, (number, line) in enumerate(body[:count]):
        fields = line.split()
        if len(fields) != 2:
            raise PtsParseError(f"expected 'x y', got {line!r}", number, path)
        try:
            points[index] = [float(fields[0]), float(fields[1])]
        except ValueError:
            raise PtsParseError(f"non-numeric coordinate in {line!r}", number, path)
        if not np.all(np.isfinite(points[index])):
            raise PtsParseError(f"non-finite coordinate in {line!r}", number, path)

    number, line = body[count]
    if line != '}':
        raise PtsParseError(f"expected '}}' after {count} points, got {line!r}", number, path)
    if len(body) > count + 1:
        raise PtsParseError("unexpected content after '}'", body[count + 1][0], path)
    return LandmarkSet(points)


def format_pts(lms: LandmarkSet) -> str:
    lines = ["version: 1", f"n_points: {lms.n}", "{"]
    lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in lms.points)
    lines.append("}")
    return "\n".join(lines) + "\n"


def read_pts(path: Union[str, Path]) -> LandmarkSet:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_pts(f.read(), path=os.fspath(path))


def write_pts(path: Union[str, Path], lms: LandmarkSet):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(format_pts(lms))
