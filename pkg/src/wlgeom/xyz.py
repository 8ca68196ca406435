"""Extended-XYZ reader/writer restricted to orthorhombic cells.

Header line example::

    Lattice="4.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0 0.0" Properties=species:S:1:pos:R:3 pbc="T F F"

Open axes are written with a zero lattice vector and ``F`` in ``pbc``.
Coordinates are written with ``repr`` so a round trip is bit-exact.
"""

from __future__ import annotations

import shlex
from pathlib import Path

import numpy as np

from .errors import ParseError, UnsupportedLatticeError
from .geometry import LabeledPointCloud

PROPERTIES = "species:S:1:pos:R:3"


def _fmt(x: float) -> str:
    return repr(float(x))


def format_xyz(cloud: LabeledPointCloud) -> str:
    fields = []
    if cloud.is_periodic:
        lattice = np.zeros((3, 3))
        for a, p in enumerate(cloud.cell):
            if p is not None:
                lattice[a, a] = p
        fields.append('Lattice="' + " ".join(_fmt(v) for v in lattice.ravel()) + '"')
    fields.append(f"Properties={PROPERTIES}")
    pbc = " ".join("T" if p is not None else "F" for p in cloud.cell)
    fields.append(f'pbc="{pbc}"')
    if cloud.metadata:
        fields.append("comment=" + shlex.quote(cloud.metadata))
    lines = [str(len(cloud)), " ".join(fields)]
    for lab, (x, y, z) in zip(cloud.labels, cloud.positions):
        lines.append(f"{lab} {_fmt(x)} {_fmt(y)} {_fmt(z)}")
    return "\n".join(lines) + "\n"


def write_xyz(cloud: LabeledPointCloud, path) -> None:
    Path(path).write_text(format_xyz(cloud))


def _parse_header(line: str, lineno: int) -> dict:
    try:
        tokens = shlex.split(line)
    except ValueError as exc:
        raise ParseError(f"unbalanced quotes in header: {exc}", lineno) from None
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(f"expected key=value, got {tok!r}", lineno)
        key, value = tok.split("=", 1)
        out[key] = value
    return out


def _parse_properties(spec: str, lineno: int) -> tuple[int, int, int]:
    """Column of species, first column of positions, total column count."""
    parts = spec.split(":")
    if len(parts) % 3:
        raise ParseError(f"malformed Properties {spec!r}", lineno)
    col = 0
    species = pos = None
    for name, kind, count in zip(parts[::3], parts[1::3], parts[2::3]):
        try:
            count = int(count)
        except ValueError:
            raise ParseError(f"bad column count in Properties {spec!r}", lineno) from None
        if name == "species":
            species = col
        elif name == "pos":
            if kind != "R" or count != 3:
                raise ParseError("pos must be R:3", lineno)
            pos = col
        col += count
    if species is None or pos is None:
        raise ParseError("Properties must include species and pos", lineno)
    return species, pos, col


def parse_xyz(text: str) -> LabeledPointCloud:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing atom count", 1)
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"atom count must be an integer, got {lines[0].strip()!r}", 1) from None
    if n < 0:
        raise ParseError("atom count must be >= 0", 1)
    if len(lines) < 2:
        raise ParseError("missing comment line", 2)
    header = _parse_header(lines[1], 2)
    species_col, pos_col, ncols = _parse_properties(header.get("Properties", PROPERTIES), 2)

    pbc = [False, False, False]
    if "pbc" in header:
        flags = header["pbc"].split()
        if len(flags) != 3 or any(f not in ("T", "F", "True", "False") for f in flags):
            raise ParseError(f"pbc must hold three T/F flags, got {header['pbc']!r}", 2)
        pbc = [f in ("T", "True") for f in flags]
    cell = [None, None, None]
    if "Lattice" in header:
        try:
            lat = np.array([float(v) for v in header["Lattice"].split()])
        except ValueError:
            raise ParseError("Lattice entries must be numbers", 2) from None
        if lat.size != 9:
            raise ParseError("Lattice needs 9 numbers", 2)
        lat = lat.reshape(3, 3)
        if np.any(lat[~np.eye(3, dtype=bool)] != 0):
            raise UnsupportedLatticeError("only orthorhombic (diagonal) lattices are supported", 2)
        if "pbc" not in header:
            pbc = [True, True, True]
        for a in range(3):
            if pbc[a]:
                if lat[a, a] <= 0:
                    raise ParseError(f"periodic axis {a} needs a positive lattice length", 2)
                cell[a] = float(lat[a, a])
    elif any(pbc):
        raise ParseError("pbc set without Lattice", 2)

    if len(lines) < 2 + n:
        raise ParseError(f"expected {n} atom lines, found {len(lines) - 2}", len(lines) + 1)
    labels, pos = [], []
    for k in range(n):
        lineno = k + 3
        cols = lines[k + 2].split()
        if len(cols) < ncols:
            raise ParseError(f"expected {ncols} columns, got {len(cols)}", lineno)
        labels.append(cols[species_col])
        try:
            pos.append([float(c) for c in cols[pos_col:pos_col + 3]])
        except ValueError:
            raise ParseError("coordinates must be numbers", lineno) from None
    return LabeledPointCloud(labels, np.array(pos).reshape(-1, 3), tuple(cell), header.get("comment", ""))


def read_xyz(path) -> LabeledPointCloud:
    return parse_xyz(Path(path).read_text())
