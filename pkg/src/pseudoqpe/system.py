"""System descriptions: bundled cells and user cell files."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError
from .lattice import (Atom, MillerGrid, ReciprocalGeometry, SimulationCell, classify_gramian,
                      reciprocal_geometry, tile_supercell)
from .pseudopotential import GthSpecies, data_dir

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class SystemSpec:
    name: str
    cell: SimulationCell
    counts: dict
    eta: int
    bits: tuple[int, int, int]
    deltas: tuple[int, int, int] = (0, 0, 0)
    b: int = 20
    b_r: int = 7
    interp: str = "linear:256"
    arith_case: str | None = None
    title: str = ""
    grids: tuple = field(default=())

    def __post_init__(self):
        bits = MillerGrid(self.bits).bits
        object.__setattr__(self, "bits", bits)
        if self.eta < 1:
            raise InputError("eta must be at least 1")
        if not self.counts or min(self.counts.values()) < 1:
            raise InputError("every species needs at least one nucleus")
        if self.b < max(bits) + 2:
            raise InputError(f"b={self.b} must be at least max(n)+2={max(bits) + 2}")

    @property
    def grid(self) -> MillerGrid:
        return MillerGrid(self.bits)

    def geometry(self) -> ReciprocalGeometry:
        return reciprocal_geometry(self.cell)

    def case(self) -> str:
        return self.arith_case or classify_gramian(self.geometry().gramian)


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc), getattr(exc, "lineno", None)) from exc


def bundled_cells() -> dict[str, dict]:
    return _read_toml(data_dir() / "cells.toml")["cells"]


def valence_electrons(counts: dict, table: dict[str, GthSpecies]) -> int:
    total = 0.0
    for label, n in counts.items():
        if label not in table:
            raise InputError(f"no pseudopotential for species {label!r}")
        total += n * table[label].z_ion
    return int(round(total))


def _triple(value, what: str) -> tuple[int, int, int]:
    try:
        out = tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what} must be three integers") from exc
    if len(out) != 3:
        raise InputError(f"{what} must be three integers")
    return out


def parse_bits(text: str) -> tuple[int, int, int]:
    """'6,6,7' or '6' (all axes)."""
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) == 1:
        parts *= 3
    return _triple(parts, "bits")


def from_bundled(name: str, bits=None, b: int = 20, b_r: int = 7, interp: str = "linear:256",
                 extra_counts: dict | None = None, extra_eta: int = 0) -> SystemSpec:
    cells = bundled_cells()
    if name not in cells:
        raise InputError(f"unknown bundled cell {name!r}; choose from {sorted(cells)}")
    entry = cells[name]
    grids = tuple(tuple(g) for g in entry.get("bits", ()))
    if bits is None:
        if not grids:
            raise InputError(f"cell {name!r} lists no grid; pass bits")
        bits = grids[0]
    counts = dict(entry["counts"])
    for k, v in (extra_counts or {}).items():
        counts[k] = counts.get(k, 0) + int(v)
    return SystemSpec(name=name, cell=SimulationCell(np.array(entry["lattice"])), counts=counts,
                      eta=int(entry["eta"]) + int(extra_eta), bits=_triple(bits, "bits"),
                      deltas=_triple(entry.get("deltas", (0, 0, 0)), "deltas"), b=b, b_r=b_r,
                      interp=interp, arith_case=entry.get("arith_case"),
                      title=entry.get("title", name), grids=grids)


def from_file(path, table: dict[str, GthSpecies], bits=None, b: int = 20, b_r: int = 7,
              interp: str = "linear:256") -> SystemSpec:
    """Load a cell file.

    Keys: ``lattice`` (rows, Bohr), ``atoms`` (list of {species, position}),
    optional ``supercell`` repetitions, ``eta`` (default: sum of valence
    charges), ``deltas``, ``bits`` and ``arith_case``.
    """
    path = Path(path)
    doc = _read_toml(path)
    if "lattice" not in doc:
        raise InputError(f"{path}: missing 'lattice'")
    atoms = []
    for k, a in enumerate(doc.get("atoms", [])):
        try:
            atoms.append(Atom(str(a["species"]), tuple(float(v) for v in a["position"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: atom {k} needs 'species' and a 3-vector 'position'") from exc
    cell = SimulationCell(np.array(doc["lattice"], dtype=float), tuple(atoms))
    if "supercell" in doc:
        cell = tile_supercell(cell, _triple(doc["supercell"], "supercell"))
    counts = cell.species_counts()
    if "counts" in doc and not atoms:
        counts = {str(k): int(v) for k, v in doc["counts"].items()}
    if not counts:
        raise InputError(f"{path}: no atoms")
    eta = int(doc["eta"]) if "eta" in doc else valence_electrons(counts, table)
    if bits is None:
        if "bits" not in doc:
            raise InputError(f"{path}: no grid bits given")
        bits = doc["bits"]
    return SystemSpec(name=doc.get("name", path.stem), cell=cell, counts=counts, eta=eta,
                      bits=_triple(bits, "bits"), deltas=_triple(doc.get("deltas", (0, 0, 0)), "deltas"),
                      b=b, b_r=b_r, interp=interp, arith_case=doc.get("arith_case"),
                      title=doc.get("title", path.stem))
