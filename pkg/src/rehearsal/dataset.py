"""Role-tagged observational datasets.

CSV layout: the header names every column as ``name:role`` with role one of
``context``, ``pre``, ``actionable``, ``post``, ``outcome``; every other row
holds decimal numbers. Columns must respect the block order
context < intermediate (pre / actionable / post) < outcome.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .region import PolytopeRegion


class DatasetError(ValueError):
    pass


class Role(str, enum.Enum):
    CONTEXT = "context"
    PRE = "pre"
    ACTIONABLE = "actionable"
    POST = "post"
    OUTCOME = "outcome"

    @property
    def tier(self) -> int:
        return {"context": 0, "outcome": 2}.get(self.value, 1)


@dataclass(frozen=True)
class Column:
    name: str
    role: Role


class VariableSchema:
    """Ordered, named, role-tagged columns."""

    def __init__(self, columns: Iterable[tuple[str, "Role | str"]]):
        cols = []
        for name, role in columns:
            try:
                role = Role(role)
            except ValueError:
                raise DatasetError(
                    f"column {name!r}: unknown role {role!r} "
                    f"(expected one of {', '.join(r.value for r in Role)})"
                ) from None
            cols.append(Column(str(name), role))
        self.columns: tuple[Column, ...] = tuple(cols)
        self._validate()

    def _validate(self):
        names = [c.name for c in self.columns]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise DatasetError(f"duplicate column names: {dupes}")
        for role in (Role.CONTEXT, Role.ACTIONABLE, Role.OUTCOME):
            if not self.indices(role):
                raise DatasetError(f"schema needs at least one {role.value} column")
        tiers = [c.role.tier for c in self.columns]
        if tiers != sorted(tiers):
            raise DatasetError(
                "columns must be ordered context, then pre/actionable/post, then outcome"
            )

    @classmethod
    def from_header(cls, header: Iterable[str]) -> "VariableSchema":
        cols = []
        for j, entry in enumerate(header):
            entry = entry.strip()
            if ":" not in entry:
                raise DatasetError(f"header column {j} ({entry!r}) lacks a ':role' annotation")
            name, role = entry.rsplit(":", 1)
            cols.append((name.strip(), role.strip()))
        return cls(cols)

    def header(self) -> list[str]:
        return [f"{c.name}:{c.role.value}" for c in self.columns]

    def indices(self, role: Role) -> list[int]:
        return [j for j, c in enumerate(self.columns) if c.role is role]

    def names(self, role: Optional[Role] = None) -> list[str]:
        return [c.name for c in self.columns if role is None or c.role is role]

    def dim(self, role: Role) -> int:
        return len(self.indices(role))

    def __len__(self):
        return len(self.columns)

    def __eq__(self, other):
        return isinstance(other, VariableSchema) and self.columns == other.columns

    def __repr__(self):
        return f"VariableSchema({self.header()})"


class Blocks(NamedTuple):
    X: np.ndarray
    U: np.ndarray
    A: np.ndarray
    Y: np.ndarray


class ObservationalDataset:
    """Immutable ``N x D`` matrix of observations along with its schema."""

    def __init__(self, schema: VariableSchema, data):
        data = np.array(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(schema):
            raise DatasetError(f"data shape {data.shape} does not match {len(schema)} schema columns")
        if data.shape[0] < 2:
            raise DatasetError(f"a dataset needs at least 2 rows, got {data.shape[0]}")
        bad = np.argwhere(~np.isfinite(data))
        if bad.size:
            i, j = bad[0]
            raise DatasetError(f"non-finite value at row {i}, column {schema.columns[j].name!r}")
        data.setflags(write=False)
        self.schema = schema
        self.data = data

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def block(self, role: Role) -> np.ndarray:
        return self.data[:, self.schema.indices(role)]

    def blocks(self) -> Blocks:
        """Estimator inputs: context, pre-alteration, actionable and outcome blocks.

        Post-alteration columns stay in the dataset but are excluded here.
        """
        return Blocks(
            self.block(Role.CONTEXT),
            self.block(Role.PRE),
            self.block(Role.ACTIONABLE),
            self.block(Role.OUTCOME),
        )

    def permuted(self, perm) -> "ObservationalDataset":
        return ObservationalDataset(self.schema, self.data[np.asarray(perm)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.schema.header())
        for row in self.data:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _parse_rows(lines, schema: VariableSchema, source: str) -> np.ndarray:
    rows = []
    for i, row in enumerate(lines):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(schema):
            raise DatasetError(f"{source}: data row {i} has {len(row)} cells, expected {len(schema)}")
        vals = []
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{source}: row {i}, column {schema.columns[j].name!r}: "
                    f"cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise DatasetError(
                    f"{source}: row {i}, column {schema.columns[j].name!r}: non-finite value {cell!r}"
                )
            vals.append(v)
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(len(rows), len(schema))


def load_csv(path, schema: Optional[VariableSchema] = None) -> ObservationalDataset:
    """Read a role-tagged CSV. A given ``schema`` overrides the header roles by name."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError(f"{path}: empty file") from None
    if schema is None:
        file_schema = VariableSchema.from_header(header)
    else:
        names = [h.rsplit(":", 1)[0].strip() for h in header]
        missing = [n for n in schema.names() if n not in names]
        if missing:
            raise DatasetError(f"{path}: missing columns {missing}")
        if names != schema.names():
            raise DatasetError(f"{path}: column order {names} differs from schema {schema.names()}")
        file_schema = schema
    data = _parse_rows(reader, file_schema, str(path))
    return ObservationalDataset(file_schema, data)


def positive_fraction(dataset: ObservationalDataset, region: PolytopeRegion) -> float:
    """Fraction of rows whose outcome lies in the region."""
    Y = dataset.block(Role.OUTCOME)
    if Y.shape[1] != region.d_y:
        raise DatasetError(f"region has d_y={region.d_y} but dataset has {Y.shape[1]} outcomes")
    return float(np.mean(region.contains(Y)))
