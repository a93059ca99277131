"""Two-sample summary statistics: variant records, datasets, TSV I/O.

Every variant carries its association with the exposure (``beta_x``,
``se_x``), with the outcome (``beta_y``, ``se_y``) and a flag marking it
as a member of the core set of instruments believed to be valid. Standard
errors are treated as known constants.
"""

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import DataValidationError, FormatError

COLUMNS = ("id", "beta_exposure", "se_exposure", "beta_outcome", "se_outcome", "core")

# Conventional weak-instrument heuristics; diagnostic only.
WEAK_CORE_CONCENTRATION = 10.0
WEAK_VARIANT_T = 1.0


@dataclass(frozen=True)
class VariantRecord:
    id: str
    beta_x: float
    se_x: float
    beta_y: float
    se_y: float
    is_core: bool

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id.strip():
            raise DataValidationError("variant id must be a nonempty string")
        for name in ("beta_x", "se_x", "beta_y", "se_y"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DataValidationError(f"{name} of {self.id!r} is not finite")
        if self.se_x <= 0 or self.se_y <= 0:
            raise DataValidationError(f"standard errors of {self.id!r} must be positive")


@dataclass(frozen=True)
class InstrumentSet:
    """Sorted variant positions defining one candidate estimator.

    ``k == 0`` is the core set; ``k >= 1`` is the union of the core with
    the k-th set of additional instruments.
    """

    indices: tuple
    k: int = 0

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError("instrument set contains duplicate indices")
        object.__setattr__(self, "indices", idx)

    @property
    def is_core(self):
        return self.k == 0

    @property
    def name(self):
        return "core" if self.k == 0 else f"S{self.k}"

    def __len__(self):
        return len(self.indices)

    def as_array(self):
        return np.asarray(self.indices, dtype=np.intp)


class Dataset:
    """An ordered, immutable collection of :class:`VariantRecord`.

    Numeric columns are exposed as read-only numpy arrays.
    """

    def __init__(self, variants):
        variants = tuple(variants)
        if not variants:
            raise DataValidationError("dataset has no variants")
        seen = set()
        for v in variants:
            if v.id in seen:
                raise DataValidationError(f"duplicate variant id {v.id!r}")
            seen.add(v.id)
        if not any(v.is_core for v in variants):
            raise DataValidationError("dataset has no core variants")
        self._variants = variants

    @classmethod
    def from_arrays(cls, beta_x, se_x, beta_y, se_y, core, ids=None):
        n = len(beta_x)
        if ids is None:
            ids = [f"v{i + 1}" for i in range(n)]
        columns = (beta_x, se_x, beta_y, se_y, core, ids)
        if any(len(c) != n for c in columns):
            raise ValueError("all columns must have the same length")
        return cls(
            VariantRecord(str(i), float(bx), float(sx), float(by), float(sy), bool(c))
            for bx, sx, by, sy, c, i in zip(beta_x, se_x, beta_y, se_y, core, ids)
        )

    @property
    def variants(self):
        return self._variants

    def __len__(self):
        return len(self._variants)

    def __iter__(self):
        return iter(self._variants)

    def __eq__(self, other):
        return isinstance(other, Dataset) and self._variants == other._variants

    def __hash__(self):
        return hash(self._variants)

    def __repr__(self):
        return f"Dataset(total_count={self.total_count}, core_count={self.core_count})"

    def _column(self, name, dtype=np.float64):
        arr = np.array([getattr(v, name) for v in self._variants], dtype=dtype)
        arr.flags.writeable = False
        return arr

    @cached_property
    def beta_x(self):
        return self._column("beta_x")

    @cached_property
    def se_x(self):
        return self._column("se_x")

    @cached_property
    def beta_y(self):
        return self._column("beta_y")

    @cached_property
    def se_y(self):
        return self._column("se_y")

    @cached_property
    def is_core(self):
        return self._column("is_core", dtype=bool)

    @property
    def ids(self):
        return [v.id for v in self._variants]

    @property
    def core_count(self):
        return int(self.is_core.sum())

    @property
    def total_count(self):
        return len(self._variants)

    @property
    def core_indices(self):
        return tuple(np.flatnonzero(self.is_core).tolist())

    @property
    def additional_indices(self):
        return tuple(np.flatnonzero(~self.is_core).tolist())

    def core_set(self):
        return InstrumentSet(self.core_indices, k=0)

    def full_set(self, k=1):
        return InstrumentSet(range(self.total_count), k=k)

    def union_set(self, additional, k):
        """Core set joined with the given additional-variant positions."""
        additional = set(int(i) for i in additional)
        core = set(self.core_indices)
        if additional & core:
            raise ValueError("additional indices overlap the core set")
        return self.check_set(InstrumentSet(tuple(core | additional), k=k))

    def check_set(self, iset):
        """Raise unless ``iset`` is a legal instrument set for this dataset."""
        if not iset.indices:
            raise ValueError("instrument set is empty")
        if iset.indices[0] < 0 or iset.indices[-1] >= self.total_count:
            raise ValueError("instrument set index out of range")
        if not iset.is_core and not set(self.core_indices) <= set(iset.indices):
            raise ValueError(f"candidate set {iset.name} does not contain the core set")
        return iset

    def require_selection_ready(self):
        """Selection needs at least one additional variant."""
        if self.core_count >= self.total_count:
            raise DataValidationError(
                "selection requires additional variants beyond the core set"
            )


def concentration(ds, indices):
    """Average instrument strength ``sum(beta_x^2 / se_x^2) / m`` over a set."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size == 0:
        return float("nan")
    return float(np.sum(ds.beta_x[idx] ** 2 / ds.se_x[idx] ** 2) / idx.size)


def validate(ds):
    """Return weak-instrument warnings for ``ds``. Never raises, never mutates."""
    warnings = []
    lam = concentration(ds, ds.core_indices)
    if lam < WEAK_CORE_CONCENTRATION:
        warnings.append(
            f"core concentration {lam:.4g} is below {WEAK_CORE_CONCENTRATION:g}; "
            "core instruments may be too weak"
        )
    t = np.abs(ds.beta_x) / ds.se_x
    for v, tj in zip(ds.variants, t):
        if tj < WEAK_VARIANT_T:
            warnings.append(f"variant {v.id}: |beta_exposure|/se_exposure = {tj:.3g} < 1")
    return warnings


def _open_text(source):
    if isinstance(source, (str, bytes)) and not hasattr(source, "read"):
        raise TypeError("parse_tsv expects a file object; use read_tsv for paths")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def _parse_float(text, column, lineno):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataValidationError(f"column {column!r} is not numeric: {text!r}", lineno) from None
    if not math.isfinite(value):
        raise DataValidationError(f"column {column!r} is not finite: {text!r}", lineno)
    return value


def parse_tsv(source):
    """Parse a tab-separated summary-data file into a :class:`Dataset`.

    ``source`` is a binary or text file object. Required columns are
    ``id, beta_exposure, se_exposure, beta_outcome, se_outcome, core``;
    extra columns are ignored. Line numbers in errors count the header as 1.
    """
    reader = csv.reader(_open_text(source), delimiter="\t")
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty input: expected a header line") from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise FormatError(f"missing column {missing[0]!r} in header")
    pos = {c: header.index(c) for c in COLUMNS}

    records = []
    seen = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise DataValidationError(
                f"expected {len(header)} fields, found {len(row)}", lineno
            )
        vid = row[pos["id"]].strip()
        if not vid:
            raise DataValidationError("empty id", lineno)
        if vid in seen:
            raise DataValidationError(
                f"duplicate id {vid!r} (first seen on line {seen[vid]})", lineno
            )
        seen[vid] = lineno
        bx = _parse_float(row[pos["beta_exposure"]], "beta_exposure", lineno)
        sx = _parse_float(row[pos["se_exposure"]], "se_exposure", lineno)
        by = _parse_float(row[pos["beta_outcome"]], "beta_outcome", lineno)
        sy = _parse_float(row[pos["se_outcome"]], "se_outcome", lineno)
        for column, value in (("se_exposure", sx), ("se_outcome", sy)):
            if value <= 0:
                raise DataValidationError(f"{column} must be positive, got {value!r}", lineno)
        flag = row[pos["core"]].strip()
        if flag not in ("0", "1"):
            raise DataValidationError(f"core must be 0 or 1, got {flag!r}", lineno)
        records.append(VariantRecord(vid, bx, sx, by, sy, flag == "1"))
    if not records:
        raise DataValidationError("no data lines after header")
    if not any(r.is_core for r in records):
        raise DataValidationError("no variant is flagged core=1")
    return Dataset(records)


def read_tsv(path):
    with open(path, "rb") as fh:
        return parse_tsv(fh)


def write_tsv(ds, sink):
    """Write ``ds`` to a text file object in the format read by :func:`parse_tsv`."""
    sink.write("\t".join(COLUMNS) + "\n")
    for v in ds.variants:
        fields = (v.id, repr(v.beta_x), repr(v.se_x), repr(v.beta_y), repr(v.se_y),
                  "1" if v.is_core else "0")
        sink.write("\t".join(fields) + "\n")


def to_tsv_string(ds):
    buf = io.StringIO()
    write_tsv(ds, buf)
    return buf.getvalue()
