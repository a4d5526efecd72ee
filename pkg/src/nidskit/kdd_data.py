"""KDD-format connection-record ingestion.

The input is the classic comma-separated connection-record format: 41
feature fields (38 numeric, 3 symbolic) followed by an attack label,
optionally ending in '.'.  Raw labels are grouped into five traffic
classes (normal plus the four attack families), using the canonical
taxonomy shipped with the benchmark's ``training_attack_types`` file.

Loading is columnar (one numpy array per numeric column) so the full
~494k-row benchmark file stays cheap to hold; ``KddRecord`` objects are
materialized on demand for row-level work.
"""

import gzip
import io
import os
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

# 41 feature columns, in file order.  Indices 1-3 are symbolic.
COLUMN_NAMES = [
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
    "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files",
    "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate",
    "srv_rerror_rate", "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate",
    "dst_host_count", "dst_host_srv_count", "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
]
LABEL_FIELD = "label"
N_FIELDS = len(COLUMN_NAMES) + 1  # 42 comma-separated tokens per line

CATEGORICAL_INDICES = (1, 2, 3)
CATEGORICAL_NAMES = tuple(COLUMN_NAMES[i] for i in CATEGORICAL_INDICES)

# Fraction-valued columns, validated to lie in [0, 1].
RATE_NAMES = frozenset(n for n in COLUMN_NAMES if n.endswith("_rate"))

NUMERIC_NAMES = tuple(n for n in COLUMN_NAMES if n not in CATEGORICAL_NAMES)
NUMERIC_INDICES = tuple(i for i, n in enumerate(COLUMN_NAMES) if n not in CATEGORICAL_NAMES)


class AttackClass(IntEnum):
    """Five-way traffic class with fixed integer codes."""

    NORMAL = 0
    DOS = 1
    PROBE = 2
    R2L = 3
    U2R = 4


CLASS_NAMES = tuple(c.name.lower() for c in AttackClass)

# Canonical label -> family grouping for the 23 labels of the 10% benchmark
# file (the dataset's own training_attack_types taxonomy).
LABEL_TO_CLASS = {
    "normal": AttackClass.NORMAL,
    # denial of service
    "back": AttackClass.DOS,
    "land": AttackClass.DOS,
    "neptune": AttackClass.DOS,
    "pod": AttackClass.DOS,
    "smurf": AttackClass.DOS,
    "teardrop": AttackClass.DOS,
    # probing / scanning
    "ipsweep": AttackClass.PROBE,
    "nmap": AttackClass.PROBE,
    "portsweep": AttackClass.PROBE,
    "satan": AttackClass.PROBE,
    # remote-to-local
    "ftp_write": AttackClass.R2L,
    "guess_passwd": AttackClass.R2L,
    "imap": AttackClass.R2L,
    "multihop": AttackClass.R2L,
    "phf": AttackClass.R2L,
    "spy": AttackClass.R2L,
    "warezclient": AttackClass.R2L,
    "warezmaster": AttackClass.R2L,
    # user-to-root
    "buffer_overflow": AttackClass.U2R,
    "loadmodule": AttackClass.U2R,
    "perl": AttackClass.U2R,
    "rootkit": AttackClass.U2R,
}


class FieldCountError(DataError):
    """A record does not have exactly 42 comma-separated fields."""


class NumericParseError(DataError):
    """A numeric slot holds a non-numeric, non-empty token."""

    def __init__(self, message, column=None, line=None):
        super().__init__(message)
        self.column = column
        self.line = line


class FieldRangeError(DataError):
    """A numeric value violates its column's range (rates in [0,1], counts >= 0)."""

    def __init__(self, message, column=None, line=None):
        super().__init__(message)
        self.column = column
        self.line = line


class UnknownLabelError(DataError):
    """The record label is not one of the 23 known labels."""


class IoError(DataError):
    """The dataset file cannot be read."""


@dataclass(frozen=True)
class KddRecord:
    """One parsed connection record.

    ``numeric`` holds the 38 numeric fields in file order; missing values
    (empty tokens in the source) are NaN.  Symbolic fields keep their raw
    strings; a missing symbolic field is the empty string.
    """

    numeric: tuple
    protocol_type: str
    service: str
    flag: str
    raw_label: str

    def field(self, name: str):
        if name in CATEGORICAL_NAMES:
            return getattr(self, name)
        return self.numeric[NUMERIC_NAMES.index(name)]

    def fields(self) -> list:
        """All 41 feature values in file order."""
        out = []
        num_it = iter(self.numeric)
        for name in COLUMN_NAMES:
            out.append(getattr(self, name) if name in CATEGORICAL_NAMES else next(num_it))
        return out

    def to_line(self) -> str:
        """Serialize back to the comma-separated format (label with trailing '.')."""
        return ",".join(_format_field(v) for v in self.fields()) + f",{self.raw_label}."


def _format_field(v) -> str:
    if isinstance(v, str):
        return v
    if v != v:  # NaN: missing value, empty token
        return ""
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def _check_range(name: str, value: float, column: int, line=None) -> None:
    if value != value:  # missing
        return
    if name in RATE_NAMES:
        if not 0.0 <= value <= 1.0:
            raise FieldRangeError(
                f"column {column} ({name}) must lie in [0,1], got {value!r}"
                + (f" (line {line})" if line else ""),
                column=column, line=line)
    elif value < 0.0:
        raise FieldRangeError(
            f"column {column} ({name}) must be non-negative, got {value!r}"
            + (f" (line {line})" if line else ""),
            column=column, line=line)


def parse_record(line: str) -> KddRecord:
    """Parse one comma-separated record line into a typed KddRecord."""
    tokens = line.strip().split(",")
    if len(tokens) != N_FIELDS:
        raise FieldCountError(
            f"expected {N_FIELDS} comma-separated fields, got {len(tokens)}")
    numeric = []
    for col, name in enumerate(COLUMN_NAMES):
        tok = tokens[col].strip()
        if name in CATEGORICAL_NAMES:
            continue
        if tok == "":
            numeric.append(float("nan"))
            continue
        try:
            value = float(tok)
        except ValueError:
            raise NumericParseError(
                f"column {col} ({name}) expects a number, got {tok!r}", column=col) from None
        _check_range(name, value, col)
        numeric.append(value)
    return KddRecord(
        numeric=tuple(numeric),
        protocol_type=tokens[1].strip(),
        service=tokens[2].strip(),
        flag=tokens[3].strip(),
        raw_label=tokens[-1].strip().rstrip("."),
    )


def map_label(raw_label: str) -> AttackClass:
    """Map a raw attack label (trailing '.' tolerated) to its traffic class."""
    key = raw_label.strip().rstrip(".")
    try:
        return LABEL_TO_CLASS[key]
    except KeyError:
        raise UnknownLabelError(f"unknown attack label {key!r}") from None


@dataclass(frozen=True)
class ClassDistribution:
    """Per-class counts and ratios over a dataset."""

    counts: dict
    total: int

    @property
    def ratios(self) -> dict:
        if self.total == 0:
            return {c: 0.0 for c in AttackClass}
        return {c: n / self.total for c, n in self.counts.items()}

    def table(self) -> str:
        lines = [f"{'class':<8} {'count':>10} {'ratio %':>9}"]
        for c in AttackClass:
            lines.append(f"{c.name.lower():<8} {self.counts[c]:>10} {self.ratios[c] * 100:>9.2f}")
        lines.append(f"{'total':<8} {self.total:>10} {100.0 if self.total else 0.0:>9.2f}")
        return "\n".join(lines)


class _RecordsView:
    """Lazy, ordered sequence of KddRecord over columnar storage."""

    def __init__(self, dataset: "Dataset"):
        self._ds = dataset

    def __len__(self) -> int:
        return len(self._ds)

    def __getitem__(self, i: int) -> KddRecord:
        ds = self._ds
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(ds)))]
        return KddRecord(
            numeric=tuple(ds.numeric[i]),
            protocol_type=ds.categorical["protocol_type"][i],
            service=ds.categorical["service"][i],
            flag=ds.categorical["flag"][i],
            raw_label=ds.raw_labels[i],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


class Dataset:
    """Order-preserving columnar store of parsed records plus their classes."""

    def __init__(self, numeric: np.ndarray, categorical: dict, raw_labels: list,
                 classes: np.ndarray, source_path: str = ""):
        n = numeric.shape[0]
        assert numeric.shape == (n, len(NUMERIC_NAMES))
        assert all(len(categorical[c]) == n for c in CATEGORICAL_NAMES)
        assert len(raw_labels) == n and len(classes) == n
        self.numeric = numeric
        self.categorical = categorical
        self.raw_labels = raw_labels
        self.classes = classes
        self.source_path = source_path

    def __len__(self) -> int:
        return self.numeric.shape[0]

    @property
    def records(self) -> _RecordsView:
        return _RecordsView(self)

    def class_distribution(self) -> ClassDistribution:
        counts = np.bincount(self.classes, minlength=len(AttackClass)) if len(self) else np.zeros(5, int)
        return ClassDistribution(
            counts={c: int(counts[c.value]) for c in AttackClass}, total=int(len(self)))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            numeric=self.numeric[idx],
            categorical={c: [self.categorical[c][i] for i in idx] for c in CATEGORICAL_NAMES},
            raw_labels=[self.raw_labels[i] for i in idx],
            classes=self.classes[idx],
            source_path=self.source_path,
        )

    def to_lines(self):
        """Serialize every record back to text (canonical trailing '.' labels)."""
        for rec in self.records:
            yield rec.to_line()


def _from_records(records: list, source_path: str = "") -> Dataset:
    numeric = np.array([r.numeric for r in records], dtype=np.float64).reshape(len(records), len(NUMERIC_NAMES))
    categorical = {c: [getattr(r, c) for r in records] for c in CATEGORICAL_NAMES}
    raw_labels = [r.raw_label for r in records]
    classes = np.array([map_label(r.raw_label).value for r in records], dtype=np.int8)
    return Dataset(numeric, categorical, raw_labels, classes, source_path)


def _read_text(path) -> str:
    try:
        if str(path).endswith(".gz"):
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                return fh.read()
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def load_dataset(path) -> Dataset:
    """Load a KDD-format file into a Dataset; all lines parsed and labeled.

    Whitespace-only lines are skipped.  Any malformed line aborts the load
    with its 1-based line number.  Plain text and .gz are supported.
    """
    text = _read_text(path)
    raw_lines = text.split("\n")
    lines, linenos = [], []
    for i, line in enumerate(raw_lines):
        if line.strip():
            lines.append(line)
            linenos.append(i + 1)
    linenos = np.asarray(linenos, dtype=np.int64)

    if not lines:
        empty = np.empty((0, len(NUMERIC_NAMES)), dtype=np.float64)
        return Dataset(empty, {c: [] for c in CATEGORICAL_NAMES}, [],
                       np.empty(0, dtype=np.int8), str(path))

    counts = np.fromiter((ln.count(",") for ln in lines), dtype=np.int64, count=len(lines))
    bad = np.nonzero(counts != N_FIELDS - 1)[0]
    if bad.size:
        i = int(bad[0])
        raise FieldCountError(
            f"line {linenos[i]}: expected {N_FIELDS} comma-separated fields, got {counts[i] + 1}")

    df = pd.read_csv(
        io.StringIO("\n".join(lines)),
        header=None,
        names=COLUMN_NAMES + [LABEL_FIELD],
        dtype={n: str for n in CATEGORICAL_NAMES + (LABEL_FIELD,)},
        keep_default_na=False,
        na_values=[""],
        skipinitialspace=True,
    )

    # Numeric columns: empty tokens become NaN (missing); any other
    # non-numeric token is a parse error, reported with its position.
    numeric_cols = []
    for col, name in zip(NUMERIC_INDICES, NUMERIC_NAMES):
        series = df[name]
        if series.dtype == object:
            coerced = pd.to_numeric(series, errors="coerce")
            bad_mask = coerced.isna() & series.notna()
            if bad_mask.any():
                i = int(np.nonzero(bad_mask.to_numpy())[0][0])
                raise NumericParseError(
                    f"line {linenos[i]}: column {col} ({name}) expects a number, "
                    f"got {series.iloc[i]!r}", column=col, line=int(linenos[i]))
            series = coerced
        values = series.to_numpy(dtype=np.float64)
        finite = values[~np.isnan(values)]
        if name in RATE_NAMES:
            if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
                i = int(np.nonzero((values < 0.0) | (values > 1.0))[0][0])
                raise FieldRangeError(
                    f"line {linenos[i]}: column {col} ({name}) must lie in [0,1], "
                    f"got {values[i]!r}", column=col, line=int(linenos[i]))
        elif finite.size and finite.min() < 0.0:
            i = int(np.nonzero(values < 0.0)[0][0])
            raise FieldRangeError(
                f"line {linenos[i]}: column {col} ({name}) must be non-negative, "
                f"got {values[i]!r}", column=col, line=int(linenos[i]))
        numeric_cols.append(values)
    numeric = np.column_stack(numeric_cols)

    categorical = {}
    for name in CATEGORICAL_NAMES:
        col = df[name].fillna("")  # missing symbolic field -> "" sentinel
        categorical[name] = [s.strip() for s in col.tolist()]

    raw = [s.strip().rstrip(".") for s in df[LABEL_FIELD].fillna("").tolist()]
    codes = np.empty(len(raw), dtype=np.int8)
    for i, label in enumerate(raw):
        cls = LABEL_TO_CLASS.get(label)
        if cls is None:
            raise UnknownLabelError(f"line {linenos[i]}: unknown attack label {label!r}")
        codes[i] = cls.value

    return Dataset(numeric, categorical, raw, codes, str(path))


def schema_table() -> str:
    """Human-readable 41-column schema dump (plus the label field)."""
    lines = [f"{'idx':>3} {'name':<28} {'kind':<12}"]
    for i, name in enumerate(COLUMN_NAMES):
        if name in CATEGORICAL_NAMES:
            kind = "symbolic"
        elif name in RATE_NAMES:
            kind = "rate [0,1]"
        else:
            kind = "numeric >=0"
        lines.append(f"{i:>3} {name:<28} {kind:<12}")
    lines.append(f"{41:>3} {LABEL_FIELD:<28} {'symbolic':<12}")
    return "\n".join(lines)


DATA_DIR_ENV = "NIDS_DATA_DIR"
DEFAULT_BASENAMES = (
    "kddcup.data_10_percent",
    "kddcup.data_10_percent.txt",
    "kddcup.data_10_percent.gz",
    "kddcup.data_10_percent_corrected",
)


def find_dataset(explicit=None):
    """Locate a dataset file: explicit path, then $NIDS_DATA_DIR, then ./data."""
    if explicit:
        p = Path(explicit)
        if not p.exists():
            raise IoError(f"dataset file not found: {p}")
        return p
    candidates = []
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        candidates.append(Path(env))
    candidates.append(Path("data"))
    for root in candidates:
        for base in DEFAULT_BASENAMES:
            p = root / base
            if p.exists():
                return p
    return None
