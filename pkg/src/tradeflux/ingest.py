"""Parsing and reconciliation of bilateral flow records.

Bilateral merchandise trade is double-reported: country A states its exports
to B, and B separately states its imports from A. Ideally the two figures
mirror each other; in real data they disagree. This module parses dyadic
records from delimited text, reconciles the two sides of every flow into a
single per-year export matrix under a configurable policy, and validates the
result.

Values are money in millions of current-year USD and are never deflated or
currency-converted. Country identity is an opaque string token; no ISO
validation is attempted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

#: Relative disagreement between the two reports of one flow above which the
#: pair is counted as a conflict.
CONFLICT_TOLERANCE = 1e-6

#: Tokens (lowercased) treated as "no reported value".
MISSING_TOKENS = frozenset({"", ".", "na", "n/a", "nan", "none", "null"})

RECONCILE_POLICIES = ("average", "prefer-importer", "prefer-exporter", "max")


@dataclass(frozen=True)
class DyadicRecord:
    """One reported bilateral flow: what ``reporter`` says about ``partner``.

    ``exports`` is the reporter's claim about its own exports to the partner;
    ``imports`` is the reporter's claim about its imports from the partner
    (i.e. the partner's exports to the reporter). Either may be ``None`` when
    the reporter stayed silent on that side.
    """

    year: int
    reporter: str
    partner: str
    exports: float | None
    imports: float | None

    def __post_init__(self):
        if not self.reporter or not self.partner:
            raise ValueError("country codes must be non-empty")
        if any(ch.isspace() for ch in self.reporter + self.partner):
            raise ValueError("country codes must be whitespace-free tokens")
        if self.reporter == self.partner:
            raise ValueError(f"self-trade record for {self.reporter!r}")
        for name in ("exports", "imports"):
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value!r}")


@dataclass(frozen=True)
class TradeMatrix:
    """Reconciled export matrix for one year.

    ``exports[i, j]`` is the resolved exports of ``countries[i]`` to
    ``countries[j]`` in millions of USD. Construction checks shape only;
    value-level invariants are checked by :func:`validate_trade_matrix` so
    that defective matrices can be built and then reported on.
    """

    year: int
    countries: tuple[str, ...]
    exports: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.exports, dtype=float)
        n = len(self.countries)
        if matrix.shape != (n, n):
            raise ValueError(
                f"exports matrix shape {matrix.shape} does not match "
                f"{n} countries"
            )
        if len(set(self.countries)) != n:
            raise ValueError("duplicate country codes")
        object.__setattr__(self, "exports", matrix)

    def index(self, country: str) -> int:
        return self.countries.index(country)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of parsing, reconciliation, or matrix validation.

    ``dropped`` holds (identifier, reason) pairs for inputs that were set
    aside rather than silently ignored. ``violations`` names broken matrix
    invariants; ``isolated`` lists countries with zero total trade.
    """

    n_records: int
    n_conflicts: int = 0
    max_relative_conflict: float = 0.0
    dropped: tuple[tuple[str, str], ...] = ()
    violations: tuple[str, ...] = ()
    isolated: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        parts = [
            f"{self.n_records} records",
            f"{self.n_conflicts} conflicts",
            f"max relative conflict {self.max_relative_conflict:.3g}",
        ]
        if self.dropped:
            parts.append(f"{len(self.dropped)} dropped")
        if self.violations:
            parts.append(f"{len(self.violations)} invariant violations")
        if self.isolated:
            parts.append(f"{len(self.isolated)} isolated countries")
        return ", ".join(parts)


@dataclass(frozen=True)
class ColumnMap:
    """Names of the header columns carrying each dyadic field."""

    year: str = "year"
    reporter: str = "reporter"
    partner: str = "partner"
    exports: str = "exports"
    imports: str = "imports"

    @classmethod
    def from_dict(cls, mapping: dict) -> "ColumnMap":
        known = {"year", "reporter", "partner", "exports", "imports"}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigurationError(f"unknown format-map keys: {sorted(unknown)}")
        return cls(**mapping)


@dataclass
class ParseResult:
    """Well-formed records plus the rows that could not be used."""

    records: list[DyadicRecord] = field(default_factory=list)
    dropped: list[tuple[str, str]] = field(default_factory=list)


def _parse_flow(token: str, name: str) -> float | None:
    if token is None or token.strip().lower() in MISSING_TOKENS:
        return None
    try:
        value = float(token)
    except ValueError:
        raise ValueError(f"non-numeric {name} value {token!r}") from None
    if math.isnan(value):
        return None
    if not math.isfinite(value):
        raise ValueError(f"non-finite {name} value {token!r}")
    if value < 0:
        raise ValueError(f"negative {name} value {token!r}")
    return value


def parse_dyadic_records(stream, columns: ColumnMap | None = None) -> ParseResult:
    """Parse dyadic records from delimited text with a header row.

    ``stream`` is a text file object, a path-like, or a string of file
    content. The delimiter (comma or tab) is detected from the header row.
    Malformed rows are collected in ``ParseResult.dropped`` with their line
    numbers, never silently skipped.

    Raises :class:`ConfigurationError` when a required column named by
    ``columns`` is absent from the header.
    """
    columns = columns or ColumnMap()
    close = False
    if hasattr(stream, "read"):
        pass
    elif isinstance(stream, str) and any(ch in stream for ch in "\n,\t"):
        stream = io.StringIO(stream)
    else:
        stream = open(stream, "r", encoding="utf-8", newline="")
        close = True

    try:
        header_line = stream.readline()
        if not header_line:
            return ParseResult()
        delimiter = "\t" if "\t" in header_line else ","
        header = next(csv.reader([header_line], delimiter=delimiter))
        positions = {}
        for name in ("year", "reporter", "partner", "exports", "imports"):
            wanted = getattr(columns, name)
            try:
                positions[name] = header.index(wanted)
            except ValueError:
                lowered = [h.strip().lower() for h in header]
                if wanted.lower() in lowered:
                    positions[name] = lowered.index(wanted.lower())
                else:
                    raise ConfigurationError(
                        f"required column {wanted!r} not found in header {header}"
                    ) from None

        result = ParseResult()
        reader = csv.reader(stream, delimiter=delimiter)
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                if len(row) <= max(positions.values()):
                    raise ValueError(
                        f"expected {len(header)} columns, got {len(row)}"
                    )
                year = int(row[positions["year"]].strip())
                reporter = row[positions["reporter"]].strip()
                partner = row[positions["partner"]].strip()
                exports = _parse_flow(row[positions["exports"]], "export")
                imports = _parse_flow(row[positions["imports"]], "import")
                if reporter == partner:
                    raise ValueError("self-trade")
                record = DyadicRecord(year, reporter, partner, exports, imports)
            except ValueError as exc:
                result.dropped.append((f"line {line_no}", str(exc)))
                continue
            result.records.append(record)
        return result
    finally:
        if close:
            stream.close()


def _resolve(exp_side: float | None, imp_side: float | None, policy: str) -> float:
    if exp_side is None and imp_side is None:
        return 0.0
    if exp_side is None:
        return imp_side
    if imp_side is None:
        return exp_side
    if policy == "average":
        return 0.5 * (exp_side + imp_side)
    if policy == "prefer-importer":
        return imp_side
    if policy == "prefer-exporter":
        return exp_side
    if policy == "max":
        return max(exp_side, imp_side)
    raise ConfigurationError(
        f"unknown reconcile policy {policy!r}; expected one of {RECONCILE_POLICIES}"
    )


def reconcile_flows(
    records: list[DyadicRecord], year: int, policy: str = "average"
) -> tuple[TradeMatrix, ValidationReport]:
    """Merge double-reported flows into a single export matrix.

    For the flow A->B there are up to two claims: A's export report and B's
    import report. ``policy`` picks the resolution (``average``,
    ``prefer-importer``, ``prefer-exporter``, ``max``); a single claim is
    taken as-is and no claim at all means zero flow. Claims disagreeing by
    more than ``CONFLICT_TOLERANCE`` relative are counted as conflicts.
    """
    if policy not in RECONCILE_POLICIES:
        raise ConfigurationError(
            f"unknown reconcile policy {policy!r}; expected one of {RECONCILE_POLICIES}"
        )
    for record in records:
        if record.year != year:
            raise ValueError(
                f"record for year {record.year} passed to reconcile_flows({year})"
            )

    dropped: list[tuple[str, str]] = []
    by_pair: dict[tuple[str, str], DyadicRecord] = {}
    for record in records:
        key = (record.reporter, record.partner)
        if key in by_pair:
            dropped.append(
                (f"{record.reporter}->{record.partner}", "duplicate report for pair")
            )
            continue
        by_pair[key] = record

    countries = tuple(sorted({c for pair in by_pair for c in pair}))
    index = {code: i for i, code in enumerate(countries)}
    exports = np.zeros((len(countries), len(countries)))

    # Claims about the flow a->b: exporter side from a's record, importer
    # side from b's record.
    claims: dict[tuple[str, str], list[float | None]] = {}
    for (reporter, partner), record in by_pair.items():
        if record.exports is not None:
            claims.setdefault((reporter, partner), [None, None])[0] = record.exports
        if record.imports is not None:
            claims.setdefault((partner, reporter), [None, None])[1] = record.imports

    n_conflicts = 0
    max_rel = 0.0
    for (source, destination), (exp_side, imp_side) in claims.items():
        value = _resolve(exp_side, imp_side, policy)
        exports[index[source], index[destination]] = value
        if exp_side is not None and imp_side is not None:
            denom = max(abs(exp_side), abs(imp_side))
            rel = abs(exp_side - imp_side) / denom if denom > 0 else 0.0
            max_rel = max(max_rel, rel)
            if rel > CONFLICT_TOLERANCE:
                n_conflicts += 1

    report = ValidationReport(
        n_records=len(records),
        n_conflicts=n_conflicts,
        max_relative_conflict=max_rel,
        dropped=tuple(dropped),
    )
    return TradeMatrix(year, countries, exports), report


def validate_trade_matrix(tm: TradeMatrix) -> ValidationReport:
    """Check matrix invariants and report isolated countries.

    Purely a reporting operation: violations (nonzero diagonal, negative or
    non-finite entries) are listed by cell, not raised.
    """
    violations = []
    matrix = tm.exports
    diag = np.flatnonzero(np.diag(matrix) != 0.0)
    for i in diag:
        violations.append(f"nonzero diagonal at {tm.countries[i]}")
    bad = ~np.isfinite(matrix)
    for i, j in zip(*np.nonzero(bad)):
        violations.append(
            f"non-finite entry at {tm.countries[i]}->{tm.countries[j]}"
        )
    negative = matrix < 0
    for i, j in zip(*np.nonzero(negative)):
        violations.append(
            f"negative entry at {tm.countries[i]}->{tm.countries[j]}"
        )

    with np.errstate(invalid="ignore"):
        totals = matrix.sum(axis=0) + matrix.sum(axis=1)
    isolated = tuple(
        tm.countries[i] for i in range(len(tm.countries)) if totals[i] == 0.0
    )
    nonzero = int(np.count_nonzero(matrix))
    return ValidationReport(
        n_records=nonzero, violations=tuple(violations), isolated=isolated
    )


def _format_matrix_value(value: float) -> str:
    # Up to six fractional digits when that renders the float exactly;
    # full shortest-repr precision otherwise so files re-parse bit-exactly.
    value = float(value)
    short = f"{value:.6f}".rstrip("0").rstrip(".")
    if float(short) == value:
        return short
    return repr(value)


def write_trade_matrix(tm: TradeMatrix, stream) -> None:
    """Write the canonical matrix file: a year header, a country header, and
    one ``source destination value`` triple per nonzero entry."""
    close = False
    if isinstance(stream, str):
        stream = open(stream, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        stream.write(f"#year {tm.year}\n")
        stream.write("#countries " + " ".join(tm.countries) + "\n")
        rows, cols = np.nonzero(tm.exports)
        for i, j in zip(rows, cols):
            value = _format_matrix_value(tm.exports[i, j])
            stream.write(f"{tm.countries[i]} {tm.countries[j]} {value}\n")
    finally:
        if close:
            stream.close()


def read_trade_matrix(stream) -> TradeMatrix:
    """Parse a canonical matrix file written by :func:`write_trade_matrix`.

    The ``#countries`` header is optional; without it the country set is
    recovered from the triples (isolated countries are then lost).
    """
    close = False
    if isinstance(stream, str) and "\n" not in stream:
        stream = open(stream, "r", encoding="utf-8")
        close = True
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    try:
        year = None
        countries: tuple[str, ...] | None = None
        triples = []
        for line in stream:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#year"):
                year = int(line.split(None, 1)[1])
            elif line.startswith("#countries"):
                countries = tuple(line.split()[1:])
            elif line.startswith("#"):
                continue
            else:
                source, destination, value = line.split()
                triples.append((source, destination, float(value)))
        if year is None:
            raise ValueError("missing '#year' header line")
        if countries is None:
            countries = tuple(sorted({c for s, d, _ in triples for c in (s, d)}))
        index = {code: i for i, code in enumerate(countries)}
        exports = np.zeros((len(countries), len(countries)))
        for source, destination, value in triples:
            exports[index[source], index[destination]] = value
        return TradeMatrix(year, countries, exports)
    finally:
        if close:
            stream.close()
