"""Plain-text data interchange.

A data bundle is a directory with

* ``meta.ini``      -- one ``[section]`` per series (kind, freq, transform,
  announce_lag_months, announce_day, target)
* ``series/*.csv``  -- one file per series with ``date,value`` rows, ISO dates
* ``transactions.csv`` (optional) -- the synthetic payment ledger

Floats are written with ``repr`` so a rerun with the same inputs is
byte-identical.  All writers go through :func:`atomic_write`.
"""
from __future__ import annotations

import configparser
import csv
import io
import os
import tempfile
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .series import (
    DAILY_ANNOUNCE,
    ConfigError,
    DataError,
    Frequency,
    SeriesMeta,
    TimeSeries,
)


def atomic_write(path: Path | str, text: str) -> None:
    """Write text to ``path`` via a temp file + rename so readers never see a
    partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# series CSV


def write_series_csv(s: TimeSeries, path: Path | str) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["date", "value"])
    for d, v in zip(s.dates, s.values):
        w.writerow([d.isoformat(), "" if np.isnan(v) else _fmt(v)])
    atomic_write(path, buf.getvalue())


def read_series_csv(path: Path | str, name: str, freq: Frequency, units: str = "level") -> TimeSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"series file not found: {path}")
    dates: list[date] = []
    vals: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "value"]:
            raise DataError(f"{path}: expected header 'date,value'")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                dates.append(date.fromisoformat(row[0].strip()))
            except ValueError as exc:
                raise DataError(f"{path}:{ln}: bad date {row[0]!r}") from exc
            cell = row[1].strip() if len(row) > 1 else ""
            if cell == "":
                vals.append(float("nan"))
            else:
                try:
                    vals.append(float(cell))
                except ValueError as exc:
                    raise DataError(f"{path}:{ln}: bad value {row[1]!r}") from exc
    return TimeSeries(name, freq, tuple(dates), np.array(vals), units)


# ---------------------------------------------------------------------------
# metadata INI


def write_meta(metas: Mapping[str, SeriesMeta], path: Path | str) -> None:
    cp = configparser.ConfigParser()
    for name in sorted(metas):
        m = metas[name]
        cp[name] = {
            "kind": m.kind,
            "freq": m.freq.value,
            "transform": m.transform,
            "announce_lag_months": str(m.announce_lag_months),
            "announce_day": str(m.announce_day),
            "target": "true" if m.target else "false",
        }
    buf = io.StringIO()
    cp.write(buf)
    atomic_write(path, buf.getvalue())


def read_meta(path: Path | str) -> dict[str, SeriesMeta]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"metadata file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    out: dict[str, SeriesMeta] = {}
    for name in cp.sections():
        sec = cp[name]
        try:
            freq = Frequency(sec.get("freq", ""))
        except ValueError as exc:
            raise ConfigError(f"{path} [{name}] freq: {sec.get('freq')!r}") from exc
        day_raw = sec.get("announce_day", "")
        day: int | str
        if day_raw.strip().lower() == DAILY_ANNOUNCE:
            day = DAILY_ANNOUNCE
        else:
            try:
                day = int(day_raw)
            except ValueError as exc:
                raise ConfigError(f"{path} [{name}] announce_day: {day_raw!r}") from exc
        try:
            lag = int(sec.get("announce_lag_months", ""))
        except ValueError as exc:
            raise ConfigError(f"{path} [{name}] announce_lag_months") from exc
        out[name] = SeriesMeta(
            name=name,
            kind=sec.get("kind", ""),
            freq=freq,
            transform=sec.get("transform", "level"),
            announce_lag_months=lag,
            announce_day=day,
            target=sec.getboolean("target", fallback=False),
        )
    if not out:
        raise ConfigError(f"{path}: no series sections")
    return out


# ---------------------------------------------------------------------------
# bundles


def write_bundle(directory: Path | str, series: Mapping[str, TimeSeries], metas: Mapping[str, SeriesMeta]) -> None:
    directory = Path(directory)
    (directory / "series").mkdir(parents=True, exist_ok=True)
    write_meta(metas, directory / "meta.ini")
    for name, s in series.items():
        write_series_csv(s, directory / "series" / f"{name}.csv")


def load_bundle(directory: Path | str) -> tuple[dict[str, TimeSeries], dict[str, SeriesMeta]]:
    directory = Path(directory)
    metas = read_meta(directory / "meta.ini")
    series: dict[str, TimeSeries] = {}
    for name, m in metas.items():
        series[name] = read_series_csv(directory / "series" / f"{name}.csv", name, m.freq)
    return series, metas


# ---------------------------------------------------------------------------
# transactions


@dataclass(frozen=True)
class TransactionRecord:
    """One payment: day, payer type, channel, recipient sector/city, amount."""

    date: date
    payer: str  # "individual" | "firm"
    channel: str  # "pos" | "ecommerce" | "mail_phone" | "transfer" | "house_purchase"
    sector_code: str
    city: int  # 1..81, 0 = unidentified
    active: bool  # recipient firm active at the transaction date
    amount: float

    def __post_init__(self) -> None:
        if self.amount <= 0 or not np.isfinite(self.amount):
            raise DataError(f"transaction on {self.date}: amount must be positive")


TXN_COLUMNS = ["date", "payer", "channel", "sector_code", "city", "active", "amount"]


def write_transactions_csv(records: Sequence[TransactionRecord], path: Path | str) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(TXN_COLUMNS)
    for r in records:
        w.writerow(
            [
                r.date.isoformat(),
                r.payer,
                r.channel,
                r.sector_code,
                str(r.city),
                "1" if r.active else "0",
                _fmt(r.amount),
            ]
        )
    atomic_write(path, buf.getvalue())


def read_transactions_csv(path: Path | str) -> list[TransactionRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"transactions file not found: {path}")
    out: list[TransactionRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TXN_COLUMNS:
            raise DataError(f"{path}: expected header {','.join(TXN_COLUMNS)}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(
                    TransactionRecord(
                        date=date.fromisoformat(row[0]),
                        payer=row[1],
                        channel=row[2],
                        sector_code=row[3],
                        city=int(row[4]),
                        active=row[5] == "1",
                        amount=float(row[6]),
                    )
                )
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{ln}: bad transaction row") from exc
    return out


# ---------------------------------------------------------------------------
# generic CSV table output


def write_table_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(list(header))
    for row in rows:
        w.writerow(["" if v is None else (_fmt(v) if isinstance(v, float) else str(v)) for v in row])
    atomic_write(path, buf.getvalue())
