"""Line-oriented plain-text numeric IO helpers.

All on-disk formats in this package are text based and written at full
double precision so that a save/load round trip is bit exact and re-running
a command on unchanged inputs produces byte-identical files.
"""

import numpy as np

from morcal.errors import DataError

FLOAT_FMT = "%.17g"


def fmt_float(x) -> str:
    return FLOAT_FMT % float(x)


def fmt_row(values) -> str:
    return " ".join(FLOAT_FMT % v for v in np.asarray(values, dtype=float).ravel())


class TextReader:
    """Sequential line reader that reports the line number on errors."""

    def __init__(self, path):
        self.path = str(path)
        with open(path, "r") as fh:
            self._lines = fh.read().splitlines()
        self._pos = 0

    def error(self, msg) -> "DataError":
        return DataError(f"{self.path}, line {self._pos}: {msg}")

    def at_end(self) -> bool:
        return self._pos >= len(self._lines)

    def peek(self) -> str | None:
        if self.at_end():
            return None
        return self._lines[self._pos]

    def next_line(self, what="line") -> str:
        if self.at_end():
            raise DataError(f"{self.path}: unexpected end of file while reading {what}")
        line = self._lines[self._pos]
        self._pos += 1
        return line

    def expect_kv(self, key) -> str:
        line = self.next_line(f"'{key}='").strip()
        if not line.startswith(key + "="):
            raise self.error(f"expected '{key}=', found {line!r}")
        return line[len(key) + 1 :]

    def read_floats(self, count, what="row") -> np.ndarray:
        line = self.next_line(what)
        try:
            values = np.array([float(tok) for tok in line.split()], dtype=float)
        except ValueError as exc:
            raise self.error(f"bad number in {what}: {exc}") from None
        if values.size != count:
            raise self.error(f"expected {count} values in {what}, found {values.size}")
        return values


def parse_float(text, reader: TextReader, what):
    try:
        return float(text)
    except ValueError:
        raise reader.error(f"bad float for {what}: {text!r}") from None


def parse_int(text, reader: TextReader, what):
    try:
        return int(text)
    except ValueError:
        raise reader.error(f"bad integer for {what}: {text!r}") from None
