"""Spectrum files, configuration files and number formatting.

Spectrum files are two-column CSV, ``frequency_hz,psd`` in shot-noise
units.  Lines starting with ``#`` and blank lines are skipped; a single
non-numeric header line at the top is skipped too.

Configuration files are flat ``key = value`` text.  A unit suffix on the
key converts the value to SI angular units and drops the suffix:
``omega_s_khz = 18`` becomes ``omega_s = 2*pi*18e3`` rad/s.  ``_rad`` is
stripped without conversion.  Everything after ``#`` is a comment.
"""

import csv
import io as _stdio
import math
import warnings

import numpy as np

from .core import Spectrum
from .exceptions import SpectrumFormatError, UsageError

__all__ = [
    "NegativeSpectrumWarning",
    "load_spectrum",
    "write_spectrum",
    "emit",
    "format_number",
    "write_table",
    "write_summary",
    "parse_config",
    "load_config",
    "UNIT_SUFFIXES",
]

SIG_DIGITS = 9

# suffix -> factor to rad/s (frequencies are ordinary Hz times 2*pi)
UNIT_SUFFIXES = {
    "_hz": 2.0 * math.pi,
    "_khz": 2.0 * math.pi * 1e3,
    "_mhz": 2.0 * math.pi * 1e6,
    "_ghz": 2.0 * math.pi * 1e9,
    "_rad": 1.0,
}


class NegativeSpectrumWarning(UserWarning):
    """A loaded spectrum has negative PSD samples."""


def format_number(x):
    """Nine significant digits, ``repr``-free."""
    return f"{float(x):.{SIG_DIGITS}g}"


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_spectrum(path, format="csv"):
    """Read a two-column spectrum file.

    Parameters
    ----------
    path : str or path-like
    format : {"csv"}

    Returns
    -------
    Spectrum
        ``has_negative`` is set when any PSD value is below zero; a
        :class:`NegativeSpectrumWarning` is issued as well.

    Raises
    ------
    SpectrumFormatError
        Unparseable row, wrong column count, non-increasing frequency or an
        empty file.  ``lineno`` is the 1-based line of the problem.
    """
    if format != "csv":
        raise UsageError(f"unsupported spectrum format {format!r}")
    freqs, values = [], []
    prev_line = None
    first = True
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in row]
            if first:
                first = False
                if not all(_is_number(c) for c in cells):
                    continue  # bare header
            if len(cells) != 2:
                raise SpectrumFormatError(
                    f"line {lineno}: expected 2 columns, got {len(cells)}", lineno=lineno
                )
            try:
                f, v = float(cells[0]), float(cells[1])
            except ValueError:
                raise SpectrumFormatError(
                    f"line {lineno}: cannot parse {','.join(cells)!r} as numbers", lineno=lineno
                ) from None
            if not (math.isfinite(f) and math.isfinite(v)):
                raise SpectrumFormatError(f"line {lineno}: non-finite value", lineno=lineno)
            if freqs and f <= freqs[-1]:
                raise SpectrumFormatError(
                    f"line {lineno}: frequency {f:g} Hz does not increase "
                    f"(previous {freqs[-1]:g} Hz on line {prev_line})",
                    lineno=lineno,
                )
            freqs.append(f)
            values.append(v)
            prev_line = lineno
    if not freqs:
        raise SpectrumFormatError(f"{path}: no data rows", lineno=None)
    spectrum = Spectrum(np.array(freqs), np.array(values))
    if spectrum.has_negative:
        warnings.warn(
            f"{path}: {int(np.sum(spectrum.values < 0))} negative PSD samples",
            NegativeSpectrumWarning,
            stacklevel=2,
        )
    return spectrum


def write_table(fh, header, columns):
    """Write equal-length columns as CSV with a ``#`` header line."""
    columns = [np.atleast_1d(np.asarray(c, dtype=float)) for c in columns]
    n = columns[0].size
    if any(c.size != n for c in columns):
        raise UsageError("table columns differ in length")
    fh.write("#" + ",".join(header) + "\n")
    for i in range(n):
        fh.write(",".join(format_number(c[i]) for c in columns) + "\n")


def write_spectrum(fh, spectrum, header=("freq_hz", "psd")):
    write_table(fh, header, [spectrum.freqs, spectrum.values])


def emit(spectrum, path=None, header=("freq_hz", "psd")):
    """Write a spectrum to ``path`` (or return the CSV text when ``path`` is None)."""
    if path is None:
        buf = _stdio.StringIO()
        write_spectrum(buf, spectrum, header)
        return buf.getvalue()
    with open(path, "w", newline="") as fh:
        write_spectrum(fh, spectrum, header)
    return None


def write_summary(fh, items):
    """``key = value`` lines; floats get nine significant digits."""
    for key, value in items.items():
        if isinstance(value, (bool, np.bool_)):
            text = str(bool(value)).lower()
        elif isinstance(value, (int, np.integer)):
            text = str(int(value))
        elif isinstance(value, (float, np.floating)):
            text = format_number(value)
        else:
            text = str(value)
        fh.write(f"{key} = {text}\n")


def _convert(key, raw):
    for suffix, factor in UNIT_SUFFIXES.items():
        if key.endswith(suffix):
            try:
                return key[: -len(suffix)], float(raw) * factor
            except ValueError:
                raise UsageError(f"{key}: expected a number, got {raw!r}") from None
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return key, True
    if low in ("false", "no", "off"):
        return key, False
    try:
        return key, float(raw)
    except ValueError:
        return key, raw


def parse_config(text, source="<config>"):
    """Parse ``key = value`` text into a dict with unit suffixes resolved.

    Raises
    ------
    UsageError
        Malformed line or a key given twice (after suffix removal).
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key or not raw:
            raise UsageError(f"{source}:{lineno}: empty key or value")
        name, value = _convert(key.lower(), raw)
        if name in out:
            raise UsageError(f"{source}:{lineno}: {name!r} given twice")
        out[name] = value
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))
