"""Python bindings for the tablequake C++ core."""

import json
import os

from ._core import (
    Table,
    TablequakeError,
    apply_structural,
    column_swap,
    emd,
    exact_match,
    f1,
    fnv1a64,
    head_entropy_profile,
    main,
    normalize_answer,
    parse_table,
    read_trace,
    row_entropy,
    row_swap,
    simulate,
    spearman,
    transpose,
    transpose_col_swap,
    transpose_row_swap,
    variation_percentage,
    write_trace,
)
from . import _core


def _dump_lines(items):
    return "".join(json.dumps(i, ensure_ascii=False) + "\n" for i in items)


def _load_lines(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def read_records(path):
    """Validated run records as dicts."""
    with open(path, encoding="utf-8") as f:
        return _load_lines(_core._canonical_records(f.read()))


def write_records(path, records):
    """Validates records and writes them as canonical JSON lines."""
    text = _core._canonical_records(_dump_lines(records))
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def read_prompts(path):
    with open(path, encoding="utf-8") as f:
        return _load_lines(_core._canonical_prompts(f.read()))


__all__ = [name for name in dir() if not name.startswith("_") and name not in ("json", "os")]
