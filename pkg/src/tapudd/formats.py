"""Feature / logit / score file formats.

Text: a ``# kind=... dim=D n=N [labels=1]`` header, then one comma-separated row
per sample with an optional trailing integer label.

Binary: magic ``TPDD``, u32 version, u32 kind code, u64 N, u64 D, N×D
little-endian float64 row-major, then optionally N little-endian int64 labels.
"""

import logging
import math
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import constants
from .errors import InvalidInput, ParseError, VersionError
from .stats import FeatureMatrix

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sIIQQ")
_KIND_NAMES = {code: name for name, code in constants.KIND_CODES.items()}


@contextmanager
def atomic_write(path, mode="wb"):
    """Write to a temporary sibling of ``path`` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.NamedTemporaryFile(
        mode=mode, dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False
    )
    try:
        with tmp:
            yield tmp
        os.replace(tmp.name, path)
    except BaseException:
        try:
            os.unlink(tmp.name)
        except OSError:
            pass
        raise


def encode_text(matrix):
    header = f"# kind={matrix.kind} dim={matrix.dim} n={matrix.n}"
    if matrix.labels is not None:
        header += " labels=1"
    lines = [header]
    for i, row in enumerate(matrix.data):
        fields = [repr(float(v)) for v in row]
        if matrix.labels is not None:
            fields.append(str(int(matrix.labels[i])))
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def encode_binary(matrix):
    if matrix.kind not in constants.KIND_CODES:
        raise ParseError(f"kind {matrix.kind!r} has no binary code")
    header = _HEADER.pack(
        constants.FEATURE_MAGIC,
        constants.FEATURE_FORMAT_VERSION,
        constants.KIND_CODES[matrix.kind],
        matrix.n,
        matrix.dim,
    )
    body = matrix.data.astype("<f8").tobytes(order="C")
    if matrix.labels is not None:
        body += matrix.labels.astype("<i8").tobytes()
    return header + body


def write_features(matrix, path, fmt="binary"):
    """Write ``matrix`` atomically in ``fmt`` ("binary" or "text")."""
    if fmt == "text":
        payload = encode_text(matrix).encode("utf-8")
    elif fmt == "binary":
        payload = encode_binary(matrix)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with atomic_write(path) as fh:
        fh.write(payload)
    logger.info(f"Wrote {matrix.n}×{matrix.dim} {matrix.kind} ({fmt}) to {path}")


def _parse_header(line):
    if not line.startswith("#"):
        raise ParseError("missing '# kind=... dim=... n=...' header", line=1)
    fields = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ParseError(f"malformed header token {token!r}", line=1)
        fields[key] = value
    try:
        kind = fields["kind"]
        dim = int(fields["dim"])
        n = int(fields["n"])
        has_labels = fields.get("labels", "0") == "1"
    except (KeyError, ValueError) as e:
        raise ParseError(f"malformed header: {e}", line=1) from e
    if dim < 1 or n < 1:
        raise ParseError(f"header declares dim={dim} n={n}", line=1)
    return kind, dim, n, has_labels


def decode_text(text):
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    kind, dim, n, has_labels = _parse_header(lines[0])
    width = dim + (1 if has_labels else 0)
    data = np.empty((n, dim))
    labels = np.empty(n, dtype=np.int64) if has_labels else None
    row = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if row >= n:
            raise ParseError(f"more rows than the declared n={n}", line=lineno)
        tokens = line.split(",")
        if len(tokens) != width:
            raise ParseError(f"expected {width} fields, got {len(tokens)}", line=lineno)
        try:
            values = [float(t) for t in tokens[:dim]]
            if has_labels:
                labels[row] = int(tokens[dim])
        except ValueError as e:
            raise ParseError(f"bad number: {e}", line=lineno) from e
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", line=lineno)
        data[row] = values
        row += 1
    if row != n:
        raise ParseError(f"expected {n} rows, found {row}", line=len(lines))
    return FeatureMatrix(data, labels, kind)


def decode_binary(blob):
    if len(blob) < _HEADER.size:
        raise ParseError("truncated header", offset=len(blob))
    magic, version, code, n, dim = _HEADER.unpack_from(blob)
    if magic != constants.FEATURE_MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    if version > constants.FEATURE_FORMAT_VERSION:
        raise VersionError(
            f"feature file version {version} is newer than {constants.FEATURE_FORMAT_VERSION}"
        )
    if code not in _KIND_NAMES:
        raise ParseError(f"unknown kind code {code}", offset=8)
    if n < 1 or dim < 1:
        raise ParseError(f"header declares n={n} dim={dim}", offset=12)
    data_end = _HEADER.size + 8 * n * dim
    if len(blob) < data_end:
        raise ParseError("truncated data block", offset=len(blob))
    data = np.frombuffer(blob, dtype="<f8", count=n * dim, offset=_HEADER.size).reshape(n, dim)
    bad = np.flatnonzero(~np.isfinite(data.ravel()))
    if bad.size:
        raise ParseError("non-finite value", offset=_HEADER.size + 8 * int(bad[0]))
    rest = len(blob) - data_end
    labels = None
    if rest == 8 * n:
        labels = np.frombuffer(blob, dtype="<i8", count=n, offset=data_end)
    elif rest:
        raise ParseError(f"{rest} trailing bytes do not form a label block", offset=data_end)
    return FeatureMatrix(data.astype(np.float64), labels, _KIND_NAMES[code])


def read_features(path):
    """Read a text or binary feature file (format detected from the magic)."""
    blob = Path(path).read_bytes()
    try:
        if blob[:4] == constants.FEATURE_MAGIC:
            return decode_binary(blob)
        return decode_text(blob.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ParseError(f"neither binary nor UTF-8 text: {e}", offset=e.start) from e
    except InvalidInput as e:
        raise ParseError(str(e)) from e
