"""Versioned, checksummed model archives.

Layout: magic ``TPDA`` | u32 version | sha256(body) | body, where body is
u64 header length | JSON header | raw little-endian arrays. The JSON header
carries the model kind, dimension, scalar metadata, provenance and, for every
array, its name, dtype, shape, memory order and offset. Arrays are stored
bit-exactly so a loaded model reproduces the saved model's scores bitwise.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import constants
from .baselines import KLReferences, TiedMahalanobisModel
from .config import EnsembleConfig
from .ensemble import TapuddModel
from .errors import IntegrityError, InvalidInput, VersionError
from .formats import atomic_write
from .stats import ClusterStats
from .tap_mahalanobis import TapMahalanobisModel
from .tap_mos import TapMosModel

logger = logging.getLogger(__name__)

_PREFIX = struct.Struct("<4sI32s")
_LENGTH = struct.Struct("<Q")


@dataclass(frozen=True)
class ModelArchive:
    format_version: int
    model_kind: str
    dim: int
    model: object
    provenance: dict = field(default_factory=dict)


# --- model <-> (meta, arrays) ---------------------------------------------------------------


def _put_clusters(arrays, prefix, clusters):
    for j, c in enumerate(clusters):
        arrays[f"{prefix}c{j}.mean"] = c.mean
        arrays[f"{prefix}c{j}.covariance"] = c.covariance
        arrays[f"{prefix}c{j}.chol"] = c.chol
    return [c.count for c in clusters]


def _get_clusters(arrays, prefix, counts):
    clusters = []
    for j, count in enumerate(counts):
        clusters.append(
            ClusterStats(
                mean=arrays[f"{prefix}c{j}.mean"],
                covariance=arrays[f"{prefix}c{j}.covariance"],
                chol=arrays[f"{prefix}c{j}.chol"],
                count=count,
            )
        )
    return tuple(clusters)


def _encode_tapmb(model, arrays, prefix=""):
    counts = _put_clusters(arrays, prefix, model.clusters)
    return {"k": model.k, "dim": model.dim, "counts": counts, "fit_meta": model.fit_meta}


def _decode_tapmb(meta, arrays, prefix=""):
    return TapMahalanobisModel(
        k=meta["k"],
        clusters=_get_clusters(arrays, prefix, meta["counts"]),
        dim=meta["dim"],
        fit_meta=meta["fit_meta"],
    )


def encode_model(model):
    """(kind, dim, meta, arrays) for any fitted detector."""
    arrays = {}
    if isinstance(model, TapMahalanobisModel):
        return constants.MODEL_TAPMB, model.dim, _encode_tapmb(model, arrays), arrays
    if isinstance(model, TapuddModel):
        members = {
            str(k): _encode_tapmb(m, arrays, prefix=f"k{k}.") for k, m in model.members.items()
        }
        meta = {"config": model.config.model_dump(), "members": members}
        return constants.MODEL_TAPUDD, model.dim, meta, arrays
    if isinstance(model, TapMosModel):
        arrays.update(
            weights=model.weights,
            input_mean=model.input_mean,
            input_scale=model.input_scale,
            loss_history=np.asarray(model.loss_history),
        )
        meta = {
            "k": model.k,
            "trained_epochs": model.trained_epochs,
            "final_loss": model.final_loss,
        }
        return constants.MODEL_TAPMOS, model.dim, meta, arrays
    if isinstance(model, TiedMahalanobisModel):
        arrays.update(
            class_labels=model.class_labels,
            class_means=model.class_means,
            class_counts=model.class_counts,
            covariance=model.covariance,
            chol=model.chol,
        )
        return constants.MODEL_TIED_MB, model.dim, {}, arrays
    if isinstance(model, KLReferences):
        arrays["refs"] = model.refs
        meta = {"empty_classes": list(model.empty_classes)}
        return constants.MODEL_KL_REFS, model.dim, meta, arrays
    raise InvalidInput(f"cannot archive objects of type {type(model).__name__}")


def decode_model(kind, meta, arrays):
    if kind == constants.MODEL_TAPMB:
        return _decode_tapmb(meta, arrays)
    if kind == constants.MODEL_TAPUDD:
        config = EnsembleConfig(**meta["config"])
        members = {
            k: _decode_tapmb(meta["members"][str(k)], arrays, prefix=f"k{k}.")
            for k in config.k_list
        }
        dim = next(iter(members.values())).dim
        return TapuddModel(members=members, config=config, dim=dim)
    if kind == constants.MODEL_TAPMOS:
        return TapMosModel(
            k=meta["k"],
            weights=arrays["weights"],
            input_mean=arrays["input_mean"],
            input_scale=arrays["input_scale"],
            trained_epochs=meta["trained_epochs"],
            final_loss=meta["final_loss"],
            loss_history=tuple(arrays["loss_history"].tolist()),
        )
    if kind == constants.MODEL_TIED_MB:
        return TiedMahalanobisModel(
            class_labels=arrays["class_labels"],
            class_means=arrays["class_means"],
            class_counts=arrays["class_counts"],
            covariance=arrays["covariance"],
            chol=arrays["chol"],
        )
    if kind == constants.MODEL_KL_REFS:
        return KLReferences(refs=arrays["refs"], empty_classes=tuple(meta["empty_classes"]))
    raise IntegrityError(f"unknown model kind {kind!r}")


# --- byte layout ----------------------------------------------------------------------------


def _dtype_code(arr):
    return "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"


def encode_archive(model, provenance=None):
    kind, dim, meta, arrays = encode_model(model)
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        code = _dtype_code(arr)
        order = "F" if arr.flags.f_contiguous and not arr.flags.c_contiguous else "C"
        data = arr.astype(code).tobytes(order=order)
        entries.append(
            {
                "name": name,
                "dtype": code,
                "shape": list(arr.shape),
                "order": order,
                "offset": offset,
            }
        )
        blobs.append(data)
        offset += len(data)
    header = {
        "model_kind": kind,
        "dim": dim,
        "meta": meta,
        "provenance": provenance or {},
        "arrays": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(blobs)
    digest = hashlib.sha256(body).digest()
    prefix = _PREFIX.pack(constants.ARCHIVE_MAGIC, constants.ARCHIVE_FORMAT_VERSION, digest)
    return prefix + body


def decode_archive(blob):
    if len(blob) < _PREFIX.size + _LENGTH.size:
        raise IntegrityError("archive truncated before its header")
    magic, version, digest = _PREFIX.unpack_from(blob)
    if magic != constants.ARCHIVE_MAGIC:
        raise IntegrityError(f"not a model archive (magic {magic!r})")
    if version > constants.ARCHIVE_FORMAT_VERSION:
        raise VersionError(
            f"archive version {version} is newer than {constants.ARCHIVE_FORMAT_VERSION}"
        )
    body = blob[_PREFIX.size :]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("archive checksum mismatch (corrupted or truncated)")

    (header_len,) = _LENGTH.unpack_from(body)
    start = _LENGTH.size + header_len
    try:
        header = json.loads(body[_LENGTH.size : start].decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            offset = start + entry["offset"]
            arr = np.frombuffer(body, dtype=entry["dtype"], count=count, offset=offset)
            arr = arr.reshape(entry["shape"], order=entry["order"])
            arrays[entry["name"]] = arr.astype(entry["dtype"][1:], order="K")
        model = decode_model(header["model_kind"], header["meta"], arrays)
    except (KeyError, ValueError, TypeError) as e:
        raise IntegrityError(f"archive payload unreadable: {e}") from e
    return ModelArchive(
        format_version=version,
        model_kind=header["model_kind"],
        dim=header["dim"],
        model=model,
        provenance=header["provenance"],
    )


def save_model(model, path, provenance=None):
    """Write ``model`` (any fitted detector) as an archive, atomically."""
    blob = encode_archive(model, provenance)
    with atomic_write(path) as fh:
        fh.write(blob)
    logger.info(f"Saved {type(model).__name__} archive ({len(blob)} bytes) to {path}")


def load_model(path):
    return decode_archive(Path(path).read_bytes())
