"""Binary array files, model checkpoints and the on-disk dataset layout.

Array file (little-endian)::

    b"DLCT" | u16 version | u16 dtype (0 complex128, 1 float64) | u16 ndim
    | u64 dims[ndim] | payload

Complex payloads are interleaved ``re, im``.  Checkpoints use::

    b"DLCM" | u16 version | u32 header length | UTF-8 JSON header | float64 payload

where the header lists the transform specs, ``T``, ``cg_iters`` and every
parameter's name and shape in payload order.
"""

import csv
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .admm import DlcTlModel
from .mri import EncodingOperator, SamplingMask
from .transforms import TransformSpec

__all__ = [
    "FormatError",
    "SliceRecord",
    "atomic_write_bytes",
    "dump_array",
    "load_array",
    "load_model",
    "read_array",
    "read_dataset",
    "save_model",
    "write_array",
    "write_dataset",
]

ARRAY_MAGIC = b"DLCT"
MODEL_MAGIC = b"DLCM"
VERSION = 1
_DTYPES = {0: np.dtype("<c16"), 1: np.dtype("<f8")}


class FormatError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def atomic_write_bytes(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_array(arr):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        code, data = 0, arr.astype("<c16")
    else:
        code, data = 1, arr.astype("<f8")
    header = ARRAY_MAGIC + struct.pack("<HHH", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(data).tobytes()


def load_array(buf):
    if len(buf) < 10:
        raise FormatError("truncated header", len(buf))
    if buf[:4] != ARRAY_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}", 0)
    version, code, ndim = struct.unpack_from("<HHH", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}", 6)
    end = 10 + 8 * ndim
    if len(buf) < end:
        raise FormatError("truncated dimension list", len(buf))
    dims = struct.unpack_from(f"<{ndim}Q", buf, 10)
    dtype = _DTYPES[code]
    need = dtype.itemsize * int(np.prod(dims, dtype=np.int64))
    have = len(buf) - end
    if have < need:
        raise FormatError(f"truncated payload: expected {need} bytes, found {have}", len(buf))
    if have > need:
        raise FormatError(f"{have - need} trailing bytes after payload", end + need)
    return np.frombuffer(buf, dtype=dtype, offset=end).reshape(dims).copy()


def write_array(path, arr):
    atomic_write_bytes(path, dump_array(arr))


def read_array(path):
    return load_array(Path(path).read_bytes())


# --- checkpoints --------------------------------------------------------------


def _model_bytes(model):
    params = model.parameters()
    header = {
        "specs": [s.to_string() for s in model.specs],
        "T": int(model.T),
        "cg_iters": int(model.cg_iters),
        "params": [[name, list(np.shape(v))] for name, v in params.items()],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.values())
    return MODEL_MAGIC + struct.pack("<HI", VERSION, len(hbytes)) + hbytes + payload


def save_model(model, path):
    atomic_write_bytes(path, _model_bytes(model))


def load_model(path, expected_specs=None):
    buf = Path(path).read_bytes()
    if len(buf) < 10:
        raise FormatError("truncated checkpoint header", len(buf))
    if buf[:4] != MODEL_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0)
    version, hlen = struct.unpack_from("<HI", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    if len(buf) < 10 + hlen:
        raise FormatError("truncated checkpoint header", len(buf))
    try:
        header = json.loads(buf[10:10 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}", 10) from exc
    specs = tuple(TransformSpec.from_string(s) for s in header["specs"])
    if expected_specs is not None and tuple(expected_specs) != specs:
        raise ValueError(
            f"checkpoint transforms {[s.to_string() for s in specs]} do not match "
            f"expected {[s.to_string() for s in expected_specs]}"
        )
    offset = 10 + hlen
    params = {}
    for name, shape in header["params"]:
        n = 8 * int(np.prod(shape, dtype=np.int64))
        if len(buf) < offset + n:
            raise FormatError(f"truncated payload in parameter {name!r}", len(buf))
        params[name] = np.frombuffer(buf, "<f8", int(np.prod(shape)), offset).reshape(shape).copy()
        offset += n
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes", offset)
    try:
        kernels = [
            [params[f"W{l + 1}.{q + 1}"] for q in range(s.num_cascades)]
            for l, s in enumerate(specs)
        ]
        return DlcTlModel(
            specs, kernels, params["log_rho"], params["log_lam"], params["log_eta"],
            T=header["T"], cg_iters=header["cg_iters"],
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint parameters inconsistent with header: {exc}") from exc


# --- dataset layout -------------------------------------------------------------

MANIFEST = "manifest.tsv"
MANIFEST_FIELDS = ["slice", "subject", "split"]


@dataclass
class SliceRecord:
    slice_id: int
    subject: str
    split: str
    x_ref: np.ndarray
    coils: np.ndarray
    y: np.ndarray
    mask: SamplingMask

    @property
    def op(self):
        return EncodingOperator(self.coils, self.mask)


def _slice_path(root, subject, k, kind):
    return Path(root) / subject / f"slice_{k}.{kind}.dlct"


def write_dataset(root, records):
    """Write slices grouped by subject, one mask per subject, and the manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for rec in records:
        (root / rec.subject).mkdir(exist_ok=True)
        write_array(_slice_path(root, rec.subject, rec.slice_id, "xref"), rec.x_ref)
        write_array(_slice_path(root, rec.subject, rec.slice_id, "coils"), rec.coils)
        write_array(_slice_path(root, rec.subject, rec.slice_id, "y"), rec.y)
        write_array(root / rec.subject / "mask.dlct", rec.mask.vector)
    lines = ["\t".join(MANIFEST_FIELDS)]
    lines += [f"{r.slice_id}\t{r.subject}\t{r.split}" for r in records]
    atomic_write_bytes(root / MANIFEST, ("\n".join(lines) + "\n").encode())


def read_manifest(root):
    with open(Path(root) / MANIFEST, newline="") as f:
        rows = list(csv.DictReader(f, delimiter="\t"))
    if rows and set(MANIFEST_FIELDS) - set(rows[0]):
        raise FormatError("manifest is missing required columns")
    return rows


def read_dataset(root, split=None):
    root = Path(root)
    out = []
    for row in read_manifest(root):
        if split is not None and row["split"] != split:
            continue
        k, subject = int(row["slice"]), row["subject"]
        out.append(
            SliceRecord(
                k,
                subject,
                row["split"],
                read_array(_slice_path(root, subject, k, "xref")),
                read_array(_slice_path(root, subject, k, "coils")),
                read_array(_slice_path(root, subject, k, "y")),
                SamplingMask.from_vector(read_array(root / subject / "mask.dlct")),
            )
        )
    return out
