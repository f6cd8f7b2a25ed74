"""Binary checkpoint format.

Layout::

    b"CLSTM\\0"                  magic, 6 bytes
    uint16 LE                    format version
    uint32 LE                    header length in bytes
    UTF-8 JSON header            {"config", "vocab", "blocks": [{name, rows, cols, ndim, offset}]}
    float32 LE payload           blocks back to back in manifest order

``offset`` counts bytes from the start of the payload. Parameters are stored
in single precision, so float32 models round-trip bit-exactly.
"""

import json
import struct

import numpy as np

from .data import Vocab
from .errors import CheckpointError
from .model import Model, ModelConfig

MAGIC = b"CLSTM\0"
VERSION = 1


def dumps(model):
    manifest = []
    payload = []
    offset = 0
    for name, arr in model.params.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        rows, cols = (1, a.shape[0]) if a.ndim == 1 else a.shape
        manifest.append({"name": name, "rows": rows, "cols": cols, "ndim": a.ndim, "offset": offset})
        payload.append(a.tobytes())
        offset += a.nbytes
    header = {"config": model.config.to_dict(), "vocab": model.vocab.to_dict(), "blocks": manifest}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<HI", VERSION, len(hbytes)), hbytes, *payload])


def loads(buf):
    if len(buf) < len(MAGIC) + 6 or buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    version, hlen = struct.unpack_from("<HI", buf, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    start = len(MAGIC) + 6
    try:
        header = json.loads(buf[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    data = memoryview(buf)[start + hlen:]
    params = {}
    for block in header["blocks"]:
        n = block["rows"] * block["cols"]
        lo, hi = block["offset"], block["offset"] + 4 * n
        if hi > len(data):
            raise CheckpointError(f"truncated payload for block {block['name']}")
        arr = np.frombuffer(data[lo:hi], dtype="<f4").astype(np.float32)
        shape = (block["cols"],) if block.get("ndim", 2) == 1 else (block["rows"], block["cols"])
        params[block["name"]] = arr.reshape(shape)
    config = ModelConfig.from_dict(header["config"])
    return Model(config, Vocab.from_dict(header["vocab"]), params)


def save_checkpoint(path, model):
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
