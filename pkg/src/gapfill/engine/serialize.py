"""Binary model container.

Layout (all integers little-endian)::

    b"GAPF"            4-byte magic
    version            uint8, currently 1
    header_length      uint32
    header             UTF-8 JSON: networks (spec, seed, parameter keys/shapes)
                       plus any caller metadata (model kind, scaler, ...)
    parameter blocks   float32 little-endian, networks and parameters in
                       declaration order
    checksum           uint32 CRC-32 of header + parameter blocks
"""

from __future__ import annotations

import json
import struct
import zlib
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import ModelFileError
from .network import Network, NetworkSpec, NetworkWeights

MAGIC = b"GAPF"
VERSION = 1
_LE_F32 = np.dtype("<f4")


def dumps(networks: "dict[str, Network]", metadata: dict | None = None) -> bytes:
    header = {"metadata": metadata or {}, "networks": []}
    blocks = []
    for name, net in networks.items():
        params = net.parameters()
        header["networks"].append(
            {
                "name": name,
                "seed": net.seed,
                "spec": net.spec.to_dict(),
                "parameters": [{"key": k, "shape": list(v.shape)} for k, v in params.items()],
            }
        )
        blocks.extend(np.ascontiguousarray(v, dtype=_LE_F32).tobytes() for v in params.values())
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = head + b"".join(blocks)
    return (
        MAGIC
        + struct.pack("<BI", VERSION, len(head))
        + payload
        + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    )


def loads(data: bytes) -> tuple["OrderedDict[str, Network]", dict]:
    if len(data) < 13 or data[:4] != MAGIC:
        raise ModelFileError("not a gapfill model file")
    version, head_len = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version {version}")
    payload = data[9:-4]
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ModelFileError("checksum mismatch, model file is corrupt")
    try:
        header = json.loads(payload[:head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"unreadable header: {exc}") from exc
    offset = head_len
    networks = OrderedDict()
    for entry in header["networks"]:
        net = Network(NetworkSpec.from_dict(entry["spec"]), seed=entry["seed"])
        arrays = OrderedDict()
        for p in entry["parameters"]:
            shape = tuple(p["shape"])
            n = int(np.prod(shape)) * 4
            if offset + n > len(payload):
                raise ModelFileError("parameter blocks truncated")
            arrays[p["key"]] = np.frombuffer(payload, dtype=_LE_F32, count=n // 4, offset=offset).reshape(shape)
            offset += n
        net.set_weights(NetworkWeights(arrays, entry["seed"]))
        networks[entry["name"]] = net
    if offset != len(payload):
        raise ModelFileError("trailing bytes after parameter blocks")
    return networks, header["metadata"]


def save(path, networks, metadata=None) -> Path:
    path = Path(path)
    path.write_bytes(dumps(networks, metadata))
    return path


def load(path):
    return loads(Path(path).read_bytes())
