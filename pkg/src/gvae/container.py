"""Shared binary container for model checkpoints and array bundles.

Layout: the magic string "GVAE1", a one-byte header-extension length
followed by that many bytes of "key=value;key=value" ASCII metadata, then
repeated blocks until end of file.  Each block is

    in-dim  (unsigned 32-bit little-endian)
    out-dim (unsigned 32-bit little-endian)
    activation id (1 byte)
    row-major float32 weights, shape (out-dim, in-dim)
    float32 biases, length out-dim

Network layers map onto blocks directly.  Auxiliary arrays (labels,
standardizer statistics) reuse the same block layout with activation id
ACT_AUX and an all-zero bias.
"""

import struct

import numpy as np

__all__ = ["write_container", "read_container", "Block", "ACT_AUX"]

MAGIC = b"GVAE1"

ACT_IDS = {"identity": 0, "tanh": 1, "relu": 2, "sigmoid": 3, "exp": 4}
ACT_NAMES = {v: k for k, v in ACT_IDS.items()}
ACT_AUX = 254  # block carries a plain array, not a network layer


class Block:
    def __init__(self, weights, bias=None, act_id=ACT_AUX):
        self.weights = np.atleast_2d(np.asarray(weights, dtype=np.float32))
        if bias is None:
            bias = np.zeros(self.weights.shape[0], dtype=np.float32)
        self.bias = np.asarray(bias, dtype=np.float32)
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal the block's out-dim")
        self.act_id = int(act_id)


def _encode_meta(meta: dict) -> bytes:
    if not meta:
        return b""
    payload = ";".join("%s=%s" % (k, v) for k, v in meta.items()).encode("ascii")
    if len(payload) > 255:
        raise ValueError("header extension too long")
    return payload


def _decode_meta(payload: bytes) -> dict:
    if not payload:
        return {}
    out = {}
    for item in payload.decode("ascii").split(";"):
        key, _, value = item.partition("=")
        out[key] = value
    return out


def write_container(path, blocks, meta=None) -> None:
    ext = _encode_meta(meta or {})
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", len(ext)))
        f.write(ext)
        for b in blocks:
            out_dim, in_dim = b.weights.shape
            f.write(struct.pack("<IIB", in_dim, out_dim, b.act_id))
            f.write(np.ascontiguousarray(b.weights, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(b.bias, dtype="<f4").tobytes())


def read_container(path):
    """Returns (meta dict, list of Block)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError("not a GVAE1 container: %s" % path)
    pos = len(MAGIC)
    ext_len = data[pos]
    pos += 1
    meta = _decode_meta(data[pos : pos + ext_len])
    pos += ext_len
    blocks = []
    while pos < len(data):
        if pos + 9 > len(data):
            raise ValueError("truncated block header in %s" % path)
        in_dim, out_dim, act_id = struct.unpack_from("<IIB", data, pos)
        pos += 9
        n_w = out_dim * in_dim
        n_b = out_dim
        end = pos + 4 * (n_w + n_b)
        if end > len(data):
            raise ValueError("truncated block payload in %s" % path)
        weights = np.frombuffer(data, dtype="<f4", count=n_w, offset=pos)
        weights = weights.reshape(out_dim, in_dim).copy()
        bias = np.frombuffer(data, dtype="<f4", count=n_b, offset=pos + 4 * n_w).copy()
        blocks.append(Block(weights, bias, act_id))
        pos = end
    return meta, blocks
