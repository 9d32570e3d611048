"""Model file format.

Layout of a model file:

    CAVNET1\\n
    HEADER <nbytes>\\n
    <nbytes of UTF-8 JSON describing input shape, class count and layers>
    DATA\\n
    <little-endian float64 parameter blobs, in layer declaration order:
     Dense -> weights (row-major out x in) then bias; Conv2d -> kernels
     (row-major out_c x in_c x kh x kw)>

The round trip is bit-exact for all parameters.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .network import Conv2d, Dense, Flatten, Network, Relu

MAGIC = b"CAVNET1\n"

__all__ = ["serialize", "deserialize", "save_model", "load_model", "ModelFormatError"]


class ModelFormatError(ValueError):
    """Raised for malformed model streams or unsupported format versions."""


def _layer_spec(layer):
    if isinstance(layer, Dense):
        return {"kind": "dense", "out": layer.weights.shape[0], "in": layer.weights.shape[1]}
    if isinstance(layer, Conv2d):
        oc, ic, kh, kw = layer.kernels.shape
        return {
            "kind": "conv2d",
            "out_channels": oc,
            "in_channels": ic,
            "kernel": [kh, kw],
            "stride": layer.stride,
            "padding": layer.padding,
        }
    if isinstance(layer, Relu):
        return {"kind": "relu"}
    if isinstance(layer, Flatten):
        return {"kind": "flatten"}
    raise TypeError(f"unknown layer {layer!r}")


def serialize(net: Network) -> bytes:
    header = {
        "input_shape": list(net.input_shape),
        "n_classes": net.n_classes,
        "layers": [_layer_spec(l) for l in net.layers],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(b"HEADER %d\n" % len(header_bytes))
    buf.write(header_bytes)
    buf.write(b"DATA\n")
    for layer in net.layers:
        if isinstance(layer, Dense):
            buf.write(layer.weights.astype("<f8").tobytes())
            buf.write(layer.bias.astype("<f8").tobytes())
        elif isinstance(layer, Conv2d):
            buf.write(layer.kernels.astype("<f8").tobytes())
    return buf.getvalue()


def _read_exact(stream, n, what):
    data = stream.read(n)
    if len(data) != n:
        raise ModelFormatError(f"truncated stream while reading {what}")
    return data


def _read_line(stream, what):
    line = b""
    while not line.endswith(b"\n"):
        ch = stream.read(1)
        if not ch:
            raise ModelFormatError(f"truncated stream while reading {what}")
        line += ch
    return line


def deserialize(data: bytes) -> Network:
    stream = io.BytesIO(data)
    magic = stream.read(len(MAGIC))
    if magic[:6] == b"CAVNET" and magic != MAGIC:
        raise ModelFormatError(f"unsupported format version {magic!r}")
    if magic != MAGIC:
        raise ModelFormatError("not a CAVNET1 model stream")
    header_line = _read_line(stream, "header size")
    if not header_line.startswith(b"HEADER "):
        raise ModelFormatError("missing HEADER line")
    try:
        n_header = int(header_line[len(b"HEADER ") : -1])
    except ValueError as e:
        raise ModelFormatError("bad HEADER size") from e
    try:
        header = json.loads(_read_exact(stream, n_header, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError("bad header JSON") from e
    if _read_line(stream, "DATA marker") != b"DATA\n":
        raise ModelFormatError("missing DATA marker")

    def read_f8(count, what):
        raw = _read_exact(stream, 8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    try:
        input_shape = tuple(int(d) for d in header["input_shape"])
        n_classes = int(header["n_classes"])
        specs = header["layers"]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError("incomplete header") from e

    layers = []
    for spec in specs:
        kind = spec.get("kind")
        if kind == "dense":
            out, inp = int(spec["out"]), int(spec["in"])
            w = read_f8(out * inp, "dense weights").reshape(out, inp)
            b = read_f8(out, "dense bias")
            layers.append(Dense(w, b))
        elif kind == "conv2d":
            oc, ic = int(spec["out_channels"]), int(spec["in_channels"])
            kh, kw = (int(v) for v in spec["kernel"])
            k = read_f8(oc * ic * kh * kw, "conv kernels").reshape(oc, ic, kh, kw)
            layers.append(Conv2d(k, int(spec["stride"]), int(spec["padding"])))
        elif kind == "relu":
            layers.append(Relu())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ModelFormatError(f"unknown layer kind {kind!r}")
    if stream.read(1):
        raise ModelFormatError("trailing bytes after parameter data")
    try:
        return Network(input_shape, tuple(layers), n_classes)
    except ValueError as e:
        raise ModelFormatError(f"inconsistent model description: {e}") from e


def save_model(net: Network, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize(net))


def load_model(path) -> Network:
    with open(path, "rb") as f:
        return deserialize(f.read())
