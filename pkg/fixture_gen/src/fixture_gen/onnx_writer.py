"""Minimal ONNX serializer: enough of the protobuf wire format to emit a
small CNN classifier (Conv/Relu/MaxPool/Flatten/Gemm/Softmax).

The pip mirror carries no `onnx` package, so the file is assembled directly
from the stable ModelProto field layout. Output is validated downstream by
loading through cv2.dnn and comparing inference against the training
framework.
"""

from __future__ import annotations

import struct

import numpy as np

FLOAT = 1
INT64 = 7


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _len_field(field: int, payload: bytes) -> bytes:
    return _tag(field, 2) + _varint(len(payload)) + payload


def _str_field(field: int, value: str) -> bytes:
    return _len_field(field, value.encode("utf-8"))


def _int_field(field: int, value: int) -> bytes:
    return _tag(field, 0) + _varint(value)


def attr_int(name: str, value: int) -> bytes:
    return _str_field(1, name) + _int_field(3, value) + _int_field(20, 2)  # type INT


def attr_ints(name: str, values) -> bytes:
    body = _str_field(1, name)
    for v in values:
        body += _int_field(8, int(v))
    return body + _int_field(20, 7)  # type INTS


def attr_float(name: str, value: float) -> bytes:
    return (_str_field(1, name) + _tag(2, 5) + struct.pack("<f", value)
            + _int_field(20, 1))  # type FLOAT


def node(op_type: str, inputs, outputs, attrs=(), name: str = "") -> bytes:
    body = b""
    for i in inputs:
        body += _str_field(1, i)
    for o in outputs:
        body += _str_field(2, o)
    if name:
        body += _str_field(3, name)
    body += _str_field(4, op_type)
    for attr in attrs:
        body += _len_field(5, attr)
    return body


def tensor_f32(name: str, array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    body = b""
    for d in arr.shape:
        body += _int_field(1, int(d))
    body += _int_field(2, FLOAT)
    body += _str_field(8, name)
    body += _len_field(9, arr.tobytes())
    return body


def tensor_i64(name: str, array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<i8")
    body = b""
    for d in arr.shape:
        body += _int_field(1, int(d))
    body += _int_field(2, INT64)
    body += _str_field(8, name)
    body += _len_field(9, arr.tobytes())
    return body


def value_info(name: str, shape, elem_type: int = FLOAT) -> bytes:
    dims = b""
    for d in shape:
        dims += _len_field(1, _int_field(1, int(d)))  # Dimension.dim_value
    tensor_type = _int_field(1, elem_type) + _len_field(2, dims)
    type_proto = _len_field(1, tensor_type)
    return _str_field(1, name) + _len_field(2, type_proto)


def model(graph_name: str, nodes, initializers, inputs, outputs,
          opset: int = 13, producer: str = "fixture-gen") -> bytes:
    graph = b""
    for n in nodes:
        graph += _len_field(1, n)
    graph += _str_field(2, graph_name)
    for t in initializers:
        graph += _len_field(5, t)
    for vi in inputs:
        graph += _len_field(11, vi)
    for vi in outputs:
        graph += _len_field(12, vi)
    opset_id = _str_field(1, "") + _int_field(2, opset)
    return (
        _int_field(1, 8)  # ir_version
        + _str_field(2, producer)
        + _str_field(3, "0.1.0")
        + _len_field(7, graph)
        + _len_field(8, opset_id)
    )
