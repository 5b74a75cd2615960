"""Binary weight checkpoints.

Layout: ``b"NNW1"``, 32-byte SHA-256 digest of the network spec, parameter
count as ``<u8``, then the parameters as ``<f8`` in layout order.
"""

import struct

import numpy as np

from ..errors import FormatError
from .network import Network, count_params

MAGIC = b"NNW1"
_HEADER = struct.Struct("<4s32sQ")


def save_weights(path, net):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, net.spec.digest(), net.n_params))
        fh.write(net.weights.astype("<f8").tobytes())


def load_weights(path, spec):
    """Read a checkpoint written for ``spec``; the spec digest must match."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, digest, n = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if digest != spec.digest():
            raise FormatError(f"{path}: checkpoint was written for a different network spec")
        if n != count_params(spec):
            raise FormatError(f"{path}: parameter count {n} does not match spec")
        body = fh.read()
    if len(body) != 8 * n:
        raise FormatError(f"{path}: expected {8 * n} bytes of weights, found {len(body)}")
    return Network(spec, np.frombuffer(body, dtype="<f8").astype(np.float64))
