import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from priormix.core.errors import MagicMismatch, ParseError
from priormix.learning.model import MlpModel

logger = logging.getLogger(__name__)

# Layout: b"PMLP", uint32 number of dims, uint32 dims..., then every layer's
# weight (row-major, fan_in x fan_out) followed by its bias, all little-endian float64.
CHECKPOINT_MAGIC = b"PMLP"


def save_checkpoint(model: MlpModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dims = model.layer_dims
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack(f"<I{len(dims)}I", len(dims), *dims))
        for param in model.parameters():
            f.write(np.ascontiguousarray(param, dtype="<f8").tobytes())
    logger.debug(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> MlpModel:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise MagicMismatch(f"{path}: not a model checkpoint")
    if len(data) < 8:
        raise ParseError(f"{path}: truncated checkpoint header")
    (n_dims,) = struct.unpack_from("<I", data, 4)
    header_end = 8 + 4 * n_dims
    if len(data) < header_end or (len(data) - header_end) % 8:
        raise ParseError(f"{path}: truncated checkpoint")
    dims = struct.unpack_from(f"<{n_dims}I", data, 8)

    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes.extend([(fan_in, fan_out), (fan_out,)])
    expected = sum(int(np.prod(s)) for s in shapes)
    values = np.frombuffer(data, dtype="<f8", offset=header_end)
    if values.size != expected:
        raise ParseError(f"{path}: {values.size} parameters, expected {expected}")

    params, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        params.append(values[offset:offset + size].astype(np.float64).reshape(shape))
        offset += size
    return MlpModel(layer_dims=dims, weights=tuple(params[0::2]), biases=tuple(params[1::2]))
