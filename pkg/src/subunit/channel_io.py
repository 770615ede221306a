"""JSON channel files.

Schema::

    {
      "d_in": 4, "d_out": 4,          # optional, inferred from d_a * d_b
      "d_a": 2, "d_b": 2,
      "repr": "kraus" | "choi" | "superop" | "liouville",
      "data": [...],                  # nested lists of [re, im] pairs
      "certificate": {...}            # optional, e.g. a separable decomposition
    }

``kraus`` data is a list of matrices; the other representations are a
single matrix.  ``liouville`` is taken in the Pauli (or Gell-Mann) product
basis used throughout the package.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import InvalidChannelError, InvalidInputError
from .liouville import BipartiteChannel, Channel, product_basis

REPRS = ("kraus", "choi", "superop", "liouville")


class ChannelFileError(InvalidInputError):
    pass


def _complex_array(obj, where: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise ChannelFileError(f"{where}: entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _encode(a: np.ndarray) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def parse_channel(text: str, source: str = "<string>") -> BipartiteChannel:
    """Parse a channel document; errors carry the line and column when available."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ChannelFileError(f"{source}:{err.lineno}:{err.colno}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise ChannelFileError(f"{source}: top level must be an object")
    missing = [k for k in ("d_a", "d_b", "repr", "data") if k not in doc]
    if missing:
        raise ChannelFileError(f"{source}: missing field(s) {', '.join(missing)}")
    d_a, d_b, rep = int(doc["d_a"]), int(doc["d_b"]), doc["repr"]
    d = d_a * d_b
    if doc.get("d_in", d) != d or doc.get("d_out", d) != d:
        raise ChannelFileError(f"{source}: d_in/d_out must equal d_a*d_b = {d}")
    if rep not in REPRS:
        raise ChannelFileError(f"{source}: repr must be one of {', '.join(REPRS)}")
    try:
        data = _complex_array(doc["data"], f"{source}: data")
    except (ValueError, TypeError) as err:
        raise ChannelFileError(f"{source}: data is not a rectangular array ({err})") from None
    try:
        if rep == "kraus":
            if data.ndim != 3 or data.shape[1:] != (d, d):
                raise ChannelFileError(f"{source}: kraus data must have shape (k, {d}, {d})")
            ch = Channel.from_kraus(list(data))
        else:
            if data.shape != (d * d, d * d):
                raise ChannelFileError(f"{source}: {rep} data must be {d * d}x{d * d}")
            if rep == "choi":
                ch = Channel.from_choi(data, d, d)
            elif rep == "superop":
                ch = Channel(data, d, d).validate()
            else:
                b = product_basis(d_a, d_b)
                ch = Channel.from_liouville(data, b, b)
    except InvalidChannelError as err:
        raise InvalidChannelError(f"{source}: {err}") from None
    return BipartiteChannel(ch, d_a, d_b)


def load_channel(path) -> BipartiteChannel:
    p = Path(path)
    return parse_channel(p.read_text(), str(p))


def channel_document(bch: BipartiteChannel, rep: str = "kraus", certificate: dict | None = None) -> dict:
    if rep not in REPRS:
        raise InvalidInputError(f"repr must be one of {', '.join(REPRS)}")
    ch = bch.channel
    if rep == "kraus":
        data = [_encode(k) for k in ch.kraus]
    elif rep == "choi":
        data = _encode(ch.choi)
    elif rep == "superop":
        data = _encode(ch.superop)
    else:
        data = _encode(bch.liouville)
    doc = {"d_in": bch.dim, "d_out": bch.dim, "d_a": bch.d_a, "d_b": bch.d_b, "repr": rep, "data": data}
    if certificate is not None:
        doc["certificate"] = certificate
    return doc


def dump_channel(bch: BipartiteChannel, path, rep: str = "kraus", certificate: dict | None = None) -> None:
    Path(path).write_text(json.dumps(channel_document(bch, rep, certificate), indent=1))
