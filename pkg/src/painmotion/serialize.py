"""Deterministic binary container for model checkpoints.

Layout: 8-byte magic, uint64 header length, UTF-8 JSON header, then the raw
C-order bytes of every array concatenated in header order.  Unlike zip-based
containers there are no timestamps, so saving the same state twice produces
byte-identical files (required for reproducibility checks).
"""

import json

import numpy as np

MAGIC = b"PMCHKPT1"


def save_arrays(path, meta, arrays):
    """Write ``meta`` (JSON-serializable dict) and named arrays to ``path``.

    ``arrays`` is a dict name -> ndarray.  Keys are stored sorted so the
    byte layout does not depend on dict insertion order.
    """
    names = sorted(arrays)
    manifest = []
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "arrays": manifest}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint64(len(header)).tobytes())
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_arrays(path):
    """Read a container written by :func:`save_arrays`.

    Returns (meta, arrays) where arrays is a dict name -> ndarray.
    """
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a painmotion checkpoint (bad magic {magic!r})")
        (hlen,) = np.frombuffer(fh.read(8), dtype=np.uint64)
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return header["meta"], arrays
