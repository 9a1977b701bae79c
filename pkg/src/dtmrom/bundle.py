"""RomBundle container and the DTMROM1 single-file format.

Layout: magic ``DTMROM1\\n``, u32 section count, then per section
``u16 name length, name, u8 kind, u8 ndim, u64 dims..., payload``.
Kinds: ``f`` float64, ``i`` int64 (index arrays stored 1-based), ``j`` UTF-8 JSON.
Arrays are column-major and little-endian.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import RegionedMap, patches_from_config
from .online import QuadratureRule, ReducedModel, Regressor
from .problems import data_fn_for, datum_for, estimator_weight_for, make_assembler

MAGIC = b"DTMROM1\n"

# array sections: name -> (kind, one_based)
_ARRAYS = {
    "elements": ("i", True),
    "conn": ("i", True),
    "node_ids": ("i", True),
    "node_labels": ("i", False),
    "node_refs": ("f", False),
    "eq_positions": ("i", True),
    "eq_weights": ("f", False),
    "est_positions": ("i", True),
    "est_weights": ("f", False),
    "Z_un": ("f", False),
    "W_un": ("f", False),
    "e_un": ("f", False),
    "Y_un": ("f", False),
    "eta_un": ("f", False),
    "eim_dofs": ("i", True),
    "eim_labels": ("i", False),
    "eim_refs": ("f", False),
    "eim_comps": ("i", False),
    "reg_mus": ("f", False),
    "reg_alphas": ("f", False),
    "Z_full": ("f", False),
    "W_full": ("f", False),
    "e_full": ("f", False),
    "full_node_labels": ("i", False),
    "full_node_refs": ("f", False),
}


@dataclass(eq=False)
class RomBundle:
    header: dict
    arrays: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.arrays[key]

    def get(self, key, default=None):
        return self.arrays.get(key, default)

    @property
    def N(self) -> int:
        return int(self.arrays["Z_un"].shape[-1])

    @property
    def Q(self) -> int:
        return int(self.arrays["eq_positions"].size)

    @property
    def Q_r(self) -> int:
        pos = self.arrays.get("est_positions")
        return 0 if pos is None else int(pos.size)

    def info(self) -> dict:
        out = dict(self.header)
        out.update({"N": self.N, "Q": self.Q, "Q_r": self.Q_r})
        out["provenance"] = self.provenance
        return out


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_section(buf, name: str, kind: str, arr: np.ndarray | bytes):
    nb = name.encode("ascii")
    buf.write(struct.pack("<H", len(nb)))
    buf.write(nb)
    if kind == "j":
        buf.write(b"j")
        buf.write(struct.pack("<B", 1))
        buf.write(struct.pack("<Q", len(arr)))
        buf.write(arr)
        return
    a = np.asarray(arr)
    buf.write(kind.encode("ascii"))
    buf.write(struct.pack("<B", a.ndim))
    for d in a.shape:
        buf.write(struct.pack("<Q", d))
    dt = "<f8" if kind == "f" else "<i8"
    buf.write(np.asarray(a, dtype=dt).ravel(order="F").tobytes())


def bundle_bytes(bundle: RomBundle) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    names = [n for n in _ARRAYS if n in bundle.arrays]
    buf.write(struct.pack("<I", 2 + len(names)))
    _write_section(buf, "header", "j", _json_bytes(bundle.header))
    for n in names:
        kind, one = _ARRAYS[n]
        a = np.asarray(bundle.arrays[n])
        _write_section(buf, n, kind, a + 1 if one else a)
    _write_section(buf, "provenance", "j", _json_bytes(bundle.provenance))
    return buf.getvalue()


def write_bundle(bundle: RomBundle, path) -> None:
    Path(path).write_bytes(bundle_bytes(bundle))


def parse_bundle(data: bytes) -> RomBundle:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("bundle truncated")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(len(MAGIC))) != MAGIC:
        raise FormatError("not a DTMROM1 bundle (magic/version mismatch)")
    (count,) = struct.unpack("<I", take(4))
    header, prov, arrays = None, {}, {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", take(2))
        name = bytes(take(ln)).decode("ascii")
        kind = bytes(take(1)).decode("ascii")
        (ndim,) = struct.unpack("<B", take(1))
        dims = [struct.unpack("<Q", take(8))[0] for _ in range(ndim)]
        if kind == "j":
            obj = json.loads(bytes(take(dims[0])).decode("utf-8"))
            if name == "header":
                header = obj
            elif name == "provenance":
                prov = obj
            continue
        if kind not in ("f", "i") or name not in _ARRAYS:
            raise FormatError(f"unknown bundle section '{name}'")
        n = int(np.prod(dims)) if dims else 1
        dt = "<f8" if kind == "f" else "<i8"
        a = np.frombuffer(bytes(take(8 * n)), dtype=dt).reshape(dims, order="F")
        # C order so that reloaded models reproduce in-memory results bit for bit
        a = np.ascontiguousarray(a, dtype=np.float64 if kind == "f" else np.int64)
        if _ARRAYS[name][1]:
            a = a - 1
        arrays[name] = a
    if pos != len(view):
        raise FormatError("trailing bytes after last section")
    if header is None:
        raise FormatError("bundle has no header")
    return RomBundle(header, arrays, prov)


def read_bundle(path) -> RomBundle:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read bundle {path}: {exc}") from exc
    return parse_bundle(data)


def model_from_bundle(bundle: RomBundle) -> ReducedModel:
    """Online reduced model; touches only the sampled elements stored in the bundle."""
    h = bundle.header
    a = bundle.arrays
    asm = make_assembler(h["problem"], h["dim"], h["p"], h["geom_order"], h.get("settings", {}))
    patches, _, _ = patches_from_config(h["geometry"])
    geo = RegionedMap(patches, np.array(h["mu_bar"]), a["node_labels"], a["node_refs"],
                      frozenset(h["identity_labels"]))
    rule = QuadratureRule(a["eq_positions"], a["eq_weights"])
    est = QuadratureRule(a["est_positions"], a["est_weights"]) if "est_positions" in a else None
    eim = None
    if "eim_dofs" in a:
        eim = {"labels": a["eim_labels"], "refs": a["eim_refs"], "comps": a["eim_comps"],
               "tags": np.array(h["eim_tags"], dtype=object)}
    reg = Regressor(a["reg_mus"], a["reg_alphas"], np.array(h["param_box"])) if "reg_mus" in a else None
    model = ReducedModel(asm, geo, a["conn"], a["Z_un"], rule, data_fn=data_fn_for(h["problem"]),
                         W_un=a.get("W_un"), eim=eim, datum=datum_for(h["problem"]), e_un=a.get("e_un"),
                         Y_un=a.get("Y_un"), est_rule=est, eta_un=a.get("eta_un"), regressor=reg,
                         est_weight=estimator_weight_for(h["problem"]))
    model.Z_full = a.get("Z_full")
    model.W_full = a.get("W_full")
    model.e_full = a.get("e_full")
    return model
