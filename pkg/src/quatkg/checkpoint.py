"""Binary checkpoints and text embedding export.

Checkpoint layout::

    QUATRE<TAB>1<TAB>|E|<TAB>|R|<TAB>n<TAB>64\\n
    entity:   plane r (|E| x n), plane i, plane j, plane k
    relation: plane r (|R| x n), plane i, plane j, plane k
    rot1:     same as relation
    rot2:     same as relation

Planes are raw little-endian IEEE floats of the width given in the header
(32 or 64), row-major by entity/relation id.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import TABLES, ParamStore

MAGIC = "QUATRE"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _le_dtype(width: int) -> np.dtype:
    if width == 64:
        return np.dtype("<f8")
    if width == 32:
        return np.dtype("<f4")
    raise CheckpointError(f"unsupported float width {width}")


def save_checkpoint(path, params: ParamStore) -> None:
    width = params.dtype.itemsize * 8
    dt = _le_dtype(width)
    header = f"{MAGIC}\t{VERSION}\t{params.n_entities}\t{params.n_relations}\t{params.dim}\t{width}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        for name in TABLES:
            table = params.table(name)
            f.write(np.ascontiguousarray(table.transpose(1, 0, 2), dtype=dt).tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as f:
        line = f.readline()
    try:
        fields = line.decode("ascii").rstrip("\n").split("\t")
    except UnicodeDecodeError:
        raise CheckpointError(f"{path}: not a checkpoint (bad header)") from None
    if len(fields) != 6 or fields[0] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad header {line[:40]!r})")
    version, n_ent, n_rel, dim, width = (int(x) for x in fields[1:])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    return {"n_entities": n_ent, "n_relations": n_rel, "dim": dim, "width": width, "header_bytes": len(line)}


def load_checkpoint(path) -> ParamStore:
    path = Path(path)
    head = read_header(path)
    dt = _le_dtype(head["width"])
    n_ent, n_rel, dim = head["n_entities"], head["n_relations"], head["dim"]
    raw = np.fromfile(path, dtype=dt, offset=head["header_bytes"])
    expected = 4 * dim * (n_ent + 3 * n_rel)
    if raw.size != expected:
        raise CheckpointError(f"{path}: expected {expected} values after header, found {raw.size}")
    native = dt.newbyteorder("=")
    tables, pos = [], 0
    for rows in (n_ent, n_rel, n_rel, n_rel):
        count = 4 * rows * dim
        planes = raw[pos:pos + count].reshape(4, rows, dim)
        tables.append(np.ascontiguousarray(planes.transpose(1, 0, 2), dtype=native))
        pos += count
    return ParamStore(*tables)


def check_compatible(params: ParamStore, n_entities: int, n_relations: int, source="checkpoint") -> None:
    if params.n_entities != n_entities or params.n_relations != n_relations:
        raise CheckpointError(
            f"{source} has |E|={params.n_entities}, |R|={params.n_relations} "
            f"but the dataset has |E|={n_entities}, |R|={n_relations}"
        )


def _rows(f, labels, table):
    flat = table.reshape(table.shape[0], -1)
    for label, row in zip(labels, flat):
        f.write(label + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")


def export_text(path, params: ParamStore, entity_labels=None, relation_labels=None, relations=False) -> None:
    """One line per embedding: label, then the 4n values (r plane, i, j, k).

    With ``relations=True`` the file is split into ``# entity``, ``# relation``,
    ``# rot1`` and ``# rot2`` sections.
    """
    ent_labels = entity_labels or [str(i) for i in range(params.n_entities)]
    rel_labels = relation_labels or [str(i) for i in range(params.n_relations)]
    with open(path, "w", encoding="utf-8") as f:
        if relations:
            f.write("# entity\n")
        _rows(f, ent_labels, params.entity)
        if relations:
            for name in TABLES[1:]:
                f.write(f"# {name}\n")
                _rows(f, rel_labels, params.table(name))


def read_text_export(path) -> dict[str, tuple[list[str], np.ndarray]]:
    """Parse an export back into ``{section: (labels, (rows, 4, n) array)}``."""
    sections: dict[str, tuple[list, list]] = {}
    current = "entity"
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                current = line[2:].strip()
                continue
            label, *values = line.split("\t")
            labels, rows = sections.setdefault(current, ([], []))
            labels.append(label)
            rows.append([float(v) for v in values])
    out = {}
    for name, (labels, rows) in sections.items():
        arr = np.array(rows, dtype=np.float64)
        out[name] = (labels, arr.reshape(len(labels), 4, -1))
    return out
