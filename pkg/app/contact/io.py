import json
import logging
import struct
from pathlib import Path

import numpy as np

from app.contact.maps import NO_PART, ContactMap, HumanContact, RobotContact
from app.exceptions import ContactFormatError, PartArityError
from app.geometry.cloud import PointCloud


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"GACM"
NONE_BYTE = 255

KINDS: dict[str, type[ContactMap]] = {
    "human": HumanContact,
    "robot": RobotContact,
}


def save_contact(contact: ContactMap, path: Path | str) -> None:
    """
    Contact file: magic, little-endian uint32 header length, JSON header,
    float32 contact values, uint8 part ids (255 = none)
    """
    header = json.dumps(
        {
            "version": FORMAT_VERSION,
            "kind": contact.kind,
            "n_points": len(contact),
            "arity": contact.arity,
            "object_hash": contact.object_hash,
        },
        sort_keys=True,
    ).encode()
    parts = np.where(contact.parts == NO_PART, NONE_BYTE, contact.parts).astype(np.uint8)
    payload = b"".join(
        [
            MAGIC,
            struct.pack("<I", len(header)),
            header,
            contact.contact.astype("<f4").tobytes(),
            parts.tobytes(),
        ]
    )
    try:
        Path(path).write_bytes(payload)
    except OSError as e:
        raise ContactFormatError(f"Failed to write contact file {path}: {e}") from e


def _check_expected(
    arity: int, n_points: int, expected_arity: int | None, cloud: PointCloud | None
) -> None:
    if expected_arity is not None and arity != expected_arity:
        raise PartArityError(f"part arity mismatch: file has {arity}, expected {expected_arity}")
    if cloud is not None and n_points != len(cloud):
        raise ContactFormatError(
            f"contact file has {n_points} points but the object cloud has {len(cloud)}"
        )


def load_contact(
    path: Path | str, arity: int | None = None, cloud: PointCloud | None = None
) -> ContactMap:
    """Read a contact file, validating it against an expected arity and object cloud"""
    path = Path(path)
    if path.suffix == ".json":
        return load_contact_json(path, arity=arity, cloud=cloud)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ContactFormatError(f"Failed to read contact file {path}: {e}") from e

    if data[:4] != MAGIC or len(data) < 8:
        raise ContactFormatError(f"{path} is not a contact file")
    (length,) = struct.unpack_from("<I", data, 4)
    try:
        header = json.loads(data[8 : 8 + length])
        version, kind = header["version"], header["kind"]
        n, file_arity = int(header["n_points"]), int(header["arity"])
    except (ValueError, KeyError, TypeError) as e:
        raise ContactFormatError(f"{path}: malformed header: {e}") from e
    if version != FORMAT_VERSION:
        raise ContactFormatError(f"{path}: unsupported version {version}")
    if kind not in KINDS:
        raise ContactFormatError(f"{path}: unknown contact kind '{kind}'")
    _check_expected(file_arity, n, arity, cloud)

    offset = 8 + length
    if len(data) != offset + 5 * n:
        raise ContactFormatError(f"{path}: payload size does not match {n} points")
    values = np.frombuffer(data, dtype="<f4", count=n, offset=offset).astype(np.float32)
    raw = np.frombuffer(data, dtype=np.uint8, count=n, offset=offset + 4 * n)
    parts = np.where(raw == NONE_BYTE, NO_PART, raw).astype(np.int64)

    contact = KINDS[kind](
        contact=values, parts=parts, arity=file_arity, object_hash=header.get("object_hash", "")
    )
    if cloud is not None and contact.object_hash and contact.object_hash != cloud.content_hash:
        logger.warning("%s was generated for a different object cloud", path)
    return contact


def load_contact_json(
    path: Path | str, arity: int | None = None, cloud: PointCloud | None = None
) -> ContactMap:
    """
    Dense JSON contact: {"contact": [...], "parts": [[one-hot row], ...]}, with
    optional "kind" (default human) and "object_hash"
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text())
        values = np.asarray(document["contact"], dtype=np.float64)
        rows = np.asarray(document["parts"], dtype=np.float64)
    except OSError as e:
        raise ContactFormatError(f"Failed to read contact file {path}: {e}") from e
    except (ValueError, KeyError, TypeError) as e:
        raise ContactFormatError(f"{path}: malformed contact document: {e}") from e

    kind = document.get("kind", "human")
    if kind not in KINDS:
        raise ContactFormatError(f"{path}: unknown contact kind '{kind}'")
    if rows.ndim != 2:
        raise ContactFormatError(f"{path}: parts must be a list of rows")
    _check_expected(rows.shape[1], len(values), arity, cloud)
    return KINDS[kind].from_rows(values, rows, object_hash=document.get("object_hash", ""))
