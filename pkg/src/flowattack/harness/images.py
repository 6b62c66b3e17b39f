"""Binary PGM (P5) dumps of clean, adversarial and magnified-perturbation images."""

import numpy as np

from ..exceptions import ContractError, ParseError
from .checkpoint import atomic_write

GAIN = 5.0


def to_bytes(img):
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    img = np.asarray(img)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise ContractError("PGM output needs single-channel images")
        img = img[0]
    h, w = img.shape
    data = f"P5\n{w} {h}\n255\n".encode("ascii") + to_bytes(img).tobytes()
    try:
        atomic_write(path, data)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror}") from err


def read_pgm(path):
    with open(path, "rb") as f:
        raw = f.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", offset=pos)
        fields.append(raw[start:pos])
    if fields[0] != b"P5" or fields[3] != b"255":
        raise ParseError("only P5 with maxval 255 is supported", offset=0)
    w, h = int(fields[1]), int(fields[2])
    pos += 1
    if len(raw) < pos + w * h:
        raise ParseError("truncated PGM payload", offset=len(raw))
    return np.frombuffer(raw, np.uint8, w * h, pos).reshape(h, w)


def perturbation_image(clean, adversarial, gain=GAIN):
    return np.clip(0.5 + gain * (np.asarray(adversarial, np.float64) - np.asarray(clean, np.float64)), 0, 1)


def dump_images(clean, adversarial, prefix, gain=GAIN):
    """Write ``<prefix>_clean.pgm``, ``<prefix>_adv.pgm`` and ``<prefix>_pert.pgm``."""
    clean = np.asarray(clean)
    adversarial = np.asarray(adversarial)
    if clean.shape != adversarial.shape:
        raise ContractError("clean and adversarial images differ in shape")
    paths = [f"{prefix}_clean.pgm", f"{prefix}_adv.pgm", f"{prefix}_pert.pgm"]
    write_pgm(paths[0], clean)
    write_pgm(paths[1], adversarial)
    write_pgm(paths[2], perturbation_image(clean, adversarial, gain))
    return paths
