"""Atomic file writes: outputs land complete or not at all."""

from __future__ import annotations

import io
import os
import tempfile

_PIL_FORMATS = {
    ".png": "PNG",
    ".pgm": "PPM",
    ".ppm": "PPM",
    ".pbm": "PPM",
}


def atomic_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_text(path, text: str) -> None:
    atomic_bytes(path, text.encode("utf-8"))


def pil_format_for(path) -> str:
    ext = os.path.splitext(os.fspath(path))[1].lower()
    try:
        return _PIL_FORMATS[ext]
    except KeyError:
        raise ValueError(
            f"unsupported image extension {ext!r}; use one of {sorted(_PIL_FORMATS)}"
        ) from None


def atomic_pil(path, image) -> None:
    buf = io.BytesIO()
    image.save(buf, format=pil_format_for(path))
    atomic_bytes(path, buf.getvalue())
