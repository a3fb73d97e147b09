"""Binary PGM (P5) and PPM (P6) codecs, maxval 255 only."""

import numpy as np

from .errors import DimensionError, FormatError


def _tokens(buf):
    """Yield header tokens and the offset just past the single whitespace after the last one."""
    pos = 0
    n = len(buf)
    while True:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        yield buf[start:pos], pos + 1


def decode_pnm(buf):
    toks = _tokens(buf)
    magic, _ = next(toks)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported PNM magic {magic!r}")
    try:
        width = int(next(toks)[0])
        height = int(next(toks)[0])
        tok, offset = next(toks)
        maxval = int(tok)
    except ValueError as e:
        raise FormatError(f"bad PNM header: {e}") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    count = width * height * channels
    data = np.frombuffer(buf, dtype=np.uint8, count=-1, offset=offset)
    if data.size < count:
        raise FormatError(f"PNM payload has {data.size} bytes, expected {count}")
    data = data[:count]
    shape = (height, width) if channels == 1 else (height, width, 3)
    return data.reshape(shape).copy()


def encode_pnm(img):
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise DimensionError(f"expected uint8 pixels, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise DimensionError(f"cannot encode array of shape {img.shape} as PNM")
    h, w = img.shape[:2]
    return magic + b"\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def read_pnm(path):
    with open(path, "rb") as f:
        return decode_pnm(f.read())


def write_pnm(path, img):
    with open(path, "wb") as f:
        f.write(encode_pnm(img))
