"""Lens identifiers, metadata records and their numeric encoding.

Lens names follow ``<Brand><Focal>mmf<FNumber>BS``, e.g. ``Sony50mmf16.0BS``.
A lens is encoded as ``[k_1, ..., k_{n-1}, aperture]`` where ``k_i`` is +1 for
the i-th brand of the registry and -1 otherwise, so the last brand is the
all-minus-one code.
"""

from __future__ import annotations

import io
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DimensionError, LensNameError, UnknownBrandError, ValidationError

DEFAULT_BRANDS = ("Sony", "Canon")

_NUMBER = re.compile(r"\d+(?:\.\d+)?")


@dataclass(frozen=True)
class LensSpec:
    brand: str
    focal_length_mm: float
    f_number: float
    raw_name: str = field(default="", compare=False)

    def __post_init__(self):
        if not (self.f_number > 0 and math.isfinite(self.f_number)):
            raise ValidationError(f"f_number must be positive, got {self.f_number}")
        if not (self.focal_length_mm > 0 and math.isfinite(self.focal_length_mm)):
            raise ValidationError(f"focal_length_mm must be positive, got {self.focal_length_mm}")

    @property
    def name(self) -> str:
        return format_lens_name(self)

    @property
    def short_label(self) -> str:
        """Abbreviation used in cross-tab tables, e.g. ``Canon1.4``."""
        return f"{self.brand}{_fmt_number(self.f_number, min_decimals=0)}"

    def key(self):
        return (self.brand, self.focal_length_mm, self.f_number)


@dataclass(frozen=True)
class LensCode:
    brand_code: tuple
    aperture: float

    def __post_init__(self):
        if any(k not in (-1, 1) for k in self.brand_code):
            raise ValidationError(f"brand code entries must be -1 or +1, got {self.brand_code}")

    def as_list(self) -> list:
        return [float(k) for k in self.brand_code] + [float(self.aperture)]


@dataclass(frozen=True)
class MetaTuple:
    id: str
    source: LensSpec
    target: LensSpec
    disparity: float

    def __post_init__(self):
        if not (self.disparity >= 0 and math.isfinite(self.disparity)):
            raise ValidationError(f"disparity must be a non-negative real, got {self.disparity}")

    @property
    def is_transformation(self) -> bool:
        s, t = self.source, self.target
        return s.brand != t.brand or s.f_number != t.f_number

    def swapped(self) -> "MetaTuple":
        return MetaTuple(self.id, self.target, self.source, self.disparity)


def _fmt_number(x: float, min_decimals: int = 1) -> str:
    if float(x).is_integer():
        return f"{int(x)}" if min_decimals == 0 else f"{x:.{min_decimals}f}"
    return repr(float(x))


def format_lens_name(spec: LensSpec) -> str:
    """Canonical identifier for ``spec``; inverse of :func:`parse_lens_name`."""
    return f"{spec.brand}{_fmt_number(spec.focal_length_mm, 0)}mmf{_fmt_number(spec.f_number)}BS"


def parse_lens_name(name: str, registry: Sequence[str] = DEFAULT_BRANDS) -> LensSpec:
    """Parse a lens identifier such as ``Canon50mmf1.4BS``.

    Raises :class:`LensNameError` naming the first token that breaks the
    grammar, or :class:`UnknownBrandError` when the brand is not registered.
    """
    text = name.strip()
    pos = 0
    m = re.match(r"[A-Za-z]+", text)
    if not m:
        raise LensNameError(name, text[:1] or "", "expected a brand name")
    brand = m.group(0)
    pos = m.end()
    if brand.endswith("mmf") and len(brand) > 3:
        raise LensNameError(name, "mmf", "expected a focal length before 'mmf'")

    m = _NUMBER.match(text, pos)
    if not m:
        raise LensNameError(name, text[pos:pos + 3] or "<end>", "expected a focal length")
    focal = float(m.group(0))
    pos = m.end()

    for literal, what in (("mm", "'mm' after the focal length"), ("f", "'f' before the f-number")):
        if not text.startswith(literal, pos):
            raise LensNameError(name, text[pos:] or "<end>", f"expected {what}")
        pos += len(literal)

    m = _NUMBER.match(text, pos)
    if not m:
        raise LensNameError(name, text[pos:] or "<end>", "expected an f-number")
    f_number = float(m.group(0))
    pos = m.end()

    if text[pos:] != "BS":
        raise LensNameError(name, text[pos:] or "<end>", "expected suffix 'BS'")

    if brand not in registry:
        raise UnknownBrandError(brand, registry)
    if focal <= 0 or f_number <= 0:
        raise LensNameError(name, m.group(0), "focal length and f-number must be positive")
    return LensSpec(brand, focal, f_number, raw_name=text)


def encode_lens(spec: LensSpec, registry: Sequence[str] = DEFAULT_BRANDS) -> LensCode:
    if len(registry) < 2:
        raise ValidationError("a brand registry needs at least two brands")
    if spec.brand not in registry:
        raise UnknownBrandError(spec.brand, registry)
    idx = list(registry).index(spec.brand)
    code = tuple(1 if i == idx else -1 for i in range(len(registry) - 1))
    return LensCode(code, float(spec.f_number))


def transformation_magnitude(src: LensCode, tgt: LensCode) -> float:
    """Scalar size of a lens transformation.

    Same brand: ``|delta aperture|``. Otherwise the number of differing brand
    code entries is added, so a brand change always counts for more than an
    aperture change of the same size alone.
    """
    if len(src.brand_code) != len(tgt.brand_code):
        raise DimensionError(
            f"brand codes have different lengths ({len(src.brand_code)} vs {len(tgt.brand_code)})"
        )
    # L1 distance of +-1 vectors is 2 per differing entry
    brand_term = sum(abs(a - b) for a, b in zip(src.brand_code, tgt.brand_code)) / 2
    return brand_term + abs(src.aperture - tgt.aperture)


def lens_values(spec: LensSpec, registry: Sequence[str] = DEFAULT_BRANDS) -> list:
    """Scalars fed to the lens embedding for one lens.

    For a two-brand registry this is the single signed aperture
    ``brand_code[0] * aperture``; larger registries embed every code entry
    and the aperture separately.
    """
    code = encode_lens(spec, registry)
    if len(code.brand_code) == 1:
        return [code.brand_code[0] * code.aperture]
    return code.as_list()


def meta_values(meta: MetaTuple, registry: Sequence[str] = DEFAULT_BRANDS) -> list:
    """Flat scalar list ``[source..., target..., disparity]`` for one record."""
    return lens_values(meta.source, registry) + lens_values(meta.target, registry) + [float(meta.disparity)]


def num_meta_values(registry: Sequence[str] = DEFAULT_BRANDS) -> int:
    n = len(registry)
    per_lens = 1 if n == 2 else n
    return 2 * per_lens + 1


# -- metadata file ---------------------------------------------------------

def parse_meta_line(line: str, registry: Sequence[str] = DEFAULT_BRANDS) -> MetaTuple | None:
    """Parse ``id,source,target,disparity``; returns None for blank/comment lines."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    fields = [f.strip() for f in stripped.split(",")]
    if len(fields) != 4:
        raise ValidationError(f"expected 4 comma-separated fields, got {len(fields)}: {line.rstrip()!r}")
    rec_id, src, tgt, disp = fields
    if not rec_id:
        raise ValidationError(f"empty record id in {line.rstrip()!r}")
    try:
        disparity = float(disp)
    except ValueError:
        raise ValidationError(f"disparity {disp!r} is not a number (record {rec_id})") from None
    return MetaTuple(rec_id, parse_lens_name(src, registry), parse_lens_name(tgt, registry), disparity)


def read_meta_file(path, registry: Sequence[str] = DEFAULT_BRANDS) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                rec = parse_meta_line(line, registry)
            except ValidationError as exc:
                raise ValidationError(f"{os.fspath(path)}:{lineno}: {exc}") from exc
            if rec is not None:
                records.append(rec)
    return records


def format_meta_line(meta: MetaTuple) -> str:
    return f"{meta.id},{meta.source.name},{meta.target.name},{_fmt_number(meta.disparity)}"


def write_meta_file(path, records: Iterable[MetaTuple]) -> None:
    buf = io.StringIO()
    for rec in records:
        buf.write(format_meta_line(rec) + "\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())
