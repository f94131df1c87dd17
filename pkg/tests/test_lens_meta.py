import itertools

import pytest
from hypothesis import given, strategies as st

from bokehornot.errors import DimensionError, LensNameError, UnknownBrandError, ValidationError
from bokehornot.lens_meta import (
    LensCode, LensSpec, MetaTuple, encode_lens, format_lens_name, format_meta_line, lens_values,
    meta_values, parse_lens_name, parse_meta_line, read_meta_file, transformation_magnitude,
    write_meta_file,
)

DATASET_LENS_NAMES = ["Canon50mmf1.4BS", "Canon50mmf1.8BS", "Sony50mmf1.8BS", "Sony50mmf16.0BS"]


def code(brand, f):
    return encode_lens(LensSpec(brand, 50, f))


def test_parse_examples():
    spec = parse_lens_name("Canon50mmf1.4BS")
    assert (spec.brand, spec.focal_length_mm, spec.f_number) == ("Canon", 50, 1.4)
    spec = parse_lens_name("Sony50mmf16.0BS")
    assert (spec.brand, spec.focal_length_mm, spec.f_number) == ("Sony", 50, 16.0)


@pytest.mark.parametrize("name, token", [
    ("Sony50mmBS", "BS"),
    ("Sony50mmf1.8", "<end>"),
    ("Sonymmf1.8BS", "mmf"),
    ("50mmf1.8BS", "5"),
    ("Sony50f1.8BS", "f1.8BS"),
    ("Sony50mmf1.8XX", "XX"),
])
def test_parse_errors_name_token(name, token):
    with pytest.raises(LensNameError) as exc:
        parse_lens_name(name)
    assert exc.value.token == token
    assert repr(token) in str(exc.value)


def test_unknown_brand():
    with pytest.raises(UnknownBrandError):
        parse_lens_name("Nikon50mmf1.8BS")
    assert parse_lens_name("Nikon50mmf1.8BS", registry=("Sony", "Canon", "Nikon")).brand == "Nikon"


@pytest.mark.parametrize("name", DATASET_LENS_NAMES)
def test_dataset_lens_names_round_trip(name):
    assert format_lens_name(parse_lens_name(name)) == name


@given(st.sampled_from(["Sony", "Canon"]),
       st.integers(1, 999),
       st.one_of(st.integers(1, 64).map(float), st.integers(10, 640).map(lambda k: k / 10)))
def test_round_trip_generated(brand, focal, f_number):
    name = format_lens_name(LensSpec(brand, focal, f_number))
    parsed = parse_lens_name(name)
    assert (parsed.brand, parsed.focal_length_mm, parsed.f_number) == (brand, focal, f_number)
    assert format_lens_name(parsed) == name


def test_short_label():
    assert parse_lens_name("Canon50mmf1.4BS").short_label == "Canon1.4"
    assert parse_lens_name("Sony50mmf16.0BS").short_label == "Sony16"


def test_encode_examples():
    assert code("Canon", 1.4) == LensCode((-1,), 1.4)
    assert code("Sony", 16.0) == LensCode((1,), 16.0)
    assert code("Sony", 1.8) == code("Sony", 1.8)


def test_encode_general_registry():
    reg = ("A", "B", "C", "D")
    codes = [encode_lens(LensSpec(b, 50, 2.0), reg).brand_code for b in reg]
    assert codes == [(1, -1, -1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1)]
    assert len(set(codes)) == 4


def test_invalid_specs():
    with pytest.raises(ValidationError):
        LensSpec("Sony", 50, 0.0)
    with pytest.raises(ValidationError):
        LensSpec("Sony", -5, 1.4)
    with pytest.raises(ValidationError):
        LensCode((0,), 1.4)
    with pytest.raises(UnknownBrandError):
        encode_lens(LensSpec("Leica", 50, 1.4))


def test_magnitude_worked_values():
    assert transformation_magnitude(code("Sony", 1.8), code("Sony", 16.0)) == pytest.approx(14.2, abs=1e-12)
    assert transformation_magnitude(code("Sony", 1.4), code("Sony", 1.8)) == pytest.approx(0.4, abs=1e-12)


def test_magnitude_brand_and_aperture_exceeds_brand_only():
    # enumerate under the formula: brand flip contributes 1, apertures |delta|
    brand_only = transformation_magnitude(code("Sony", 1.8), code("Canon", 1.8))
    both = transformation_magnitude(code("Sony", 1.8), code("Canon", 16.0))
    assert brand_only == pytest.approx(1.0)
    assert both == pytest.approx(1.0 + 14.2)
    assert both > brand_only


def test_magnitude_dimension_error():
    with pytest.raises(DimensionError):
        transformation_magnitude(LensCode((1,), 1.4), LensCode((1, -1), 1.4))


ALL_CODES = [code(b, f) for b, f in itertools.product(["Sony", "Canon"], [1.4, 1.8, 16.0])]


def test_magnitude_symmetry_identity():
    for a, b in itertools.product(ALL_CODES, repeat=2):
        assert transformation_magnitude(a, b) == transformation_magnitude(b, a)
    for a in ALL_CODES:
        assert transformation_magnitude(a, a) == 0


def test_lens_values_signed_aperture():
    assert lens_values(LensSpec("Canon", 50, 1.4)) == [-1.4]
    assert lens_values(LensSpec("Sony", 50, 1.8)) == [1.8]
    meta = MetaTuple("1", LensSpec("Sony", 50, 16.0), LensSpec("Canon", 50, 1.4), 3.0)
    assert meta_values(meta) == [16.0, -1.4, 3.0]
    assert len(meta_values(meta, ("Sony", "Canon", "Nikon"))) == 7


def test_meta_line_parsing(tmp_path):
    rec = parse_meta_line(" 00042 , Sony50mmf16.0BS,Canon50mmf1.4BS , 3.0 ")
    assert rec.id == "00042" and rec.source.f_number == 16.0 and rec.target.brand == "Canon"
    assert rec.disparity == 3.0
    assert parse_meta_line("# comment") is None
    assert parse_meta_line("   ") is None
    assert format_meta_line(rec) == "00042,Sony50mmf16.0BS,Canon50mmf1.4BS,3.0"
    with pytest.raises(ValidationError):
        parse_meta_line("00042,Sony50mmf16.0BS,Canon50mmf1.4BS")
    with pytest.raises(ValidationError):
        parse_meta_line("00042,Sony50mmf16.0BS,Canon50mmf1.4BS,-1")
    with pytest.raises(LensNameError):
        parse_meta_line("00042,Sony50mmBS,Canon50mmf1.4BS,1")

    path = tmp_path / "meta.txt"
    path.write_text("# header\n00001,Sony50mmf1.8BS,Canon50mmf1.8BS,0\n\n00002,Canon50mmf1.4BS,Sony50mmf16.0BS,4.5\n")
    recs = read_meta_file(path)
    assert [r.id for r in recs] == ["00001", "00002"]
    write_meta_file(tmp_path / "again.txt", recs)
    assert read_meta_file(tmp_path / "again.txt") == recs


def test_meta_file_error_has_line_number(tmp_path):
    path = tmp_path / "meta.txt"
    path.write_text("00001,Sony50mmf1.8BS,Canon50mmf1.8BS,0\n00002,Sony50mmf1.8,Canon50mmf1.8BS,0\n")
    with pytest.raises(ValidationError, match=":2:"):
        read_meta_file(path)
