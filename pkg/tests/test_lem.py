import math

import numpy as np
import pytest
import torch

from bokehornot.errors import ConfigError
from bokehornot.lem import LensEmbedding, lem_forward, scalar_to_lens_value, sinusoidal_embed
from bokehornot.lens_meta import LensCode, LensSpec, encode_lens, parse_lens_name

from conftest import grad_check


def test_scalar_to_lens_value():
    assert scalar_to_lens_value(encode_lens(LensSpec("Canon", 50, 1.4))) == -1.4
    assert scalar_to_lens_value(encode_lens(LensSpec("Sony", 50, 1.8))) == 1.8
    assert scalar_to_lens_value(encode_lens(LensSpec("Sony", 50, 16.0))) == 16.0
    with pytest.raises(ConfigError):
        scalar_to_lens_value(LensCode((1, -1), 2.0))


def test_sinusoidal_zero():
    emb = sinusoidal_embed(0.0, 48)
    assert emb.shape == (48,)
    np.testing.assert_array_equal(emb.numpy(), np.tile([0.0, 1.0], 24))


def test_sinusoidal_direct_formula():
    emb = sinusoidal_embed(torch.tensor(1.4, dtype=torch.float64), 4)
    expected = [math.sin(1.4), math.cos(1.4), math.sin(1.4 / 100), math.cos(1.4 / 100)]
    np.testing.assert_allclose(emb.numpy(), expected, rtol=0, atol=1e-15)


def test_sinusoidal_matches_loop_oracle():
    dim = 48
    for v in [-16.0, -1.4, 0.3, 3.0, 16.0, 250.0]:
        oracle = []
        for i in range(dim // 2):
            oracle += [math.sin(v / 10000 ** (2 * i / dim)), math.cos(v / 10000 ** (2 * i / dim))]
        got = sinusoidal_embed(torch.tensor(v, dtype=torch.float64), dim).numpy()
        np.testing.assert_allclose(got, oracle, atol=1e-12)
        assert np.all(np.abs(got) <= 1.0)


def test_sinusoidal_batched_and_odd_dim():
    v = torch.tensor([[1.0, -2.0, 3.0]])
    assert sinusoidal_embed(v, 8).shape == (1, 3, 8)
    with pytest.raises(ConfigError):
        sinusoidal_embed(1.0, 7)


def test_lem_output_shape_and_finite():
    torch.manual_seed(0)
    lem = LensEmbedding()
    for src, tgt, d in [(16.0, -1.4, 0.0), (1.8, 1.8, 4.0), (-1e4, 1e4, 1e3)]:
        out = lem_forward(src, tgt, d, lem)
        assert out.shape == (48,)
        assert torch.isfinite(out).all()
    assert lem.fc1.in_features == 3 * 48 and lem.fc1.out_features == 96


def test_lem_init_and_zero_maps():
    torch.manual_seed(0)
    lem = LensEmbedding()
    assert lem.fc1.weight.abs().max() <= 1 / math.sqrt(144)
    assert (lem.fc1.bias == 0).all() and (lem.fc2.bias == 0).all()
    with torch.no_grad():
        lem.fc1.weight.zero_()
        lem.fc2.weight.zero_()
    assert torch.equal(lem_forward(16.0, -1.4, 2.0, lem), torch.zeros(48))


def test_lem_determinism():
    torch.manual_seed(1)
    lem = LensEmbedding().eval()
    a = lem_forward(16.0, -1.4, 2.0, lem)
    b = lem_forward(16.0, -1.4, 2.0, lem)
    assert torch.equal(a, b)


def test_lem_distinguishes_dataset_lenses():
    torch.manual_seed(2)
    lem = LensEmbedding()
    values = [scalar_to_lens_value(encode_lens(parse_lens_name(n)))
              for n in ["Canon50mmf1.4BS", "Canon50mmf1.8BS", "Sony50mmf1.8BS", "Sony50mmf16.0BS"]]
    for as_source in (True, False):
        outs = torch.stack([lem_forward(v, 16.0, 2.0, lem) if as_source else lem_forward(16.0, v, 2.0, lem)
                            for v in values])
        dist = torch.cdist(outs, outs)
        assert torch.all(dist.diagonal() == 0)
        off = dist[~torch.eye(4, dtype=bool)]
        assert torch.all(off > 0)


def test_lem_gradient_matches_finite_differences():
    torch.manual_seed(3)
    lem = LensEmbedding().double()
    readout = torch.randn(48, dtype=torch.float64)
    vals = torch.tensor([[16.0, -1.4, 2.0], [1.8, 1.4, 0.0]], dtype=torch.float64)

    def fn():
        return (lem(vals) * readout).sum()

    worst, report = grad_check(fn, dict(lem.named_parameters()), max_entries=60)
    assert set(report) == {"fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "<pooled>"}
    assert worst < 1e-4, report
