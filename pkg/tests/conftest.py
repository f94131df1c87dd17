import sys

import numpy as np
import pytest
import torch

from bokehornot.data import SynthConfig, generate_synthetic, load_dataset
from bokehornot.lens_meta import LensSpec, MetaTuple


def central_difference(fn, tensor, indices, h=1e-6):
    """Numerical d fn / d tensor[idx] for each flat index, by central differences."""
    flat = tensor.data.view(-1)
    out = []
    for i in indices:
        orig = flat[i].item()
        flat[i] = orig + h
        plus = float(fn())
        flat[i] = orig - h
        minus = float(fn())
        flat[i] = orig
        out.append((plus - minus) / (2 * h))
    return np.array(out)


def relative_error(analytic, numeric):
    analytic, numeric = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / scale


def grad_check(fn, params, max_entries=None, rng=None, h=1e-6):
    """Compare autograd against central differences over ``params``.

    ``params`` maps names to leaf tensors with requires_grad. ``max_entries``
    samples at most that many entries per tensor. Returns the worst
    per-tensor relative error and the per-tensor report; the pooled error
    over every sampled entry is stored under ``report["<pooled>"]``.
    """
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    fn().backward()
    worst = 0.0
    report = {}
    all_a, all_n = [], []
    for name, p in params.items():
        n = p.numel()
        idx = np.arange(n) if max_entries is None or n <= max_entries else rng.choice(n, max_entries, replace=False)
        analytic = p.grad.detach().view(-1)[idx].numpy()
        with torch.no_grad():
            numeric = central_difference(fn, p, idx, h)
        err = relative_error(analytic, numeric)
        report[name] = err
        worst = max(worst, err)
        all_a.append(analytic)
        all_n.append(numeric)
    report["<pooled>"] = relative_error(np.concatenate(all_a), np.concatenate(all_n))
    return worst, report


def lens(brand, f):
    return LensSpec(brand, 50.0, f)


@pytest.fixture
def meta_sharp_to_blur():
    return MetaTuple("00001", lens("Sony", 16.0), lens("Canon", 1.4), 2.0)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    generate_synthetic(SynthConfig(image_size=(64, 64), num_pairs=6, seed=3), root)
    return root


@pytest.fixture(scope="session")
def synth_pairs(synth_root):
    return [r.load() for r in load_dataset(synth_root)]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.format_result(number))
