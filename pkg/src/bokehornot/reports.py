"""Plain-text and JSON-lines renderings of dataset statistics and metric reports."""

import json
import math
from collections import Counter

from .engine import EvalResult


def _fmt(x, digits=3):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.{digits}f}"


def grid(labels, cell, corner="Source\\Target", width=10):
    """Rows are source lenses, columns target lenses; ``cell(src, tgt)`` gives the text."""
    lines = [f"{corner:<14}" + "".join(f"{lab:>{width}}" for lab in labels)]
    for s in labels:
        lines.append(f"{s:<14}" + "".join(f"{cell(s, t):>{width}}" for t in labels))
    return "\n".join(lines)


def lens_labels(metas):
    specs = {}
    for m in metas:
        specs[m.source.short_label] = m.source
        specs[m.target.short_label] = m.target
    return [lab for lab, spec in sorted(specs.items(), key=lambda kv: (kv[1].brand, kv[1].f_number))]


def transformation_counts(metas):
    return Counter((m.source.short_label, m.target.short_label) for m in metas)


def disparity_percentages(metas):
    counts = Counter(float(m.disparity) for m in metas)
    total = sum(counts.values())
    return {d: 100.0 * counts[d] / total for d in sorted(counts)}


def format_stats(metas, baseline: EvalResult) -> str:
    labels = lens_labels(metas)
    counts = transformation_counts(metas)
    out = [f"Transformation distribution ({len(metas)} pairs)",
           grid(labels, lambda s, t: str(counts.get((s, t), 0))),
           "",
           "Disparity distribution"]
    for d, pct in disparity_percentages(metas).items():
        out.append(f"  {_fmt(d, 1):>6}  {pct:6.2f}%")
    out += ["", format_table(baseline, "Source vs target (baseline)")]
    return "\n".join(out) + "\n"


def format_table(result: EvalResult, title: str) -> str:
    o = result.overall
    lpips = _fmt(o.extra["lpips"]) if "lpips" in o.extra else "n/a"
    out = [title,
           f"{'Dataset':<10}{'PSNR':>10}{'SSIM':>10}{'LPIPS':>10}",
           f"{'all':<10}{_fmt(o.psnr_db):>10}{_fmt(o.ssim):>10}{lpips:>10}"]
    for name, value in sorted(o.extra.items()):
        if name != "lpips":
            out.append(f"  {name}: {_fmt(value)}")
    for key, attr in (("PSNR", "psnr_db"), ("SSIM", "ssim")):
        out += ["", f"{key} of different transformation pairs",
                grid(result.labels, lambda s, t, a=attr: _fmt(getattr(result.groups[(s, t)], a))
                     if (s, t) in result.groups else "-")]
    return "\n".join(out)


def format_records(result: EvalResult) -> str:
    lines = [f"id={s.id} source={s.source} target={s.target} psnr={_fmt(s.psnr, 4)} ssim={_fmt(s.ssim, 5)}"
             + "".join(f" {k}={_fmt(v, 5)}" for k, v in sorted(s.extra.items()))
             for s in result.scores]
    o = result.overall
    lines.append(f"# overall count={o.count} psnr={_fmt(o.psnr_db, 4)} ssim={_fmt(o.ssim, 5)} "
                 f"infinite_psnr={o.infinite_psnr}")
    return "\n".join(lines) + "\n"


def _json_num(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def json_records(result: EvalResult, metas=None) -> str:
    rows = [{"type": "image", "id": s.id, "source": s.source, "target": s.target,
             "psnr": _json_num(s.psnr), "ssim": s.ssim, **s.extra} for s in result.scores]
    for (src, tgt), rep in result.groups.items():
        rows.append({"type": "group", "source": src, "target": tgt, "count": rep.count,
                     "psnr": _json_num(rep.psnr_db), "ssim": rep.ssim})
    o = result.overall
    rows.append({"type": "overall", "count": o.count, "psnr": _json_num(o.psnr_db), "ssim": o.ssim,
                 "infinite_psnr": o.infinite_psnr, **o.extra})
    if metas is not None:
        for (src, tgt), n in sorted(transformation_counts(metas).items()):
            rows.append({"type": "transformation", "source": src, "target": tgt, "count": n})
        for d, pct in disparity_percentages(metas).items():
            rows.append({"type": "disparity", "value": d, "percent": pct})
    return "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
