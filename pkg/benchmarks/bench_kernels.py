"""Time every kernel under the compiled and NumPy backends.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]
"""
import argparse
import json
import sys
import timeit

import numpy as np
from scipy import ndimage

from paperecg import _backend, edgeline, synth
from paperecg.edgeline import HoughConfig, canny_auto, theta_table


def workloads(rng):
    sh = synth.render(synth.SynthSpec(sheet_type=2, leads=("V1",), duration=3.0, rotation=-3.0), 1)
    gray = sh.gray()
    img = np.ascontiguousarray(gray.pixels)
    gx, gy = edgeline.gradients(gray)
    gx, gy = np.ascontiguousarray(gx), np.ascontiguousarray(gy)
    mag = np.ascontiguousarray(np.hypot(gx, gy))
    bins = np.ascontiguousarray(edgeline.direction_bins(gx, gy))
    edges = canny_auto(gray).edges
    blobs = np.ascontiguousarray((ndimage.gaussian_filter(rng.random((300, 400)), 2.0) > 0.5).astype(np.uint8))
    ys, xs = np.nonzero(edges)
    order = rng.permutation(ys.size)
    ys = np.ascontiguousarray(ys[order], dtype=np.int64)
    xs = np.ascontiguousarray(xs[order], dtype=np.int64)
    ctab, stab = theta_table(HoughConfig())
    numrho = 2 * sum(edges.shape) + 1
    T, H = 500, 150
    xwb = np.ascontiguousarray(rng.normal(size=(T, 4 * H)))
    U = np.ascontiguousarray(rng.uniform(-1, 1, (4 * H, H)) / np.sqrt(H))
    dh = np.zeros((T, H))
    dh[-1] = rng.normal(size=H)

    def fwd_bwd(k):
        _, cs, g = k.lstm_forward(xwb, U)
        return k.lstm_backward(g, cs, U, dh)

    return {
        "median_filter_u8 (5x5)": lambda k: k.median_filter_u8(img, 5),
        "gradients7": lambda k: k.gradients7(img, edgeline._SMOOTH, edgeline._DERIV_CORR),
        "gradient_nms": lambda k: k.gradient_nms(gx, gy, edgeline._TAN22, edgeline._TAN67),
        "non_max_suppress": lambda k: k.non_max_suppress(mag, bins),
        "hysteresis": lambda k: k.hysteresis(mag, 40.0, 120.0),
        "label_components (8)": lambda k: k.label_components(blobs, 8),
        "trace_borders": lambda k: k.trace_borders(blobs),
        "hough_ppht": lambda k: k.hough_ppht(edges, ys, xs, ctab, stab, numrho, 40, 100, 10, 400),
        "lstm forward+backward (T=500, H=150)": fwd_bwd,
    }, img.shape


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    backends = _backend.available()
    if "compiled" not in backends:
        print("compiled extension not built; timing the NumPy backend only", file=sys.stderr)
    jobs, shape = workloads(np.random.default_rng(0))
    print(f"sheet image {shape[1]}x{shape[0]}, best of {args.repeat}")
    print(f"{'kernel':40s} " + " ".join(f"{n:>10s}" for n in backends) + "    speedup")
    rows = []
    for name, fn in jobs.items():
        t = {}
        for bname, mod in backends.items():
            fn(mod)     # warm up
            t[bname] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        sp = t["python"] / t["compiled"] if "compiled" in t else float("nan")
        rows.append({"kernel": name, **{f"{b}_s": v for b, v in t.items()}, "speedup": sp})
        print(f"{name:40s} " + " ".join(f"{t[b]:10.4f}" for b in backends) + f"    {sp:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
