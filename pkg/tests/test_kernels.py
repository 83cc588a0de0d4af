"""Parity between the compiled kernels and their NumPy twins."""
import numpy as np
import pytest
from scipy import ndimage

from paperecg import _backend, _pykernels, edgeline, synth
from paperecg.edgeline import HoughConfig, canny_auto, theta_table

compiled = _backend.available().get("compiled")
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def test_every_kernel_exported():
    for mod in _backend.available().values():
        for name in _backend.KERNEL_NAMES:
            assert callable(getattr(mod, name)), name
        assert mod.NAME in ("python", "compiled")


def test_backend_switch():
    before = _backend.kernels
    try:
        _backend.use("python")
        assert _backend.kernels is _pykernels
        with pytest.raises(KeyError):
            _backend.use("fortran")
    finally:
        _backend.kernels = before


@pytest.fixture
def img(rng):
    a = ndimage.gaussian_filter(rng.normal(128, 50, (47, 61)), 1.2)
    return np.ascontiguousarray(np.clip(a, 0, 255).astype(np.uint8))


@needs_compiled
@pytest.mark.parametrize("window", [3, 5, 7])
def test_median(img, window):
    assert np.array_equal(compiled.median_filter_u8(img, window), _pykernels.median_filter_u8(img, window))


@needs_compiled
def test_gradients_and_nms(img):
    gx_c, gy_c = compiled.gradients7(img, edgeline._SMOOTH, edgeline._DERIV_CORR)
    gx_p, gy_p = _pykernels.gradients7(img, edgeline._SMOOTH, edgeline._DERIV_CORR)
    assert np.allclose(gx_c, gx_p, atol=1e-9) and np.allclose(gy_c, gy_p, atol=1e-9)
    a = compiled.gradient_nms(np.ascontiguousarray(gx_p), np.ascontiguousarray(gy_p), edgeline._TAN22, edgeline._TAN67)
    b = _pykernels.gradient_nms(gx_p, gy_p, edgeline._TAN22, edgeline._TAN67)
    assert np.array_equal(a, b)


@needs_compiled
def test_non_max_suppress(rng):
    mag = np.ascontiguousarray(rng.random((30, 40)))
    bins = np.ascontiguousarray(rng.integers(0, 4, (30, 40)).astype(np.uint8))
    assert np.array_equal(compiled.non_max_suppress(mag, bins), _pykernels.non_max_suppress(mag, bins))


@needs_compiled
def test_hysteresis(rng):
    nms = np.ascontiguousarray(ndimage.gaussian_filter(rng.random((50, 50)), 1.0) * 100)
    assert np.array_equal(compiled.hysteresis(nms, 48.0, 52.0), _pykernels.hysteresis(nms, 48.0, 52.0))


@needs_compiled
@pytest.mark.parametrize("conn", [4, 8])
def test_label_components(rng, conn):
    a = np.ascontiguousarray((rng.random((40, 50)) < 0.45).astype(np.uint8))
    la, na = compiled.label_components(a, conn)
    lb, nb = _pykernels.label_components(a, conn)
    assert na == nb and np.array_equal(la, lb)


@needs_compiled
def test_trace_borders(rng):
    a = np.ascontiguousarray((ndimage.gaussian_filter(rng.random((40, 50)), 1.0) > 0.5).astype(np.uint8))
    ca, pa = compiled.trace_borders(a), _pykernels.trace_borders(a)
    assert len(ca) == len(pa)
    for (p1, h1, q1), (p2, h2, q2) in zip(ca, pa):
        assert h1 == h2 and q1 == q2 and np.array_equal(p1, p2)


@needs_compiled
def test_hough(rng):
    grid = synth.render(synth.SynthSpec(sheet_type=2, leads=("V1",), duration=3.0, rotation=-3.0), 1).gray()
    e = canny_auto(grid).edges
    ys, xs = np.nonzero(e)
    order = rng.permutation(ys.size)[: ys.size // 5]
    ys = np.ascontiguousarray(ys[order], dtype=np.int64)
    xs = np.ascontiguousarray(xs[order], dtype=np.int64)
    cfg = HoughConfig()
    ctab, stab = theta_table(cfg)
    numrho = 2 * sum(e.shape) + 1
    args = (e, ys, xs, ctab, stab, numrho, 40, 100, 10, 400)
    a, b = compiled.hough_ppht(*args), _pykernels.hough_ppht(*args)
    assert len(a) > 0 and np.array_equal(np.asarray(a), np.asarray(b))


@needs_compiled
def test_lstm_forward_backward(rng):
    T, H = 9, 5
    xwb = np.ascontiguousarray(rng.normal(size=(T, 4 * H)))
    U = np.ascontiguousarray(rng.normal(0, 0.5, (4 * H, H)))
    hs_c, cs_c, g_c = compiled.lstm_forward(xwb, U)
    hs_p, cs_p, g_p = _pykernels.lstm_forward(xwb, U)
    assert np.allclose(hs_c, hs_p, atol=1e-12) and np.allclose(cs_c, cs_p, atol=1e-12)
    assert np.allclose(g_c, g_p, atol=1e-12)
    dh = np.ascontiguousarray(rng.normal(size=(T, H)))
    dz_c = compiled.lstm_backward(g_p, cs_p, U, dh)
    dz_p = _pykernels.lstm_backward(g_p, cs_p, U, dh)
    assert np.allclose(dz_c, dz_p, atol=1e-12)


def test_pipeline_identical_across_backends():
    from paperecg import pipeline
    sh = synth.render(synth.SynthSpec(sheet_type=3, rotation=2.0), 3)
    out = {}
    before = _backend.kernels
    try:
        for name in _backend.available():
            _backend.use(name)
            res = pipeline.digitize_sheet(sh.image, 3, seed=1)
            out[name] = (res.angle, [r.upsampled.values for r in res.leads])
    finally:
        _backend.kernels = before
    ref = out["python"]
    for name, (angle, vals) in out.items():
        assert angle == ref[0]
        assert all(np.allclose(a, b, atol=1e-9) for a, b in zip(vals, ref[1]))
