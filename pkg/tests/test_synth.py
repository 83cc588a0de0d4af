import os

import numpy as np
import pytest

from paperecg import cli, ioutil, synth
from paperecg.raster import downsample_area


def test_flat_waveform_is_stroke_on_baseline_row():
    sh = synth.render(synth.SynthSpec(sheet_type=3, leads=("V1",), waves=[], specks=0, noise=0.0), 1)
    t = sh.truth("V1")
    ink = synth.analysis_masks(sh)["ink"]
    x0, x1 = int(t.x_start) + 2, int(t.x_end) - 2
    rows = np.arange(ink.shape[0], dtype=float)
    centre = (rows @ ink[:, x0:x1]) / ink[:, x0:x1].sum(axis=0)
    # pixel-centre convention: row r covers [r, r+1), so the stroke centre sits half a pixel up
    assert np.abs(centre + 0.5 - t.baseline_y).max() <= 0.05
    assert np.all(t.voltage(np.linspace(0, 5, 50)) == 0.0)


def test_brugada_flag_adds_elevated_j_plateau():
    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
    wf_n, _ = synth.make_waveform(rng_a, "V1", 4.0, 70.0, False)
    wf_b, _ = synth.make_waveform(rng_b, "V1", 4.0, 70.0, True)
    st_off = next(w for w in synth.BRUGADA_WAVES if w[0] == "ST")[1]
    beat = wf_b.beat_times[2]
    t = beat + np.linspace(st_off - 0.02, st_off + 0.02, 21)
    # clinically a type-1 pattern needs at least 2 mm (0.2 mV) of J elevation
    assert np.all(wf_b(t) - wf_n(t) >= 0.2)
    assert np.all(wf_b(t) >= 0.2)
    # leads outside V1/V2 are untouched
    a, _ = synth.make_waveform(np.random.default_rng(5), "I", 4.0, 70.0, True)
    b, _ = synth.make_waveform(np.random.default_rng(5), "I", 4.0, 70.0, False)
    assert a.waves == b.waves


@pytest.mark.parametrize("st", [1, 2, 3])
def test_masks_partition_the_sheet(st, tmp_path):
    sh = synth.render(synth.SynthSpec(sheet_type=st, rotation=2.0 if st == 2 else 0.0), 7)
    d = str(tmp_path)
    cli.write_sheet(sh, d)
    masks = [ioutil.read_image(os.path.join(d, f"mask_{c}.pgm")) > 0 for c in synth.CLASS_NAMES]
    total = np.sum(masks, axis=0)
    assert np.all(total == 1)
    cover = synth.analysis_masks(sh)
    assert np.allclose(sum(cover.values()), 1.0)


def test_same_seed_byte_identical(tmp_path):
    spec = synth.SynthSpec(sheet_type=1, rotation=1.5, brugada=True)
    a, b = tmp_path / "a", tmp_path / "b"
    cli.write_sheet(synth.render(spec, 9), str(a))
    cli.write_sheet(synth.render(spec, 9), str(b))
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b)) and "truth.json" in names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    other = tmp_path / "c"
    cli.write_sheet(synth.render(spec, 10), str(other))
    assert (other / "sheet.ppm").read_bytes() != (a / "sheet.ppm").read_bytes()


def test_truth_round_trips_through_json():
    import json
    sh = synth.render(synth.SynthSpec(sheet_type=2), 3)
    doc = json.loads(sh.truth_json())
    back = [synth.LeadTruth.from_dict(d) for d in doc["leads"]]
    t = np.linspace(0, 3, 40)
    for a, b in zip(sh.truths, back):
        assert np.array_equal(a.voltage(t), b.voltage(t))


def test_truth_csv_header_and_length():
    sh = synth.render(synth.SynthSpec(sheet_type=3, leads=("V1",), duration=2.0), 0)
    lines = synth.truth_csv(sh.truth("V1"), rate=100.0).splitlines()
    assert lines[0] == "time_s,voltage_mV" and len(lines) == 1 + 201


def test_type1_glyphs_and_specks_labelled():
    sh = synth.render(synth.SynthSpec(sheet_type=1), 2)
    assert sh.mask(synth.CLASS_GLYPH).any()
    assert not synth.render(synth.SynthSpec(sheet_type=1, glyphs=False), 2).mask(synth.CLASS_GLYPH).any()
    t3 = synth.render(synth.SynthSpec(sheet_type=3, specks=25), 2)
    assert t3.mask(synth.CLASS_GLYPH).any()


def test_spec_validation():
    with pytest.raises(ValueError):
        synth.SynthSpec(sheet_type=2, px_per_big_square=-1)
    with pytest.raises(ValueError):
        synth.SynthSpec(sheet_type=2, waves=[("x", 0.0, 0.0, 1.0)])
    with pytest.raises(ValueError):
        synth.SynthSpec(sheet_type=2, waves=[("x", 0.0, 0.1, float("inf"))])
    with pytest.raises(ValueError):
        synth.SynthSpec(sheet_type=7)


def test_type1_frame_and_grid_gray_levels():
    sh = synth.render(synth.SynthSpec(sheet_type=1, noise=0.0), 0)
    g = downsample_area(sh.gray(), 1).pixels
    grid = sh.mask(synth.CLASS_GRID)
    ink = sh.mask(synth.CLASS_INK)
    # grid stays above the Type-1 threshold, ink well below it
    assert g[grid].min() > 128 and g[ink].max() < 128
