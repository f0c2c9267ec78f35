import json

import numpy as np
import pytest

from pzsrc import synth
from pzsrc.errors import ConfigError, DataError
from pzsrc.imaging import read_complex
from pzsrc.moments import build_basis, build_disk_geometry
from pzsrc.pipeline import FeaturePipeline
from pzsrc.synth import (DatasetManifest, TargetSpec, default_targets, generate_dataset, glint_strength,
                         irregularity, load_manifest, make_manifest, render_target, sweep_angles)


def test_spec_validation():
    with pytest.raises(ConfigError):
        TargetSpec("triangle")
    with pytest.raises(ConfigError):
        TargetSpec(width=1.2)
    with pytest.raises(ConfigError):
        TargetSpec(aspect_irregularity=-0.1)


def test_spec_json_roundtrip():
    s = TargetSpec("ellipse", 0.4, 0.3, 0.5 - 0.2j, 0.2, 0.05, seed=9, glint=0.3, phase_gradient=1.0)
    assert TargetSpec.from_json(json.loads(json.dumps(s.to_json()))) == s


def test_square_quarter_turn_symmetry():
    s = TargetSpec("rectangle", 0.4, 0.4)
    a = np.abs(render_target(s, 0, 64).pixels)
    b = np.abs(render_target(s, 90, 64).pixels)
    np.testing.assert_array_equal(a, b)


def test_render_is_deterministic():
    s = TargetSpec("lshape", 0.4, 0.4, 1.0, 0.3, 0.1, seed=4)
    np.testing.assert_array_equal(render_target(s, 33.3, 48).pixels, render_target(s, 33.3, 48).pixels)


def test_clutter_differs_between_angles_and_seeds():
    s = TargetSpec(clutter_sigma=0.1, seed=1)
    bg = lambda spec, a: render_target(spec, a, 48).pixels[0, :5]
    assert not np.allclose(bg(s, 10.0), bg(s, 11.0))
    assert not np.allclose(bg(s, 10.0), bg(TargetSpec(clutter_sigma=0.1, seed=2), 10.0))


def test_clutter_level():
    s = TargetSpec(width=0.1, height=0.1, clutter_sigma=0.2)
    px = render_target(s, 0, 96).pixels
    corner = px[:20, :20].ravel()
    assert np.std(corner.real) == pytest.approx(0.2 / np.sqrt(2), rel=0.15)


def test_irregularity_smooth_and_unit_rms():
    s = TargetSpec(seed=3)
    angles = np.arange(0, 360, 0.5)
    eta = np.array([irregularity(s, a) for a in angles])
    assert np.sqrt(np.mean(eta**2)) == pytest.approx(1.0, rel=1e-6)
    assert np.max(np.abs(np.diff(eta))) < 0.2  # band-limited: small steps between neighbours
    assert irregularity(s, 10.0) == pytest.approx(irregularity(s, 370.0))


def test_amplitude_follows_irregularity():
    s = TargetSpec(width=0.5, height=0.5, aspect_irregularity=0.3, seed=5)
    centre = abs(render_target(s, 20.0, 64).pixels[32, 32])
    assert centre == pytest.approx(1 + 0.3 * irregularity(s, 20.0))


def test_glint_peaks_at_cardinal_aspects():
    assert glint_strength(0, 4) == 1
    assert glint_strength(270, 4) == 1
    assert glint_strength(45, 4) < 1e-10


def test_phase_gradient_changes_phase_only():
    flat = render_target(TargetSpec(), 30, 48).pixels
    ramp = render_target(TargetSpec(phase_gradient=1.0), 30, 48).pixels
    np.testing.assert_allclose(np.abs(flat), np.abs(ramp), atol=1e-12)
    assert not np.allclose(np.angle(flat), np.angle(ramp))


def test_side_minimum():
    with pytest.raises(ConfigError):
        render_target(TargetSpec(), 0, 16)


def test_sweep_angles():
    assert sweep_angles(4) == [0, 90, 180, 270]
    assert sweep_angles(3, 10) == [10, 130, 250]


def test_manifest_split_disjoint():
    m = make_manifest(default_targets(), n_train=120, n_test=60)
    for cid in m.class_ids:
        assert not set(m.train_angles[cid]) & set(m.test_angles[cid])
        assert len(m.train_angles[cid]) == 120 and len(m.test_angles[cid]) == 60


def test_overlapping_angles_rejected():
    m = DatasetManifest(48, [("a", TargetSpec())], {"a": [0.0, 10.0]}, {"a": [10.0]})
    with pytest.raises(ConfigError):
        m.validate()


def test_generate_and_load(tmp_path):
    m = make_manifest(default_targets(seed=1)[:2], side=40, n_train=4, n_test=2)
    path = generate_dataset(m, tmp_path)
    back = load_manifest(path)
    assert back.class_ids == ["rect", "ellipse"]
    assert len(back.train) == 8 and len(back.test) == 4
    assert back.spec("rect") == m.spec("rect")
    img = read_complex(back.resolve(back.test[0]))
    expected = render_target(m.spec("rect"), back.test[0].angle, 40).pixels.astype(np.complex64)
    np.testing.assert_array_equal(img.pixels, expected.astype(complex))


def test_load_manifest_errors(tmp_path):
    with pytest.raises(DataError):
        load_manifest(tmp_path / "none.json")
    (tmp_path / "m.json").write_text('{"side": 8, "classes": [{"id": "a"}], '
                                     '"train": [{"class": "b", "path": "x"}]}')
    with pytest.raises(DataError, match="unknown class"):
        load_manifest(tmp_path / "m.json")


def test_pipeline_end_to_end_invariance():
    """Noise-free target: magnitude moment vectors agree across aspect angles."""
    basis = build_basis(10, build_disk_geometry(96))
    spec = TargetSpec("rectangle", 0.5, 0.25)
    pipe = FeaturePipeline(basis, fusion=False)
    pipe.calibrate(render_target(spec, 0, 96))
    angles = [0, 17, 45, 90, 133, 200, 301]
    F = pipe.features(np.column_stack([pipe.image_vector(render_target(spec, a, 96)) for a in angles]))
    d = max(np.linalg.norm(F[:, i] - F[:, j]) for i in range(len(angles)) for j in range(i))
    assert d <= 0.05
