import json

import numpy as np
import pytest

from pzsrc.dictionary import AuxScheme
from pzsrc.errors import ConfigError, DataError
from pzsrc.pipeline import RunConfig, encode_all, prepare, tune_upsilon
from pzsrc.sparse import IhtConfig
from pzsrc.synth import load_manifest


@pytest.fixture(scope="module")
def experiment(small_dataset):
    return prepare(load_manifest(small_dataset), n_max=8)


def test_runconfig_defaults():
    cfg = RunConfig()
    assert (cfg.n_max, cfg.gamma, cfg.fusion) == (10, 5, True)


def test_runconfig_validation():
    with pytest.raises(ConfigError):
        RunConfig(n_max=26).validate()
    with pytest.raises(ConfigError):
        RunConfig(aux="mov").validate()
    with pytest.raises(ConfigError):
        RunConfig(step="bold").validate()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"n_max": 3, "colour": "red"})


def test_runconfig_json_roundtrip(tmp_path):
    cfg = RunConfig(command="classify", xi=1234.5678901234567, aux="corr", upsilon=0.97, references=[1, 2])
    (tmp_path / "c.json").write_text(cfg.to_json())
    assert RunConfig.load(tmp_path / "c.json") == cfg
    assert json.loads(cfg.to_json())["xi"] == 1234.5678901234567


def test_features_are_unit_and_nonnegative(experiment):
    F = experiment.train.features
    assert F.shape == (81, 72)
    np.testing.assert_allclose(np.linalg.norm(F, axis=0), 1)
    assert np.all(F >= 0)


def test_subdicts_sorted_by_angle(experiment):
    for sub in experiment.subdicts:
        assert np.all(np.diff(sub.angles) > 0)
        assert sub.J == 24


def test_classifies_small_fixture(experiment):
    for scheme in (AuxScheme(), AuxScheme("mov", window=12)):
        assert experiment.evaluate(scheme).omega >= 90


def test_training_items_reencode_to_their_class(experiment):
    """Each training column is itself a dictionary atom, so it must come back to its own class."""
    d = experiment.dictionary()
    decisions = encode_all(d, experiment.train.features, IhtConfig())
    truth = [it.class_id for it in experiment.train.items]
    assert [x.predicted for x in decisions] == truth


def test_workers_do_not_change_results(experiment):
    d = experiment.dictionary(AuxScheme("fix"))
    Y = experiment.test.features
    one = encode_all(d, Y, IhtConfig(), workers=1, chunk=5)
    many = encode_all(d, Y, IhtConfig(), workers=3, chunk=5)
    for a, b in zip(one, many):
        assert a.predicted == b.predicted
        assert np.array_equal(a.code.coefficients, b.code.coefficients)


def test_feature_length_mismatch(experiment):
    with pytest.raises(ConfigError):
        encode_all(experiment.dictionary(), np.ones((5, 2)), IhtConfig())


def test_tune_upsilon_prefers_larger_on_ties(experiment):
    best, scores = tune_upsilon(experiment, [0.5, 0.9, 0.95])
    top = max(scores.values())
    assert best == max(u for u, s in scores.items() if s == top)


def test_missing_image_named(small_dataset, tmp_path):
    data = json.loads(small_dataset.read_text())
    data["train"][0]["path"] = "images/not_there.pzc"
    (tmp_path / "images").symlink_to(small_dataset.parent / "images")
    (tmp_path / "manifest.json").write_text(json.dumps(data))
    with pytest.raises(DataError, match="not_there.pzc"):
        prepare(load_manifest(tmp_path / "manifest.json"), n_max=4)


def test_side_mismatch(small_dataset):
    from pzsrc.moments import build_basis, build_disk_geometry
    with pytest.raises(ConfigError):
        prepare(load_manifest(small_dataset), basis=build_basis(4, build_disk_geometry(40)))
