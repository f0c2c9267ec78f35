import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pzsrc.dictionary import (AuxScheme, ClassSubdict, assemble, aux_corr, aux_fix, aux_mov, build_subdict,
                              load_dictionary, save_dictionary)
from pzsrc.errors import ConfigError, DataError


def unit(a):
    return a / np.linalg.norm(a, axis=0)


def subdict(rng, J=8, P=5, cid="a", angles=True):
    atoms = unit(rng.random((P, J)) + 0.1)
    return ClassSubdict(cid, atoms, np.arange(J) * (360.0 / J) if angles else None)


def test_build_subdict_unit_columns(basis32, rng):
    g = rng.random((basis32.N, 4))
    s = build_subdict(basis32, g, "x", angles=[0, 90, 180, 270])
    assert s.atoms.shape == (basis32.P, 4)
    np.testing.assert_allclose(np.linalg.norm(s.atoms, axis=0), 1)
    assert np.all(s.atoms >= 0)


def test_build_subdict_rejects_empty_and_zero(basis32):
    with pytest.raises(DataError):
        build_subdict(basis32, [], "x")
    with pytest.raises(DataError):
        build_subdict(basis32, np.zeros((basis32.N, 2)), "x")


def test_build_subdict_angle_count(basis32, rng):
    with pytest.raises(DataError):
        build_subdict(basis32, rng.random((basis32.N, 3)), "x", angles=[0, 1])


def test_aux_fix_is_normalized_sum(rng):
    s = subdict(rng)
    np.testing.assert_allclose(aux_fix(s)[:, 0], unit(s.atoms.sum(axis=1)))


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(8)))
def test_aux_fix_order_independent(perm):
    s = subdict(np.random.default_rng(0))
    shuffled = ClassSubdict("a", s.atoms[:, list(perm)])
    np.testing.assert_allclose(aux_fix(shuffled), aux_fix(s), atol=1e-15)


def test_aux_mov_window_terms():
    J = 7
    atoms = np.eye(J)
    s = ClassSubdict("a", atoms, np.arange(J, dtype=float))
    # W = 3: each window has atoms j-1, j, j+1 (zero beyond the ends)
    out = aux_mov(s, 3)
    np.testing.assert_allclose(out[:, 3], unit(np.array([0, 0, 1, 1, 1, 0, 0.0])))
    np.testing.assert_allclose(out[:, 0], unit(np.array([1, 1, 0, 0, 0, 0, 0.0])))
    # W = 4 spans the same floor(W/2) = 2 on each side as W = 5
    np.testing.assert_allclose(aux_mov(s, 4), aux_mov(s, 5))


def test_aux_mov_circular_wraps():
    J = 6
    s = ClassSubdict("a", np.eye(J), np.arange(J, dtype=float))
    out = aux_mov(s, 3, circular=True)
    np.testing.assert_allclose(out[:, 0], unit(np.array([1, 1, 0, 0, 0, 1.0])))


def test_aux_mov_follows_angle_order():
    atoms = np.eye(4)
    s = ClassSubdict("a", atoms, np.array([270.0, 0.0, 180.0, 90.0]))
    out = aux_mov(s, 3)
    # neighbours of the 0-degree atom (column 1) are the 90-degree atom (column 3) only
    np.testing.assert_allclose(out[:, 1], unit(np.array([0, 1, 0, 1.0])))


def test_aux_mov_full_window_equals_fix(rng):
    s = subdict(rng, J=9)
    out = aux_mov(s, 2 * 9 + 1)
    for j in range(9):
        np.testing.assert_allclose(out[:, j], aux_fix(s)[:, 0])


def test_aux_mov_window_one_is_identity(rng):
    s = subdict(rng)
    np.testing.assert_allclose(aux_mov(s, 1), s.atoms)


def test_aux_mov_requires_angles_when_asked(rng):
    with pytest.raises(DataError):
        aux_mov(subdict(rng, angles=False), 3, require_angles=True)
    with pytest.raises(ConfigError):
        aux_mov(subdict(rng), 0)


def test_aux_corr_threshold_extremes(rng):
    s = subdict(rng)
    # above every off-diagonal correlation: each auxiliary atom is its own atom
    np.testing.assert_allclose(aux_corr(s, 0.999999), s.atoms)
    # below all of them (positive atoms): every auxiliary atom is the class mean
    low = aux_corr(s, 1e-9)
    np.testing.assert_allclose(low, np.repeat(aux_fix(s), s.J, axis=1))


def test_aux_corr_range():
    with pytest.raises(ConfigError):
        aux_corr(subdict(np.random.default_rng(0)), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.floats(0.05, 0.95), st.booleans())
def test_aux_atoms_unit_norm(window, upsilon, circular):
    s = subdict(np.random.default_rng(window), J=10)
    for aux in (aux_fix(s), aux_mov(s, window, circular), aux_corr(s, upsilon)):
        np.testing.assert_allclose(np.linalg.norm(aux, axis=0), 1.0)


def test_scheme_validation():
    with pytest.raises(ConfigError):
        AuxScheme("mov")
    with pytest.raises(ConfigError):
        AuxScheme("corr", upsilon=1.5)
    with pytest.raises(ConfigError):
        AuxScheme("other")


def test_assemble_counts(rng):
    subs = [subdict(rng, J=5, cid="a"), subdict(rng, J=7, cid="b"), subdict(rng, J=6, cid="c")]
    assert assemble(subs).Q == 18
    d = assemble(subs, AuxScheme("mov", window=3))
    assert d.Q == 36
    assert [(b.J, b.L) for b in d.blocks] == [(5, 5), (7, 7), (6, 6)]
    assert assemble(subs, AuxScheme("fix")).Q == 21


def test_assemble_full_size_counts():
    rng = np.random.default_rng(1)
    subs = [subdict(rng, J=299, P=4, cid=c) for c in ("2S1", "D-7", "T62")]
    assert assemble(subs).Q == 897
    assert assemble(subs, AuxScheme("mov", window=149)).Q == 1794


def test_assemble_layout(rng):
    subs = [subdict(rng, J=3, cid="a"), subdict(rng, J=2, cid="b")]
    d = assemble(subs, AuxScheme("fix"))
    b = d.block("b")
    assert (b.start, list(b.primary), list(b.auxiliary)) == (4, [4, 5], [6])
    np.testing.assert_array_equal(d.matrix[:, 4:6], subs[1].atoms)


def test_assemble_rejects_mismatch(rng):
    with pytest.raises(ConfigError):
        assemble([subdict(rng, P=5, cid="a"), subdict(rng, P=6, cid="b")])
    with pytest.raises(ConfigError):
        assemble([subdict(rng, cid="a"), subdict(rng, cid="a")])
    with pytest.raises(DataError):
        assemble([])


def test_spectral_norm(rng):
    d = assemble([subdict(rng, cid="a"), subdict(rng, cid="b")])
    assert d.spectral_norm == pytest.approx(np.linalg.svd(d.matrix, compute_uv=False)[0])


@pytest.mark.parametrize("scheme", [AuxScheme(), AuxScheme("fix"), AuxScheme("mov", window=4),
                                    AuxScheme("mov", window=3, circular=True), AuxScheme("corr", upsilon=0.93)])
def test_dictionary_file_roundtrip(tmp_path, rng, scheme):
    d = assemble([subdict(rng, cid="tank"), subdict(rng, J=5, cid="T-62 ü")], scheme)
    save_dictionary(tmp_path / "d.pzd", d)
    back = load_dictionary(tmp_path / "d.pzd")
    assert back.scheme == scheme
    assert back.blocks == d.blocks
    assert np.array_equal(back.matrix, d.matrix)


def test_dictionary_file_errors(tmp_path, rng):
    with pytest.raises(DataError):
        load_dictionary(tmp_path / "missing.pzd")
    (tmp_path / "bad.pzd").write_bytes(b"XXXX")
    with pytest.raises(DataError):
        load_dictionary(tmp_path / "bad.pzd")
    d = assemble([subdict(rng, cid="a")])
    save_dictionary(tmp_path / "d.pzd", d)
    (tmp_path / "cut.pzd").write_bytes((tmp_path / "d.pzd").read_bytes()[:40])
    with pytest.raises(DataError):
        load_dictionary(tmp_path / "cut.pzd")
