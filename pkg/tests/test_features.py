"""Feature extraction from a library, and the model/feature file plumbing."""

import numpy as np
import pytest

from wavemark.dataset import synthetic_library
from wavemark.errors import ParseError, ValidationError
from wavemark.features import (
    build_features,
    library_coeff_tensor,
    load_any_model,
    load_features_csv,
    save_features_csv,
    train_on_library,
)
from wavemark.labeling import label_library
from wavemark.mog import collapse_model
from wavemark.mog import save_model as save_mog
from wavemark.nhmc import save_model as save_gmm
from wavemark.semantics import rivard_lcp
from wavemark.wavelet import CoeffMatrix


@pytest.fixture(scope="module")
def setup():
    lib = synthetic_library(2, 6, seed=3, wl_range=(0.4, 1.04), step=0.01)
    gmm = train_on_library(lib, k=2, levels=4)
    mog = collapse_model(gmm)
    return lib, gmm, mog


def test_coeff_tensor_shape(setup):
    lib, _, _ = setup
    tensor = library_coeff_tensor(lib, levels=4)
    assert tensor.shape == (12, 4, 65)


def test_spectrum_and_coeff_features(setup):
    lib, _, _ = setup
    fs = build_features(lib, "spectrum")
    assert fs.vectors.shape == (12, 65)
    assert np.array_equal(fs.vectors, lib.values())
    assert fs.class_names == ("class00", "class01")
    fc = build_features(lib, "coeffs", levels=4)
    assert fc.vectors.shape == (12, 4 * 65)
    tensor = library_coeff_tensor(lib, levels=4)
    assert np.array_equal(fc.vectors[3], tensor[3].ravel())


def test_label_features_match_labeling(setup):
    lib, gmm, mog = setup
    for kind, model in (("gmm_labels", gmm), ("mog_labels", mog)):
        fs = build_features(lib, kind, model=model)
        arrays = label_library(lib, model)
        assert fs.vectors.shape == (12, 4 * 65)
        for m in (0, 5, 11):
            assert np.array_equal(fs.vectors[m], arrays[m].labels.ravel().astype(float))


def test_sign_features_flip_with_coefficients(setup):
    lib, gmm, _ = setup
    plain = build_features(lib, "gmm_labels", model=gmm)
    signed = build_features(lib, "gmm_sign", model=gmm)
    tensor = library_coeff_tensor(lib, levels=4)
    flat = tensor.reshape(12, -1)
    expect = np.where(flat < 0, -plain.vectors, plain.vectors)
    assert np.array_equal(signed.vectors, expect)


def test_rivard_features(setup):
    lib, _, _ = setup
    fs = build_features(lib, "rivard", levels=4)
    assert fs.vectors.shape == (12, 65)
    tensor = library_coeff_tensor(lib, levels=4)
    assert np.allclose(fs.vectors[2], rivard_lcp(CoeffMatrix(tensor[2], "haar")), atol=1e-12)


def test_model_kind_mismatch(setup):
    lib, gmm, mog = setup
    with pytest.raises(ValidationError, match="collapsed"):
        build_features(lib, "mog_labels", model=gmm)
    with pytest.raises(ValidationError, match="k-state"):
        build_features(lib, "gmm_labels", model=mog)
    with pytest.raises(ValidationError, match="model"):
        build_features(lib, "gmm_labels")
    with pytest.raises(ValidationError):
        build_features(lib, "fourier")


def test_grid_mismatch(setup):
    _, gmm, _ = setup
    other = synthetic_library(2, 4, seed=3, wl_range=(0.4, 1.02), step=0.01)
    with pytest.raises(ValidationError, match="grid"):
        build_features(other, "gmm_labels", model=gmm)


def test_train_on_library_metadata(setup):
    lib, gmm, _ = setup
    assert gmm.k == 2 and gmm.L == 4
    assert gmm.N == lib.n_bands
    assert gmm.metadata["n_training_spectra"] == 12
    assert np.array_equal(gmm.grid, lib.grid)


def test_load_any_model_dispatch(tmp_path, setup):
    _, gmm, mog = setup
    gpath = tmp_path / "gmm.json"
    mpath = tmp_path / "mog.json"
    save_gmm(gmm, gpath)
    save_mog(mog, mpath)
    assert type(load_any_model(gpath)).__name__ == "NhmcModel"
    assert type(load_any_model(mpath)).__name__ == "MogModel"
    with pytest.raises(ParseError):
        load_any_model(tmp_path / "missing.json")
    garbage = tmp_path / "garbage.json"
    garbage.write_text("not json at all{")
    with pytest.raises(ParseError):
        load_any_model(garbage)
    wrong = tmp_path / "wrong.json"
    wrong.write_text('{"model_kind": "transformer"}')
    with pytest.raises(ValidationError):
        load_any_model(wrong)


def test_features_csv_round_trip(tmp_path, setup):
    lib, gmm, _ = setup
    fs = build_features(lib, "gmm_sign", model=gmm)
    ids = [sp.sample_id for sp in lib.spectra]
    path = tmp_path / "features.csv"
    save_features_csv(fs, ids, path)
    back, back_ids = load_features_csv(path)
    assert back.feature_kind == "gmm_sign"
    assert back_ids == ids
    assert np.array_equal(back.vectors, fs.vectors)
    assert np.array_equal(back.class_ids, fs.class_ids)
    with pytest.raises(ValidationError):
        save_features_csv(fs, ids[:-1], tmp_path / "short.csv")


def test_features_csv_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# feature_kind=spectrum\nsample_id,class_id,class_name,f0\na,0,x,1.0,9.9\n")
    with pytest.raises(ParseError):
        load_features_csv(bad)
    with pytest.raises(ParseError):
        load_features_csv(tmp_path / "absent.csv")
