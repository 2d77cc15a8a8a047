import json

import numpy as np
import pytest

from mgnet import data_io
from mgnet.data_io import Cohort, SyntheticSpec, generate_synthetic, load_cohort, save_cohort
from mgnet.errors import ConfigError, DataError
from mgnet.model import forward, init_params, ModelParams

from helpers import random_a_hat, random_sym_tensor


def _small_cohort(rng, n=5, m=2, s=4):
    x = random_sym_tensor(rng, n, m, s)
    return Cohort(x=x, labels=np.arange(s) % 2, modalities=[f"m{i}" for i in range(m)],
                  subject_ids=[f"s{i}" for i in range(s)])


def test_matrix_roundtrip_bitwise(tmp_path, rng):
    a = rng.standard_normal((7, 4)) * 10.0 ** rng.integers(-30, 30, (7, 4))
    data_io.save_matrix(tmp_path / "a.csv", a)
    assert data_io.load_matrix(tmp_path / "a.csv").tobytes() == a.tobytes()


def test_truncated_file_reports_line(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2,3\n4,5,6\n7,8\n")
    with pytest.raises(DataError, match=r"bad.csv:3"):
        data_io.load_matrix(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text("1,2\n3,x\n")
    with pytest.raises(DataError, match=r"bad2.csv:2"):
        data_io.load_matrix(tmp_path / "bad2.csv")


def test_cohort_roundtrip(tmp_path, rng):
    c = _small_cohort(rng)
    path = save_cohort(tmp_path, c)
    back = load_cohort(path)
    assert back.x.tobytes() == c.x.tobytes()
    np.testing.assert_array_equal(back.labels, c.labels)
    assert back.subject_ids == c.subject_ids and back.modalities == c.modalities


def _edit_manifest(path, fn):
    spec = json.loads(path.read_text())
    fn(spec)
    path.write_text(json.dumps(spec))


def test_non_square_matrix_names_subject(tmp_path, rng):
    path = save_cohort(tmp_path, _small_cohort(rng))
    data_io.save_matrix(tmp_path / "matrices" / "s2_m1.csv", np.ones((3, 4)))
    with pytest.raises(DataError, match="subject s2.*3x4"):
        load_cohort(path)


def test_missing_file(tmp_path, rng):
    path = save_cohort(tmp_path, _small_cohort(rng))
    (tmp_path / "matrices" / "s1_m0.csv").unlink()
    with pytest.raises(DataError, match="subject s1.*missing"):
        load_cohort(path)


def test_nan_entries(tmp_path, rng):
    path = save_cohort(tmp_path, _small_cohort(rng))
    a = np.zeros((5, 5))
    a[1, 1] = np.nan
    data_io.save_matrix(tmp_path / "matrices" / "s0_m0.csv", a)
    with pytest.raises(DataError, match="subject s0.*NaN"):
        load_cohort(path)


def test_bad_label(tmp_path, rng):
    path = save_cohort(tmp_path, _small_cohort(rng))
    _edit_manifest(path, lambda s: s["subjects"][3].update(label=2))
    with pytest.raises(DataError, match="subject s3.*label"):
        load_cohort(path)


def test_single_class_rejected(tmp_path, rng):
    path = save_cohort(tmp_path, _small_cohort(rng))
    _edit_manifest(path, lambda s: [sub.update(label=0) for sub in s["subjects"]])
    with pytest.raises(DataError, match="one subject per class"):
        load_cohort(path)


def test_asymmetry_threshold(tmp_path, rng):
    path = save_cohort(tmp_path, _small_cohort(rng))
    a = data_io.load_matrix(tmp_path / "matrices" / "s0_m0.csv")
    a[0, 1] += 1e-10
    data_io.save_matrix(tmp_path / "matrices" / "s0_m0.csv", a)
    c = load_cohort(path)
    assert np.array_equal(c.x[:, :, 0, 0], c.x[:, :, 0, 0].T)
    a[0, 1] += 1e-6
    data_io.save_matrix(tmp_path / "matrices" / "s0_m0.csv", a)
    with pytest.raises(DataError, match="not symmetric"):
        load_cohort(path)


def test_missing_modality_entry(tmp_path, rng):
    path = save_cohort(tmp_path, _small_cohort(rng))
    _edit_manifest(path, lambda s: s["subjects"][0]["files"].pop("m1"))
    with pytest.raises(DataError, match="subject s0"):
        load_cohort(path)


def test_bad_json(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    with pytest.raises(DataError, match="invalid JSON"):
        load_cohort(tmp_path / "m.json")


def test_hiv_table_shape(tmp_path):
    # 90 nodes, fMRI & DTI, 35 + 35 subjects
    rng = np.random.default_rng(0)
    x = random_sym_tensor(rng, 90, 2, 70)
    c = Cohort(x=x, labels=np.repeat([0, 1], 35), modalities=["fMRI", "DTI"],
               subject_ids=[f"hiv{i:02d}" for i in range(70)], name="HIV")
    loaded = load_cohort(save_cohort(tmp_path, c))
    assert loaded.x.shape == (90, 90, 2, 70)


def test_synthetic_deterministic_and_symmetric():
    a = generate_synthetic(SyntheticSpec(n_nodes=8, per_class=3, seed=7))
    b = generate_synthetic(SyntheticSpec(n_nodes=8, per_class=3, seed=7))
    assert a.x.tobytes() == b.x.tobytes()
    assert np.array_equal(a.x, a.x.transpose(1, 0, 2, 3))
    assert np.all(a.x[np.arange(8), np.arange(8)] == 0)
    assert a.x.shape == (8, 8, 2, 6) and list(a.labels) == [0, 1] * 3


def test_null_cohort_class_independent():
    # with zero signal, swapping the class densities changes nothing
    a = generate_synthetic(SyntheticSpec(n_nodes=8, per_class=4, signal=(0.0, 0.0), seed=3))
    b = generate_synthetic(SyntheticSpec(n_nodes=8, per_class=4, signal=(0.0, 0.0), seed=3,
                                         p_between=(0.3, 0.1)))
    assert a.x.tobytes() == b.x.tobytes()


def test_strong_signal_scalar_probe():
    c = generate_synthetic(SyntheticSpec(n_nodes=32, per_class=50, signal=(5.0, 0.0), seed=0))
    score = c.x[:, :, 0, :].mean(axis=(0, 1))
    best = max(np.mean((score > t) == c.labels) for t in np.unique(score))
    assert best >= 0.95


@pytest.mark.parametrize("kw", [dict(n_nodes=3), dict(per_class=1), dict(signal=(-1.0,)),
                                dict(p_between=(0.1, 1.5))])
def test_synthetic_spec_validation(kw):
    with pytest.raises(ConfigError):
        SyntheticSpec(**kw)


def test_checkpoint_roundtrip_bitwise_forward(tmp_path, rng):
    params = init_params(5, 2, 2, 3, rng=rng)
    a_hat = random_a_hat(rng, 5)
    h0 = rng.standard_normal((5, 5, 2, 3))
    data_io.save_checkpoint(tmp_path / "c.json", params.named(), {"note": "x"})
    ck = data_io.load_checkpoint(tmp_path / "c.json", {"W0": (5, 3), "alpha": (2,)})
    restored = ModelParams.from_named(ck.matrices)
    assert ck.config == {"note": "x"}
    a = forward(h0, a_hat, params).probs
    b = forward(h0, a_hat, restored).probs
    assert a.tobytes() == b.tobytes()


def test_checkpoint_shape_and_version_errors(tmp_path, rng):
    params = init_params(5, 2, 1, 3, rng=rng)
    data_io.save_checkpoint(tmp_path / "c.json", params.named())
    with pytest.raises(DataError, match="W0 has shape"):
        data_io.load_checkpoint(tmp_path / "c.json", {"W0": (6, 3)})
    payload = json.loads((tmp_path / "c.json").read_text())
    payload["version"] = 99
    (tmp_path / "c.json").write_text(json.dumps(payload))
    with pytest.raises(DataError, match="version 99"):
        data_io.load_checkpoint(tmp_path / "c.json")
