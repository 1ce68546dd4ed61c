import numpy as np
import pytest

from dyntl import taskstream as ts
from dyntl.errors import ConfigError, DataError, ParseError, ShapeError


def test_stream_shape():
    s = ts.gen_stream(ts.StreamCfg(N=4, m=30, seed=1))
    assert s.N == 4 and len(s.targets) == 5
    assert all(t.labels is None and t.eval_labels is not None for t in s.targets)
    assert [x.time_index for x in s.sources] == [1, 2, 3, 4]


def test_generation_is_deterministic():
    a = ts.gen_stream(ts.StreamCfg(N=3, m=20, seed=7))
    b = ts.gen_stream(ts.StreamCfg(N=3, m=20, seed=7))
    assert all(x.equals(y) for x, y in zip(a.sources + a.targets, b.sources + b.targets))


def test_rotation_schedule_without_noise():
    cfg = ts.StreamCfg(N=3, m=20, rho_s=-30, rho_t=15, base_noise=0.0,
                       target_noise_slope=0.0, shared_base=True, seed=0)
    s = ts.gen_stream(cfg)
    X0 = s.sources[0].features
    assert np.allclose(s.sources[2].features, ts.rotate(X0, -60))
    assert np.allclose(s.targets[3].features, ts.rotate(X0, 45))


def test_rotate_zero_is_identity_copy():
    X = np.random.default_rng(0).normal(size=(5, 2))
    Y = ts.rotate(X, 0)
    assert np.array_equal(X, Y) and Y is not X
    assert np.allclose(ts.rotate(ts.rotate(X, 33), -33), X)


def test_moons_labels_and_balance():
    X, y = ts.make_moons(11, 0.0, 0)
    assert X.shape == (11, 2) and y.sum() == 5
    assert np.allclose(X[0], [1.0, 0.0])


def test_gaussian_mixture():
    X, y = ts.make_gaussian_mixture(9, 3, 2.0, 0.0, 0)
    assert np.array_equal(y, np.arange(9) % 3)
    assert np.allclose(np.linalg.norm(X, axis=1), 2.0)


def test_target_noise_schedule_default():
    cfg = ts.StreamCfg(noise_unit=2.0)
    assert cfg.target_noise(1) == 0.0
    assert cfg.target_noise(3) == pytest.approx(0.2)


def test_cfg_validation_collects_errors():
    with pytest.raises(ConfigError) as info:
        ts.StreamCfg(N=1, m=2, base_noise=-1)
    msg = str(info.value)
    assert "N must be" in msg and "m must be" in msg and "base_noise" in msg


def test_stripped_removes_eval_labels(small_stream):
    s = small_stream.stripped()
    assert all(t.eval_labels is None for t in s.targets)
    assert small_stream.targets[0].eval_labels is not None


def test_stream_rejects_target_training_labels(small_stream):
    bad = ts.TaskSnapshot(np.zeros((3, 2)), np.zeros(3), 1, ts.TARGET)
    with pytest.raises(DataError):
        ts.DynamicStream(small_stream.sources, (bad,) + small_stream.targets[1:], 2, 2)


def test_merged_source(small_stream):
    m = small_stream.merged_source()
    assert m.m == sum(s.m for s in small_stream.sources) and m.time_index == 0


def test_csv_roundtrip(tmp_path, small_stream):
    for snap in (small_stream.sources[1], small_stream.targets[2]):
        p = tmp_path / "x.csv"
        ts.save_csv(snap, p)
        back = ts.load_csv(p, True, 2, snap.role, snap.time_index)
        assert back.equals(snap)


def test_csv_parse_errors_carry_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f0,f1,label\n0.1,0.2,0\n0.3,oops,1\n")
    with pytest.raises(ParseError) as info:
        ts.load_csv(p, True)
    assert info.value.line == 3
    p.write_text("f0,f1,label\n0.1,0.2,0\n0.3\n")
    with pytest.raises(ParseError, match="line 3"):
        ts.load_csv(p, True)
    p.write_text("f0,f1,label\n0.1,0.2,5\n")
    with pytest.raises(ParseError):
        ts.load_csv(p, True, num_classes=2)


def test_split_disjoint_and_seeded():
    tr, va = ts.split_indices(20, 5, 3)
    assert len(va) == 5 and not set(tr) & set(va) and len(tr) + len(va) == 20
    tr2, va2 = ts.split_indices(20, 5, 3)
    assert np.array_equal(va, va2)
    with pytest.raises(ConfigError):
        ts.split_indices(5, 5, 0)


def test_snapshot_shape_checks():
    with pytest.raises(ShapeError):
        ts.TaskSnapshot(np.zeros((3, 2)), np.zeros(2), 1, ts.SOURCE)
