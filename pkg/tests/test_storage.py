import numpy as np
import pytest

from mlda.aem import BiasModel, BiasPairModel
from mlda.model import ContractViolation, ModelHierarchy, PosteriorLevel
from mlda.samplers import ChainRecord
from mlda.storage import (
    ChainFormatError,
    config_hash,
    read_bias_pairs,
    read_chain,
    write_bias_model,
    write_chain,
    write_series_csv,
)

GOLDEN = """\
iteration,level,accepted,log_posterior,qoi,state_0,state_1,proposal_qoi,proposal_0
0,1,1,-1,0.10000000000000001,0.10000000000000001,2,0.29999999999999999,0.29999999999999999
1,1,0,-1,0.10000000000000001,0.10000000000000001,2,0.69999999999999996,0.69999999999999996
2,1,1,-2.25,-1.5,-1.5,9.9999999999999995e-21,-1.5,-1.5
"""


def toy_record():
    return ChainRecord(
        level=1,
        states=np.array([[0.1, 2.0], [0.1, 2.0], [-1.5, 1e-20]]),
        log_posterior=np.array([-1.0, -1.0, -2.25]),
        accepted=np.array([True, False, True]),
        qoi=np.array([0.1, 0.1, -1.5]),
        proposal_coarse=np.array([[0.3], [0.7], [-1.5]]),
        proposal_qoi=np.array([0.3, 0.7, -1.5]),
    )


def test_golden_file(tmp_path):
    path = tmp_path / "chain.csv"
    write_chain(toy_record(), path)
    assert path.read_text() == GOLDEN


def test_canonical_file_reads_and_rewrites_identically(tmp_path):
    src = tmp_path / "golden.csv"
    src.write_text(GOLDEN)
    out = tmp_path / "again.csv"
    write_chain(read_chain(src), out)
    assert out.read_bytes() == src.read_bytes()


def test_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    rec = ChainRecord(0, rng.normal(size=(50, 3)) * 10.0 ** rng.integers(-300, 300, size=(50, 3)),
                      rng.normal(size=50), rng.random(50) < 0.5, rng.normal(size=50))
    path = tmp_path / "c.csv"
    write_chain(rec, path)
    back = read_chain(path)
    for name in ("states", "log_posterior", "accepted", "qoi"):
        np.testing.assert_array_equal(getattr(back, name), getattr(rec, name))
    assert back.level == 0 and back.proposal_qoi is None


def test_negative_infinity_round_trips(tmp_path):
    rec = ChainRecord(0, np.zeros((2, 1)), np.array([-np.inf, 0.5]), np.array([True, True]), np.zeros(2))
    write_chain(rec, tmp_path / "c.csv")
    assert read_chain(tmp_path / "c.csv").log_posterior[0] == -np.inf


def test_empty_chain_is_header_only(tmp_path):
    rec = ChainRecord(0, np.zeros((0, 2)), np.zeros(0), np.zeros(0, bool), np.zeros(0))
    path = tmp_path / "c.csv"
    write_chain(rec, path)
    assert path.read_text() == "iteration,level,accepted,log_posterior,qoi,state_0,state_1\n"
    back = read_chain(path)
    assert len(back) == 0 and back.states.shape == (0, 2)


@pytest.mark.parametrize("bad_line, message", [
    ("5,1,1,-1,0.1,0.1,2,0.3,0.3", ":3: iteration 5 out of sequence"),
    ("1,1,1,-1,0.1,0.1,2,0.3", ":3: expected 9 fields"),
    ("1,1,maybe,-1,0.1,0.1,2,0.3,0.3", ":3:"),
    ("1,1,1,-1,abc,0.1,2,0.3,0.3", ":3:"),
])
def test_malformed_rows_name_the_line(tmp_path, bad_line, message):
    lines = GOLDEN.splitlines()
    lines[2] = bad_line
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ChainFormatError, match=message):
        read_chain(path)


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(OSError, match="nowhere.csv"):
        read_chain(tmp_path / "nowhere.csv")


def test_empty_file_is_a_format_error(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(ChainFormatError):
        read_chain(tmp_path / "e.csv")


def test_bias_snapshot_round_trip(tmp_path):
    levels = [PosteriorLevel(lambda x: x, np.zeros(2), np.eye(2), dim=2) for _ in range(3)]
    bias = BiasModel.for_hierarchy(ModelHierarchy(levels, [2, 2, 2]))
    bias.set_pair(BiasPairModel(0, np.array([0.1, -1 / 3]), np.array([[2.0, 0.5], [0.5, 1e-9]]), 7))
    path = tmp_path / "bias.txt"
    write_bias_model(bias, path)
    pairs = read_bias_pairs(path)
    assert [p.k for p in pairs] == [0, 1] and [p.count for p in pairs] == [7, 0]
    for a, b in zip(pairs, bias.pairs):
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.cov, b.cov)


def test_mean_only_bias_snapshot_omits_covariance(tmp_path):
    levels = [PosteriorLevel(lambda x: x, np.zeros(2), np.eye(2), dim=2) for _ in range(2)]
    bias = BiasModel.for_hierarchy(ModelHierarchy(levels, [2, 2]), with_covariance=False)
    bias.update(0, [0.25, -1.5])
    path = tmp_path / "bias.txt"
    write_bias_model(bias, path)
    assert path.read_text() == "pair 0 count 1 dim 2 mean_only\n0.25 -1.5\n"
    (pair,) = read_bias_pairs(path)
    np.testing.assert_array_equal(pair.mean, [0.25, -1.5])
    np.testing.assert_array_equal(pair.cov, np.zeros((2, 2)))


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_series_csv_rejects_ragged_columns(tmp_path):
    write_series_csv(tmp_path / "ok.csv", {"n": np.arange(2), "x": np.array([0.5, 1.0])})
    assert (tmp_path / "ok.csv").read_text() == "n,x\n0,0.5\n1,1\n"
    with pytest.raises(ContractViolation):
        write_series_csv(tmp_path / "bad.csv", {"a": np.zeros(2), "b": np.zeros(3)})
