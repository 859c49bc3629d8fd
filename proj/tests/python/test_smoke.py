import pytest

import mbfte


def test_round_trip():
    keys = mbfte.keygen_from_phrase("smoke")
    posts = mbfte.send(b"hello from python", keys, seed=3)
    assert len(posts) == 1
    assert mbfte.receive(posts[0], keys) == b"hello from python"


def test_signals_round_trip():
    keys = mbfte.keygen_random()
    posts = mbfte.send(b"tagged", keys, seed=4, signals=["#py"])
    assert posts[0].endswith(" #py")
    assert mbfte.receive(posts[0], keys, signals=["#py"]) == b"tagged"


def test_wrong_keys_fail():
    posts = mbfte.send(b"secret", mbfte.keygen_from_phrase("a"), seed=5)
    with pytest.raises(mbfte.MbfteError):
        mbfte.receive(posts[0], mbfte.keygen_from_phrase("b"))


def test_key_file_layout():
    keys = mbfte.keygen_from_phrase("alpha")
    raw = keys.serialize()
    assert len(raw) == 105
    assert raw[-1] == 10
    assert mbfte.KeyBundle.parse(raw).k1 == keys.k1


def test_distribution_sums_to_denominator():
    dist = mbfte.distribution("")
    assert len(dist) == 40
    assert sum(f for _, f in dist) == 1 << 16
    assert len(mbfte.distribution("", top_k=5)) == 5


def test_decoding_attack():
    assert mbfte.decodable("whichwhich")
    assert not mbfte.decodable("whichwhich", top_k=1)


def test_detection_economics():
    assert abs(mbfte.bayes_posterior(0.001, 0.221, 0.001) - 0.1811) <= 0.0005
    row = mbfte.outcome_table(10000, 0.001, 0.221, 0.001)
    assert (row["actual_positives"], row["flagged"], row["false_alarms"], row["missed"], row["true_flags"]) == (
        10, 12, 10, 8, 2)


def test_entropy():
    assert mbfte.bit_entropy(bytes(100)) == 0.0
    assert mbfte.bit_entropy(bytes(range(256))) == pytest.approx(1.0)
