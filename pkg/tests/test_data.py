import numpy as np
import pytest

from deeplau.data import (BOS, EOS, PAD, UNK, DataError, ParallelCorpus, SyntheticTaskSpec, Vocab,
                          build_vocab, encode_sources, epoch_order, generate_synthetic, lexicon,
                          lexicon_swap, make_batches, read_parallel, write_parallel)


def test_reserved_ids():
    v = Vocab()
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
    assert v.itos == ["<pad>", "<s>", "</s>", "<unk>"]


def test_build_vocab_rule_and_ties():
    corpus = [["a", "b", "a"], ["c", "a", "b"]]
    v = build_vocab(corpus, 6)
    assert v.itos[4:] == ["a", "b"]
    assert v.encode(["c"]) == [UNK]
    full = build_vocab(corpus, 100)
    assert UNK not in full.encode(["a", "b", "c"])
    ties = build_vocab([["x", "y"], ["y", "x"]], 5)
    assert ties.tokens == ["x"]


def test_vocab_round_trip_and_files(tmp_path):
    corpus = [["the", "cat"], ["a", "dog", "the"]]
    v = build_vocab(corpus, 100)
    ids = v.encode(["the", "dog"])
    assert v.decode(ids) == ["the", "dog"]
    assert v.decode([BOS] + ids + [EOS, 5]) == ["the", "dog"]
    v.save(tmp_path / "a.vocab")
    build_vocab(corpus, 100).save(tmp_path / "b.vocab")
    assert (tmp_path / "a.vocab").read_bytes() == (tmp_path / "b.vocab").read_bytes()
    assert Vocab.load(tmp_path / "a.vocab") == v
    with pytest.raises(DataError):
        build_vocab([[]], 10)


def _corpus(n, length=5):
    return ParallelCorpus([([f"w{i % 7}"] * length, [f"v{i % 5}"] * length) for i in range(n)])


def test_batch_sizes_and_layout():
    corpus = _corpus(300)
    vs, vt = build_vocab(corpus.sources, 50), build_vocab(corpus.targets, 50)
    batches = make_batches(corpus, vs, vt, 128)
    assert [b.size for b in batches] == [128, 128, 44]
    b = batches[0]
    assert np.all(b.src[:, -1] == EOS) and np.all(b.tgt_in[:, 0] == BOS)
    assert np.all(b.tgt_out[:, -1] == EOS)
    assert np.array_equal(b.tgt_in[:, 1:], b.tgt_out[:, :-1])


def test_length_filter():
    corpus = ParallelCorpus([(["a"] * 81, ["b"] * 3), (["a"] * 80, ["b"] * 3)])
    vs, vt = build_vocab(corpus.sources, 10), build_vocab(corpus.targets, 10)
    batches = make_batches(corpus, vs, vt, 128, 80)
    assert len(batches) == 1 and batches[0].src.shape == (1, 81)
    with pytest.raises(DataError):
        make_batches(ParallelCorpus([(["a"] * 81, ["b"])]), vs, vt, 128, 80)


def test_batches_partition_corpus(rng):
    pairs = []
    for i in range(200):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        pairs.append(([f"s{i}"] + ["x"] * (n - 1), [f"t{i}"] + ["y"] * (m - 1)))
    corpus = ParallelCorpus(pairs)
    vs, vt = build_vocab(corpus.sources, 1000), build_vocab(corpus.targets, 1000)
    seen = []
    for b in make_batches(corpus, vs, vt, 16):
        seen += [vs.decode(row)[0] for row in b.src]
    assert sorted(seen) == sorted(f"s{i}" for i in range(200))


def test_epoch_order_is_seeded_permutation():
    a = epoch_order(10, 3, 0)
    assert sorted(a) == list(range(10))
    assert np.array_equal(a, epoch_order(10, 3, 0))
    assert not np.array_equal(a, epoch_order(10, 3, 1))


def test_synthetic_rules():
    assert lexicon_swap(["a", "b", "c"], {"a": "x", "b": "y", "c": "z"}) == ["z", "y", "x"]
    for kind, f in (("copy", lambda s: s), ("reverse", lambda s: s[::-1])):
        corpus = generate_synthetic(SyntheticTaskSpec(kind, 10, 3, 6, 50, 1))
        assert all(t == f(s) for s, t in corpus.pairs)
        assert all(3 <= len(s) <= 6 for s in corpus.sources)
    spec = SyntheticTaskSpec("lexicon_swap", 10, 3, 6, 50, 1)
    mapping = lexicon(spec)
    assert sorted(mapping.values()) == sorted(f"t{i}" for i in range(10))
    assert all(t == lexicon_swap(s, mapping) for s, t in generate_synthetic(spec).pairs)


def test_synthetic_is_pure_function_of_spec():
    spec = SyntheticTaskSpec("copy", 20, 3, 12, 100, 7)
    assert generate_synthetic(spec) == generate_synthetic(spec)
    assert generate_synthetic(spec) != generate_synthetic(SyntheticTaskSpec("copy", 20, 3, 12, 100, 8))


def test_parallel_files(tmp_path):
    corpus = generate_synthetic(SyntheticTaskSpec("reverse", 5, 1, 4, 20, 0))
    write_parallel(corpus, tmp_path / "x.src", tmp_path / "x.tgt")
    assert read_parallel(tmp_path / "x.src", tmp_path / "x.tgt") == corpus
    (tmp_path / "short.tgt").write_text("a\n")
    with pytest.raises(DataError):
        read_parallel(tmp_path / "x.src", tmp_path / "short.tgt")


def test_encode_sources_appends_eos():
    v = Vocab(["a", "b"])
    assert encode_sources([["a", "b"], []], v) == [[4, 5, EOS], [EOS]]
