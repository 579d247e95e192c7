import pytest

from listreader.errors import ConfigError
from listreader.synthetic import GenConfig, bridged_answer_sentences, generate_synthetic, word_pools
from listreader.text import example_to_json, load_jsonl, write_jsonl


@pytest.fixture(scope="module", params=["keyword", "relational"])
def corpus(request):
    return request.param, generate_synthetic(GenConfig(mode=request.param), 5, 200)


def test_deterministic():
    cfg = GenConfig(mode="relational")
    a = [example_to_json(e) for e in generate_synthetic(cfg, 3, 30)]
    b = [example_to_json(e) for e in generate_synthetic(cfg, 3, 30)]
    assert a == b
    assert a != [example_to_json(e) for e in generate_synthetic(cfg, 4, 30)]


def test_at_least_two_noncontiguous_spans(corpus):
    _, exs = corpus
    for e in exs:
        assert len(e.answers) >= 2
        e.validate(min_answers=2)


def test_keyword_answers_overlap_question():
    for e in generate_synthetic(GenConfig(mode="keyword"), 5, 200):
        q = set(e.question)
        for a in e.answers:
            span = e.sentences[a.sent][a.start:a.end + 1]
            assert q & set(span)


def test_keyword_distractors_do_not_overlap_question():
    for e in generate_synthetic(GenConfig(mode="keyword"), 5, 200):
        q = set(e.question)
        answers = set(e.answer_sentences())
        for k, s in enumerate(e.sentences):
            if k not in answers:
                assert not q & set(s)


@pytest.mark.parametrize("mode", ["keyword", "relational"])
def test_decoy_topics_switch(mode):
    cfg = GenConfig(mode=mode)
    topics = set(word_pools(cfg)[0])

    def distractor_topics(config):
        out = 0
        for e in generate_synthetic(config, 6, 100):
            answers = set(e.answer_sentences())
            out += sum(len(topics & set(s)) for k, s in enumerate(e.sentences) if k not in answers)
        return out

    assert distractor_topics(cfg) == 0
    assert distractor_topics(GenConfig(mode=mode, decoy_topics=True)) > 0


def test_relational_bridge_structure():
    for e in generate_synthetic(GenConfig(mode="relational"), 5, 200):
        q = set(e.question)
        bridged = bridged_answer_sentences(e)
        # exhaustive token intersection, independent of the helper
        zero_overlap = [k for k in e.answer_sentences() if not any(t in q for t in e.sentences[k])]
        assert bridged == zero_overlap and len(bridged) >= 1
        for k in bridged:
            others = [set(e.sentences[j]) for j in e.answer_sentences() if j != k and q & set(e.sentences[j])]
            assert any(set(e.sentences[k]) & o for o in others)


def test_output_passes_loader(tmp_path, corpus):
    _, exs = corpus
    path = tmp_path / "c.jsonl"
    write_jsonl(path, exs)
    loaded = load_jsonl(path, min_answers=2)
    assert [example_to_json(e) for e in loaded] == [example_to_json(e) for e in exs]


@pytest.mark.parametrize("kwargs", [
    {"max_answers": 6, "min_sentences": 5},
    {"min_answers": 1},
    {"mode": "chain"},
    {"vocab_size": 10},
    {"min_answers": 3, "max_answers": 2},
])
def test_infeasible_config(kwargs):
    with pytest.raises(ConfigError):
        generate_synthetic(GenConfig(**kwargs), 0, 1)
