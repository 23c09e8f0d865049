import pytest

from attacks.attacks import (
    PARAPHRASED,
    SUBSTITUTED,
    GreedyParaphraser,
    LabeledText,
    ModelSubstituter,
    copy_paste,
    paraphrase_spans,
    substitute,
)
from errors import EmptyText, InvalidAttack
from lm_api.base import ProviderConfig, Token
from signal_pattern.pattern import PatternSpec, generate_pattern
from watermark.encoder import GenerationRequest, generate_plain, generate_watermarked


@pytest.fixture(scope="module")
def marked(provider, config, prompts):
    rec = generate_watermarked(
        GenerationRequest(prompts[0], generate_pattern(PatternSpec(length=200)), config), provider
    )
    return rec, LabeledText.unattacked(rec.tokens, True)


def test_copy_paste_labels():
    human = [Token(i, f"h{i}") for i in range(50)]
    wm = [Token(100 + i, f"w{i}") for i in range(200)]
    out = copy_paste(human, wm)
    assert len(out) == 250
    assert out.labels[:50] == [False] * 50
    assert out.labels[50:] == [True] * 200
    assert out.provenance == list(range(250))


def test_copy_paste_rejects_empty_side():
    with pytest.raises(EmptyText):
        copy_paste([], [Token(1, "a")])
    with pytest.raises(EmptyText):
        copy_paste([Token(1, "a")], [])


def test_substitute_zero_is_identity(marked, provider, config):
    _, text = marked
    out = substitute(text, 0.0, config=config, provider=provider)
    assert out == text


def test_substitute_everything_changes_every_token(marked, provider, config):
    _, text = marked
    out = substitute(text, 1.0, config=config, provider=provider)
    assert all(a != b for a, b in zip(out.tokens, text.tokens))
    assert out.provenance == [SUBSTITUTED] * len(text)
    assert out.labels == text.labels


def test_substitute_count_and_determinism(marked, provider, config):
    _, text = marked
    a = substitute(text, 0.1, seed=4, config=config, provider=provider)
    b = substitute(text, 0.1, seed=4, config=config, provider=provider)
    assert a == b
    assert a.provenance.count(SUBSTITUTED) == 20
    c = substitute(text, 0.1, seed=5, config=config, provider=provider)
    assert c.provenance != a.provenance


def test_substitute_rounds_up():
    text = LabeledText.unattacked([Token(i, str(i)) for i in range(7)], True)
    out = substitute(text, 0.3, substituter=lambda toks, i: Token(-5, "x"))
    assert out.provenance.count(SUBSTITUTED) == 3


def test_substituter_never_returns_original(provider, config):
    tokens = provider.tokenize("the old woman who lived by the river")
    sub = ModelSubstituter(config, provider)
    for i in range(len(tokens)):
        assert sub(tokens, i) != tokens[i]


def test_substituter_needs_two_candidates(provider):
    with pytest.raises(InvalidAttack):
        ModelSubstituter(ProviderConfig(top_k=1), provider)


def test_bad_fraction_rejected(marked):
    _, text = marked
    with pytest.raises(InvalidAttack):
        substitute(text, 1.5, substituter=lambda toks, i: toks[i])
    with pytest.raises(InvalidAttack):
        paraphrase_spans(text, -0.1, paraphraser=lambda left, span: list(span))
    with pytest.raises(InvalidAttack):
        paraphrase_spans(text, 0.1, span_len=0, paraphraser=lambda left, span: list(span))


def test_paraphrase_zero_is_identity(marked, provider, config):
    _, text = marked
    assert paraphrase_spans(text, 0.0, config=config, provider=provider) == text


def test_paraphrase_spans_cover_fraction(marked, provider, config):
    rec, text = marked
    para = GreedyParaphraser(config, provider, context=rec.prompt_tokens)
    out = paraphrase_spans(text, 0.4, paraphraser=para, seed=3)
    assert len(out) == len(text)
    assert out.provenance.count(PARAPHRASED) == 80
    assert out == paraphrase_spans(text, 0.4, paraphraser=para, seed=3)


def test_single_span_is_greedy_continuation(provider, config, prompts):
    context = list(prompts[1])
    rec = generate_watermarked(
        GenerationRequest(context, generate_pattern(PatternSpec(length=10)), config, 10), provider
    )
    text = LabeledText.unattacked(rec.tokens, True)
    out = paraphrase_spans(text, 1.0, paraphraser=GreedyParaphraser(config, provider, context=context))
    assert out.tokens == generate_plain(context, config, 10, provider).tokens
    assert out.labels == [True] * 10


def test_paraphrase_relabels_by_majority():
    tokens = [Token(i, str(i)) for i in range(20)]
    text = LabeledText(tokens, [False] * 4 + [True] * 16, list(range(20)))
    shorter = paraphrase_spans(text, 1.0, paraphraser=lambda left, span: list(span[:7]))
    assert len(shorter) == 14
    assert shorter.labels == [True] * 14
    mixed = LabeledText(tokens, [False] * 15 + [True] * 5, list(range(20)))
    out = paraphrase_spans(mixed, 0.5, paraphraser=lambda left, span: list(span), seed=0)
    assert out.labels.count(True) + out.labels.count(False) == 20


def test_labeled_text_round_trip(marked):
    _, text = marked
    out = substitute(text, 0.2, substituter=lambda toks, i: Token(-1, "?"), seed=1)
    assert LabeledText.from_dict(out.to_dict()) == out


def test_labeled_text_length_check():
    with pytest.raises(InvalidAttack):
        LabeledText([Token(1, "a")], [True, False], [0])


def test_copy_paste_keeps_attack_markers():
    human = [Token(i, f"h{i}") for i in range(3)]
    attacked = LabeledText([Token(9, "a"), Token(8, "b")], [True, True], [0, SUBSTITUTED])
    out = copy_paste(human, attacked)
    assert out.provenance == [0, 1, 2, 3, SUBSTITUTED]
    assert out.labels == [False, False, False, True, True]
