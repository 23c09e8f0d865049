import math

import pytest

from errors import EmptyPrompt, EmptyText, InvalidRequest, PatternTooShort
from lm_api.base import ProviderConfig
from lm_api.ngram_model import ReferenceModel
from signal_pattern.pattern import PatternSpec, generate_pattern
from watermark.encoder import GenerationRecord, GenerationRequest, generate_plain, generate_watermarked
from watermark.recompute import RankSeries, perplexity, perplexity_from_logprobs, recompute_ranks

SIN_X = generate_pattern(PatternSpec(1, 0.0, 5, 10, 200))


def _watermark(prompt, provider, config, pattern=SIN_X, length=200):
    return generate_watermarked(GenerationRequest(prompt, pattern, config, length), provider)


# ---------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------
def test_all_ones_pattern_is_greedy(provider, config, prompts):
    ones = generate_pattern(PatternSpec(1, 0.0, 1, 10, 60))
    wm = _watermark(prompts[0], provider, config, ones, 60)
    plain = generate_plain(prompts[0], config, 60, provider)
    assert wm.tokens == plain.tokens
    assert plain.ranks == [1] * 60


def test_selected_rank_follows_pattern(provider, config, prompts):
    rec = _watermark(prompts[1], provider, config)
    assert len(rec.tokens) == 200
    assert rec.flags == []
    assert rec.ranks == list(SIN_X.ranks)
    for pool, rank, tok in zip(rec.pools, rec.ranks, rec.tokens):
        assert pool.at_rank(rank) == tok


def test_generation_is_deterministic(provider, config, prompts):
    a = _watermark(prompts[2], provider, config)
    b = _watermark(prompts[2], provider, config)
    assert a.to_json(include_pools=True) == b.to_json(include_pools=True)


def test_seeded_hot_generation_is_deterministic(provider, prompts):
    hot = ProviderConfig(temperature=0.8, seed=11)
    a = _watermark(prompts[3], provider, hot, length=50)
    b = _watermark(prompts[3], provider, hot, length=50)
    assert a.to_json() == b.to_json()


def test_eos_is_suppressed(provider, config, prompts):
    for prompt in prompts[:5]:
        rec = _watermark(prompt, provider, config)
        assert provider.eos_token not in rec.tokens
        plain = generate_plain(prompt, config, 200, provider)
        assert provider.eos_token not in plain.tokens


def test_plain_output_has_target_length(provider, config, prompts):
    for prompt in prompts[:3]:
        assert len(generate_plain(prompt, config, 200, provider).tokens) == 200


def test_shallow_pool_falls_back_to_deepest_rank():
    # vocabulary {a, b} plus EOS: two candidates once EOS is excluded
    abab = ReferenceModel([["a", "b", "a", "b", "a", "b"]], order=3)
    pattern = generate_pattern(PatternSpec(1, 0.0, 5, 10, 20))
    rec = _watermark([abab.token("a")], abab, ProviderConfig(top_k=5), pattern, 20)

    wanted = list(pattern.ranks)
    assert rec.ranks == [min(r, 2) for r in wanted]
    assert rec.flags == [i for i, r in enumerate(wanted) if r > 2]
    assert rec.flags == [0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15]
    assert abab.eos_token not in rec.tokens


def test_top_k_below_amplitude_rejected(provider, prompts):
    shallow = generate_pattern(PatternSpec(1, 0.0, 5, 10, 20))
    with pytest.raises(InvalidRequest):
        _watermark(prompts[0], provider, ProviderConfig(top_k=3), shallow, 20)


def test_request_validation(provider, config, prompts):
    with pytest.raises(PatternTooShort):
        _watermark(prompts[0], provider, config, generate_pattern(PatternSpec(length=10)), 20)
    with pytest.raises(EmptyPrompt):
        _watermark("", provider, config, length=10)


def test_record_round_trips_through_dict(provider, config, prompts):
    rec = _watermark(prompts[4], provider, config, length=30)
    back = GenerationRecord.from_dict(rec.to_dict(include_pools=True))
    assert back.tokens == rec.tokens
    assert back.pools == rec.pools
    assert back.key == PatternSpec(1, 0.0, 5, 10)


# ---------------------------------------------------------------
# Re-computation
# ---------------------------------------------------------------
@pytest.mark.parametrize("harmonic", [1, 2, 3])
def test_closed_loop_ranks_equal_pattern(provider, config, prompts, harmonic):
    pattern = generate_pattern(PatternSpec(harmonic, 0.0, 5, 10, 200))
    for prompt in prompts[:10]:
        rec = _watermark(prompt, provider, config, pattern)
        series = recompute_ranks(rec.tokens, rec.prompt_tokens, config, provider)
        assert series.ranks == list(pattern.ranks)
        assert series.context_len == len(rec.prompt_tokens)


def test_greedy_text_recomputes_to_all_ones(provider, config, prompts):
    for prompt in prompts[:5]:
        rec = generate_plain(prompt, config, 100, provider)
        assert recompute_ranks(rec.tokens, rec.prompt_tokens, config, provider).ranks == [1] * 100


def test_recompute_forces_zero_temperature(provider, config, prompts):
    rec = _watermark(prompts[5], provider, config, length=50)
    hot = ProviderConfig(temperature=0.9, seed=5)
    series = recompute_ranks(rec.tokens, rec.prompt_tokens, hot, provider)
    assert series.ranks == list(SIN_X.ranks[:50])


def test_empty_context_seeds_with_first_token(provider, config):
    text = provider.tokenize("the river rose with the melting snow")
    series = recompute_ranks(text, [], config, provider)
    assert len(series) == len(text) - 1
    assert series.context_len == 1


def test_recompute_is_prefix_monotone(provider, config, samples):
    sample = samples[0]
    full = recompute_ranks(sample.completion, sample.prompt, config, provider)
    part = recompute_ranks(sample.completion[:50], sample.prompt, config, provider)
    assert full.ranks[:50] == part.ranks
    assert full.logprobs[:50] == part.logprobs


def test_out_of_pool_gets_sentinel(provider, config):
    text = provider.tokenize("the village xylophonically")
    series = recompute_ranks(text[1:], text[:1], config, provider)
    assert series.ranks[-1] == config.top_k + 1
    assert all(1 <= r <= config.top_k + 1 for r in series.ranks)


def test_recompute_rejects_empty_text(provider, config):
    with pytest.raises(EmptyText):
        recompute_ranks([], provider.tokenize("the"), config, provider)


def test_rank_series_round_trip():
    s = RankSeries([3, 4, 5], [-0.1, -0.2, -0.3], 7)
    assert RankSeries.from_dict(s.to_dict()) == s


# ---------------------------------------------------------------
# Perplexity
# ---------------------------------------------------------------
def test_perplexity_closed_form():
    assert perplexity_from_logprobs([math.log(0.5)] * 8) == pytest.approx(2.0)


def test_single_unknown_token_hits_floor(provider, config):
    context = provider.tokenize("the village")
    unknown = provider.token("xylophonically")
    assert perplexity([unknown], context, config, provider) == pytest.approx(1e10)


def test_greedy_text_is_no_more_perplexing_than_watermarked(provider, config, prompts):
    for prompt in prompts[:5]:
        plain = generate_plain(prompt, config, 200, provider)
        wm = _watermark(prompt, provider, config)
        assert perplexity(plain.tokens, plain.prompt_tokens, config, provider) <= perplexity(
            wm.tokens, wm.prompt_tokens, config, provider
        )
