import logging

import pytest

from harness.corpus import bundled_samples
from lm_api.base import ProviderConfig, build_provider

logging.basicConfig(level=logging.INFO)


@pytest.fixture(scope="session")
def config():
    return ProviderConfig(kind="reference", top_k=5, temperature=0.0, seed=0)


@pytest.fixture(scope="session")
def provider(config):
    return build_provider(config)


@pytest.fixture(scope="session")
def samples(provider):
    return list(bundled_samples(provider))


@pytest.fixture(scope="session")
def prompts(samples):
    return [s.prompt for s in samples]
