import pytest

import config
from codeswitch import load_lexicon
from corpus import MonoCorpus, ParallelCorpus
from phonvec import load_feature_table
from syntree import load_syntax_rules
from translit import load_shipped


GOLDEN_DIR = config.BASE_DIR / "tests" / "golden"


@pytest.fixture(scope="session")
def fra_hat():
    return load_shipped("fra_hat")


@pytest.fixture(scope="session")
def fra_ipa():
    return load_shipped("fra_ipa")


@pytest.fixture(scope="session")
def hat_ipa():
    return load_shipped("hat_ipa")


@pytest.fixture(scope="session")
def feature_table():
    return load_feature_table()


@pytest.fixture(scope="session")
def fra_hat_syntax():
    return load_syntax_rules(config.FRA_HAT_SYNTAX, config.FRA_HAT_LEXICON)


@pytest.fixture(scope="session")
def eng_jam_lexicon():
    return load_lexicon(config.ENG_JAM_LEXICON)


@pytest.fixture
def toy_bitext():
    sources = [f"fr phrase {i}" for i in range(20)]
    targets = [f"en sentence {i}" for i in range(20)]
    return ParallelCorpus.from_texts("fra", "eng", sources, targets)


@pytest.fixture
def toy_mono():
    return MonoCorpus.from_texts("eng", [f"the water number {i}" for i in range(20)])
