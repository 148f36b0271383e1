import pytest

from ccal import config
from ccal.errors import ContractError


def test_defaults():
    c = config.resolve()
    assert c["lr"] == 1e-3 and c["hidden"] == (64,) and c["symmetric"] is False


def test_precedence():
    c = config.resolve({"lr": "0.01", "k": "8"}, {"k": 4, "margin": None}, ["lr", "k", "margin"])
    assert c == {"lr": 0.01, "k": 4, "margin": 0.5}


def test_parse_text():
    text = "# comment\nlr = 0.5  # trailing\n\nhidden = 128,64\nsymmetric = on\n"
    c = config.resolve(config.parse_config_text(text))
    assert c["lr"] == 0.5 and c["hidden"] == (128, 64) and c["symmetric"] is True


@pytest.mark.parametrize("bad", [{"nope": "1"}, {"lr": "fast"}, {"lr": "-1"}, {"val_fraction": "1.0"},
                                 {"hidden": "64,0"}, {"symmetric": "maybe"}])
def test_rejects(bad):
    with pytest.raises(ContractError):
        config.resolve(bad)


def test_malformed_line():
    with pytest.raises(ContractError, match=":2:"):
        config.parse_config_text("lr = 1\njust words\n")
