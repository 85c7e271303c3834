import pytest

from minibar.langdetect import (LanguageDetector, LanguageProfile, ProfileError,
                                UnreliableDetection, build_profile, bundled_profiles,
                                bundled_training_text, detect_language, ngram_counts,
                                out_of_place)


def test_single_symbol_corpus():
    profile = build_profile(["aaaa " * 300], "xx")
    assert profile.ngram_ranks["a"] == 1


def test_build_is_deterministic():
    text = bundled_training_text("en")
    assert build_profile([text], "en") == build_profile([text], "en")


def test_bundled_profiles_match_training_text():
    for p in bundled_profiles():
        assert build_profile([bundled_training_text(p.language)], p.language) == p


@pytest.mark.parametrize("samples", [[], [""], ["short"]])
def test_too_little_text(samples):
    with pytest.raises(ProfileError):
        build_profile(samples, "en")


def test_ngrams_pad_words_and_skip_digits():
    counts = ngram_counts("ab 12")
    assert counts["_ab"] == 1 and counts["ab_"] == 1 and counts["_a"] == 1 and counts["b_"] == 1
    assert not any(ch.isdigit() for g in counts for ch in g)
    assert "_" not in counts


def test_profile_text_roundtrip():
    p = bundled_profiles()[0]
    assert LanguageProfile.from_text(p.language, p.to_text()) == p


def test_out_of_place_identical_is_zero():
    p = build_profile([bundled_training_text("fr")], "fr")
    assert out_of_place(p.ngram_ranks, p) == 0


@pytest.mark.parametrize("text,lang", [
    ("Problème de serveur récurrent", "fr"),
    ("Connection issues to the main server", "en"),
    ("Dommage que la connexion 4g soit indispensable pour fonctionner.", "fr"),
    ("Useless without internet.", "en"),
])
def test_detect_examples(text, lang):
    assert detect_language(text, bundled_profiles()) == lang


def test_too_short_is_unreliable():
    with pytest.raises(UnreliableDetection):
        detect_language("ok", bundled_profiles())


def test_detector_falls_back_to_default():
    assert LanguageDetector(default="fr").detect("ok") == ("fr", False)
    assert LanguageDetector().detect("The app keeps crashing") == ("en", True)


def test_validation_accuracy(fixtures):
    rows = [line.split("\t", 1) for line in
            (fixtures / "lang_validation.tsv").read_text(encoding="utf-8").splitlines()]
    profiles = bundled_profiles()
    correct = sum(detect_language(text, profiles) == lang for lang, text in rows)
    assert len(rows) == 200
    assert correct / len(rows) >= 0.95
