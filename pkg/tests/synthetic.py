"""Seeded synthetic corpus: 8 topics with disjoint vocabularies, English and French mixed."""

from __future__ import annotations

import random

from minibar.reviews import Review

# Each topic: shared technical terms (same in both languages) plus language-specific words.
TOPICS = {
    "bluetooth": (["bluetooth", "pairing", "headset", "kopin"],
                  ["speaker disconnects", "earbuds drop", "stereo pairing"],
                  ["enceinte déconnectée", "écouteurs coupent", "appairage stéréo"]),
    "gps": (["gps", "geolocation", "itinerary", "waypoint"],
            ["map position drifts", "route tracking jumps", "compass heading"],
            ["carte position dérive", "trajet saute", "boussole cap"]),
    "invoice": (["invoice", "pdf", "vat", "quickbooks"],
                ["billing totals", "receipt printing", "tax amounts"],
                ["facturation totaux", "reçu imprimé", "montants taxe"]),
    "camera": (["camera", "zoom", "autofocus", "hdr"],
               ["photo blurry", "lens shutter", "video recording"],
               ["photo floue", "objectif obturateur", "vidéo enregistrement"]),
    "widget": (["widget", "homescreen", "launcher", "shortcut"],
               ["tile resize", "glance panel", "quick access"],
               ["tuile redimensionner", "panneau aperçu", "accès rapide"]),
    "sync": (["sync", "dropbox", "icloud", "backup"],
             ["cloud upload", "restore archive", "devices merge"],
             ["nuage téléversement", "restaurer archive", "appareils fusion"]),
    "playlist": (["playlist", "spotify", "shuffle", "equalizer"],
                 ["song queue", "album tracks", "music lyrics"],
                 ["chanson file", "album pistes", "musique paroles"]),
    "password": (["password", "2fa", "biometric", "faceid"],
                 ["fingerprint unlock", "security code", "login token"],
                 ["empreinte déverrouiller", "sécurité code", "jeton identifiant"]),
}

EN_FRAMES = ["{a} {b} {c}: {d}.", "{a}, {b}, {c} - {d}!", "{d}. {a} {b} {c}."]
FR_FRAMES = ["{a} {b} {c} : {d}.", "{a}, {b}, {c} - {d} !", "{d}. {a} {b} {c}."]


def synthetic_corpus(seed: int = 7, per_topic: int = 15) -> tuple[list[Review], dict[str, str]]:
    rng = random.Random(seed)
    reviews, truth = [], {}
    n = 0
    for topic, (shared, en, fr) in TOPICS.items():
        for j in range(per_topic):
            lang = "en" if j % 2 == 0 else "fr"
            a, b, c = rng.sample(shared, 3)
            d = rng.choice(en if lang == "en" else fr)
            frame = rng.choice(EN_FRAMES if lang == "en" else FR_FRAMES)
            n += 1
            rid = f"s{n:03d}"
            reviews.append(Review(id=rid, app="synthetic", text=frame.format(a=a, b=b, c=c, d=d),
                                  rating=rng.randint(1, 3), thumbs_up=rng.randint(0, 9),
                                  language=lang))
            truth[rid] = topic
    order = list(range(len(reviews)))
    rng.shuffle(order)
    return [reviews[i] for i in order], truth
