"""Seeded synthetic corpus for training, mining and evaluation.

Real bot traffic is private, so demos and the end-to-end tests generate
their own: two dozen chat families built from a base phrase plus
stopword rewrites and single-token decorations, alongside task,
information and junk negatives.  Stopword rewrites keep the filtered
token set (and therefore the embedding) identical while producing
distinct surface texts, which gives every family a dense clusterable
core.  Family vocabularies overlap pairwise by at most one content
token so clusters never chain into each other.

Everything is a pure function of the seed; the same seed always writes
byte-identical files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .text_pipeline import load_stopwords, normalize


@dataclass(frozen=True)
class FamilySpec:
    id: str
    base: str
    decorations: tuple[str, ...]


CHAT_FAMILIES: tuple[FamilySpec, ...] = (
    FamilySpec("joke_request", "tell me a joke", ("funny", "quick", "short", "silly", "hilarious")),
    FamilySpec("greeting_morning", "good morning", ("sunshine", "friend", "bright", "beautiful", "cheerful")),
    FamilySpec("greeting_hello", "hello nice to see you", ("buddy", "pal", "mate")),
    FamilySpec("farewell", "goodbye till next time", ("tomorrow", "soon", "tonight")),
    FamilySpec("gratitude", "thank you kindly", ("helping", "sweet", "gracious")),
    FamilySpec("bot_age", "how old are you", ("exactly", "years", "months")),
    FamilySpec("bot_name", "what is your name", ("real", "nickname", "actual")),
    FamilySpec("bot_creator", "who made you", ("actually", "originally", "seriously")),
    FamilySpec("wellbeing", "are you feeling okay", ("alright", "wonderful", "fine")),
    FamilySpec("user_love", "i love you", ("madly", "deeply", "forever")),
    FamilySpec("user_bored", "i am so bored", ("completely", "totally", "utterly")),
    FamilySpec("sing_song", "sing me a song", ("melody", "tune", "lullaby")),
    FamilySpec("tell_story", "tell a story", ("bedtime", "scary", "magical")),
    FamilySpec("favorite_color", "what color do you like", ("crayons", "painting", "rainbows")),
    FamilySpec("weather_chat", "lovely weather today", ("outside", "sunny", "chilly")),
    FamilySpec("user_sad", "i feel so sad", ("lonely", "unhappy", "miserable")),
    FamilySpec("user_happy", "i am happy", ("excited", "glad", "joyful")),
    FamilySpec("compliment_bot", "you are smart", ("clever", "brilliant", "genius")),
    FamilySpec("criticism_generic", "you are stupid", ("dumb", "useless", "worthless")),
    FamilySpec("criticism_response", "bad answer", ("terrible", "wrong", "horrible")),
    FamilySpec("meaning_life", "what is the meaning of life", ("purpose", "point", "honestly")),
    FamilySpec("bot_sleep", "do you ever sleep", ("naps", "dreams", "resting")),
    FamilySpec("bot_robot", "are you a robot", ("machine", "human", "android")),
    FamilySpec("user_hungry", "i am hungry", ("starving", "snacks", "pizza")),
)

# surface rewrites that change the text but not the filtered token set
STOPWORD_WRAPS = (
    "{q}",
    "just {q}",
    "so {q}",
    "{q} again",
    "{q} then",
    "{q} too",
    "and {q}",
    "just {q} again",
    "so {q} then",
)

TASK_TEMPLATES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("alarm", ("set an alarm for six", "set an alarm for seven", "set an alarm for eight",
               "set an alarm for noon", "set an alarm for five", "set an alarm for ten",
               "set an alarm for one", "set an alarm for two",
               "wake me up at six", "set my alarm for nine", "cancel my alarm",
               "delete the alarm")),
    ("timer", ("start a timer for ten minutes", "set a timer for five minutes",
               "start a countdown timer", "stop the timer", "pause the timer",
               "set a timer for pasta")),
    ("lights", ("turn off the kitchen lights", "turn on the bedroom lights",
                "dim the living room lights", "switch off all the lights",
                "turn the lights blue", "brighten the hallway lights")),
    ("music", ("play some jazz music", "play my workout playlist", "skip this track",
               "play the next track", "shuffle my playlist", "stop the music")),
    ("volume", ("turn the volume up", "turn the volume to fifty percent",
                "mute the speaker", "lower the volume", "unmute the speaker")),
    ("call", ("call mom on speaker", "call the dentist office", "redial the last number",
              "call my brother", "hang up the call")),
    ("message", ("send a text to alice", "text bob i am running late",
                 "read my new messages", "reply to the last message",
                 "send a message to the group")),
    ("navigate", ("navigate to the airport", "take me home via the highway",
                  "find a route to the office", "navigate to the nearest gas station",
                  "avoid tolls on this route")),
    ("shopping", ("add milk to my shopping list", "add eggs to the grocery list",
                  "remove bread from the list", "clear my shopping list",
                  "add coffee beans to the list")),
    ("reminder", ("remind me to pay rent on friday", "remind me about the dentist",
                  "set a reminder for the meeting", "delete my last reminder",
                  "remind me to water the plants")),
    ("calendar", ("add lunch to my calendar", "move my oneonone to thursday",
                  "cancel the standup meeting", "show my calendar for monday",
                  "schedule a dentist appointment")),
    ("thermostat", ("set the thermostat to seventy", "make it warmer in here",
                    "lower the temperature two degrees", "turn on the heater",
                    "cool the bedroom")),
    ("translate", ("translate apple to spanish", "translate thanks into french",
                   "say water in german", "translate goodbye into italian")),
    ("convert", ("convert ten dollars to euros", "convert five miles to kilometers",
                 "convert two cups to liters", "convert a hundred pounds to kilograms")),
    ("vacuum", ("start the vacuum cleaner", "send the vacuum to the dock",
                "vacuum the living room", "stop the vacuum")),
    ("coffee", ("brew a cup of coffee", "start the coffee maker",
                "make espresso", "descale the coffee machine")),
    ("email", ("check my unread email", "archive the newsletter",
               "mark all email read", "open the latest email")),
    ("battery", ("show the phone battery level", "enable battery saver",
                 "check the tablet battery", "turn off battery saver")),
)

INFO_TEMPLATES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("capital", ("capital of france", "capital of japan", "capital of canada",
                 "capital of egypt", "capital of brazil")),
    ("height", ("height of mount everest", "height of the eiffel tower",
                "height of the burj khalifa", "height of kilimanjaro")),
    ("population", ("population of india", "population of tokyo",
                    "population of germany", "population of london")),
    ("author", ("who wrote moby dick", "who wrote hamlet", "who wrote the odyssey",
                "who wrote war and peace")),
    ("event", ("when did the berlin wall fall", "when did apollo eleven land",
               "when did the titanic sink", "when did rome fall")),
    ("distance", ("distance from earth to the moon", "distance from paris to rome",
                  "distance across the pacific", "distance from london to madrid")),
    ("boiling", ("boiling point of water", "freezing point of mercury",
                 "melting point of iron", "boiling point of nitrogen")),
    ("speed", ("speed of light in vacuum", "speed of sound in air",
               "top speed of a cheetah", "orbital speed of the earth")),
    ("ocean", ("largest ocean on earth", "deepest ocean trench",
               "smallest ocean in the world", "saltiest sea on earth")),
    ("president", ("first president of the united states", "current president of mexico",
                   "longest serving president of france", "youngest president ever")),
    ("currency", ("currency of switzerland", "currency of south korea",
                  "currency of argentina", "currency of norway")),
    ("element", ("atomic number of carbon", "symbol for potassium",
                 "heaviest natural element", "lightest noble gas")),
    ("river", ("longest river in africa", "widest river in south america",
               "deepest river in the world", "longest river in europe")),
    ("anthem", ("national anthem of spain", "national bird of new zealand",
                "national flower of scotland", "national animal of finland")),
    ("recipe", ("calories in a banana", "protein in an egg",
                "sugar in a can of cola", "vitamins in spinach")),
)

_JUNK_SYLLABLES = ("bla", "zwu", "krp", "flo", "qua", "sne", "vex", "gro",
                   "plim", "tusk", "wib", "zor", "mek", "dru", "yalp", "fon")


def family_surfaces(spec: FamilySpec) -> list[str]:
    """All distinct surface texts for one family, deterministic order."""
    out = [wrap.format(q=spec.base) for wrap in STOPWORD_WRAPS]
    for dec in spec.decorations:
        out.append(f"{spec.base} {dec}")
        out.append(f"just {spec.base} {dec}")
    return out


def _check_family_geometry() -> None:
    stopwords = load_stopwords()
    token_sets = {}
    for spec in CHAT_FAMILIES:
        tokens = set(normalize(spec.base, stopwords).tokens)
        for dec in spec.decorations:
            tokens |= set(normalize(dec, stopwords).tokens)
        token_sets[spec.id] = tokens
    ids = list(token_sets)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            shared = token_sets[a] & token_sets[b]
            if len(shared) > 1:
                raise AssertionError(
                    f"families {a} and {b} share tokens {sorted(shared)}"
                )


def _junk_texts(rng: np.random.Generator, count: int) -> list[str]:
    out = []
    seen = set()
    while len(out) < count:
        words = []
        for _ in range(int(rng.integers(2, 4))):
            parts = rng.choice(len(_JUNK_SYLLABLES), size=int(rng.integers(2, 4)))
            words.append("".join(_JUNK_SYLLABLES[p] for p in parts))
        text = " ".join(words)
        if text not in seen:
            seen.add(text)
            out.append(text)
    return out


def _family_weight(rank: int) -> float:
    return 30.0 / (rank + 1) ** 0.7


def _variant_weight(family_weight: float, rank: int) -> float:
    return round(max(0.05, family_weight / (rank + 1) ** 0.5), 2)


def _split(rng: np.random.Generator, n: int) -> tuple[list[int], list[int]]:
    order = list(rng.permutation(n))
    held = max(2, n // 5)
    return sorted(order[held:]), sorted(order[:held])


def _votes(rng: np.random.Generator, true_label: str) -> list[str]:
    others = [lab for lab in ("CHAT", "TASK", "INFORMATION", "JUNK") if lab != true_label]
    roll = rng.random()
    if roll < 0.70:
        votes = [true_label] * 4
    elif roll < 0.95:
        votes = [true_label] * 3 + [others[int(rng.integers(len(others)))]]
    else:
        noise = others[int(rng.integers(len(others)))]
        votes = [true_label] * 2 + [noise] * 2
    order = rng.permutation(4)
    return [votes[i] for i in order]


@dataclass(frozen=True)
class SynthCorpus:
    seed: int
    files: dict[str, str]
    manifest: dict

    def write(self, out_dir: str | Path) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, content in self.files.items():
            (out / name).write_text(content, "utf-8")
        (out / "manifest.json").write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", "utf-8"
        )
        return self.manifest


def generate(seed: int) -> SynthCorpus:
    """Build every corpus file in memory; pure function of the seed."""
    _check_family_geometry()
    root = np.random.SeedSequence(seed)
    rng_split, rng_votes, rng_junk = (
        np.random.default_rng(s) for s in root.spawn(3)
    )

    domain_train: list[str] = []
    domain_test: list[str] = []
    generic_train: list[str] = []
    generic_test: list[str] = []
    mining: list[str] = []
    eval_full: list[str] = []
    labels: list[str] = []

    def eval_row(text: str, weight: float, domain: str, intent: str, split: str) -> str:
        return f"{text}\t{weight}\t{domain}\t{intent}\t{split}"

    for rank, spec in enumerate(CHAT_FAMILIES):
        surfaces = family_surfaces(spec)
        fam_w = _family_weight(rank)
        seen_idx, held_idx = _split(rng_split, len(surfaces))
        for j, text in enumerate(surfaces):
            weight = _variant_weight(fam_w, j)
            split = "seen" if j in seen_idx else "held"
            labels.append(f"{text}\t{spec.id}")
            eval_full.append(eval_row(text, weight, "chat", spec.id, split))
            votes = ",".join(_votes(rng_votes, "CHAT"))
            if split == "seen":
                domain_train.append(f"{text}\t{weight}\tjudged\t{votes}")
                generic_train.append(f"{text}\t{weight}\t{spec.id}")
                mining.append(f"{text}\t{weight}")
            else:
                domain_test.append(f"{text}\t{weight}\tjudged\t{votes}")
                generic_test.append(f"{text}\t{weight}\t{spec.id}")
        domain_train.append(f"hey {spec.base}\t1.0\taugmented\tpositive")

    negative_sets = (
        ("task", "TASK", TASK_TEMPLATES),
        ("information", "INFORMATION", INFO_TEMPLATES),
    )
    for domain_name, vote_label, templates in negative_sets:
        for rank, (theme, variants) in enumerate(templates):
            fam_w = 18.0 / (rank + 1) ** 0.6
            seen_idx, held_idx = _split(rng_split, len(variants))
            for j, text in enumerate(variants):
                weight = _variant_weight(fam_w, j)
                split = "seen" if j in seen_idx else "held"
                labels.append(f"{text}\t{domain_name}_{theme}")
                eval_full.append(eval_row(text, weight, domain_name, "-", split))
                votes = ",".join(_votes(rng_votes, vote_label))
                if split == "seen":
                    domain_train.append(f"{text}\t{weight}\tjudged\t{votes}")
                else:
                    domain_test.append(f"{text}\t{weight}\tjudged\t{votes}")
            domain_train.append(f"{variants[0]} right away\t1.0\taugmented\tnegative")

    junk = _junk_texts(rng_junk, 40)
    junk_seen, junk_held = _split(rng_split, len(junk))
    for j, text in enumerate(junk):
        weight = round(max(0.05, 2.0 / (j + 1) ** 0.4), 2)
        split = "seen" if j in junk_seen else "held"
        labels.append(f"{text}\tjunk")
        eval_full.append(eval_row(text, weight, "junk", "-", split))
        votes = ",".join(_votes(rng_votes, "JUNK"))
        if split == "seen":
            domain_train.append(f"{text}\t{weight}\tjudged\t{votes}")
        else:
            domain_test.append(f"{text}\t{weight}\tjudged\t{votes}")

    # a slice of non-chat traffic leaks into the mining pool on purpose:
    # the dense alarm group must come out as a rejectable cluster, the
    # scattered rest and the junk must stay noise
    for theme, variants in TASK_TEMPLATES[:3]:
        for text in variants[:8]:
            mining.append(f"{text}\t1.5")
    for text in junk[:12]:
        mining.append(f"{text}\t0.3")

    eval_heldout = [row for row in eval_full if row.endswith("\theld")]

    files = {
        "domain_train.tsv": "\n".join(domain_train) + "\n",
        "domain_test.tsv": "\n".join(domain_test) + "\n",
        "generic_train.tsv": "\n".join(generic_train) + "\n",
        "generic_test.tsv": "\n".join(generic_test) + "\n",
        "mining_queries.tsv": "\n".join(mining) + "\n",
        "eval_full.tsv": "\n".join(eval_full) + "\n",
        "eval_heldout.tsv": "\n".join(eval_heldout) + "\n",
        "labels.tsv": "\n".join(labels) + "\n",
    }
    for name, content in files.items():
        for line in content.splitlines():
            if not line.strip():
                raise AssertionError(f"{name}: blank line generated")
    manifest = {
        "seed": seed,
        "families": [spec.id for spec in CHAT_FAMILIES],
        "counts": {name: content.count("\n") for name, content in files.items()},
    }
    return SynthCorpus(seed=seed, files=files, manifest=manifest)


def write_corpus(out_dir: str | Path, seed: int) -> dict:
    return generate(seed).write(out_dir)
