"""Synthetic JSON corpora with controllable class structure and noise.

Three nesting profiles:

- ``flat``: every class is a scalar key with its own value generator.
- ``nested``: alternates scalar classes with object-valued classes whose
  leaves use generators disjoint from every scalar class.
- ``joint``: class pairs share identical per-element value distributions
  and differ only in how two token alphabets are paired across the two
  child keys, so the root column's bag-of-values statistics carry no
  class signal and only the child columns (graph context) separate them.

Every fifth document of a scalar class uses an ``_alt`` key name mapped
back to the class by an annotation rule, and documents occasionally
carry boolean/null keys that extraction must drop.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ContractError
from .ingest import AnnotationMap

PROFILES = ("flat", "nested", "joint")

_WORDS_STATUS = ("iris", "jilt", "kiln", "lurk", "milk", "nip", "orb",
                 "prim", "quip", "rill")
_WORDS_NOTE = ("warn", "flag", "info", "note", "ping", "sync", "task", "void")
_LANGS = ("en", "fr", "de", "es", "pt", "it", "nl", "sv", "pl", "tr")
_TOOLS = ("hammer_v2", "wrench_v1", "derrick_v3", "pulley_v5", "gantry_v1",
          "crane_v4")
_HEX = "0123456789abcdef"
_UPPER = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
_MESS = "abcdefghijklmnopqrstuvwxyz0123456789"


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(0, len(seq)))]


def _chars(rng: np.random.Generator, alphabet: str, n: int) -> str:
    return "".join(_pick(rng, alphabet) for _ in range(n))


def _gen_screen_name(rng):
    return "@" + _chars(rng, "abcdegh", int(rng.integers(5, 10)))


def _gen_status_text(rng):
    return " ".join(_pick(rng, _WORDS_STATUS)
                    for _ in range(int(rng.integers(4, 8))))


def _gen_lang_code(rng):
    return _pick(rng, _LANGS)


def _gen_created_at(rng):
    return (f"20{int(rng.integers(18, 26)):02d}"
            f"-{int(rng.integers(1, 13)):02d}-{int(rng.integers(1, 29)):02d}"
            f"T{int(rng.integers(0, 24)):02d}:{int(rng.integers(0, 60)):02d}"
            f":{int(rng.integers(0, 60)):02d}")


def _gen_follower_count(rng):
    return str(int(rng.integers(0, 100000)))


def _gen_hexcode(rng):
    return "#" + _chars(rng, _HEX, 6)


def _gen_serial_num(rng):
    return f"SN-{int(rng.integers(0, 10000)):04d}-{_chars(rng, _UPPER, 2)}"


def _gen_label_note(rng):
    return " ".join(_pick(rng, _WORDS_NOTE)
                    for _ in range(int(rng.integers(2, 4))))


def _gen_geo_tag(rng):
    return f"{rng.uniform(-90, 90):.4f},{rng.uniform(-180, 180):.4f}"


def _gen_quote_ratio(rng):
    return f"{rng.random():.6f}"


def _gen_tool_name(rng):
    return _pick(rng, _TOOLS)


def _gen_uuid_like(rng):
    return f"{_chars(rng, _HEX, 8)}-{_chars(rng, _HEX, 4)}-{_chars(rng, _HEX, 4)}"


_BANK = [
    ("screen_name", _gen_screen_name),
    ("status_text", _gen_status_text),
    ("lang_code", _gen_lang_code),
    ("created_at", _gen_created_at),
    ("follower_count", _gen_follower_count),
    ("hexcode", _gen_hexcode),
    ("serial_num", _gen_serial_num),
    ("label_note", _gen_label_note),
    ("geo_tag", _gen_geo_tag),
    ("quote_ratio", _gen_quote_ratio),
    ("tool_name", _gen_tool_name),
    ("uuid_like", _gen_uuid_like),
]


def _generator(i: int):
    """Value generator i: the named bank first, then uppercase fillers."""
    if i < len(_BANK):
        return _BANK[i]
    j = i - len(_BANK)
    alphabet = _UPPER[(2 * j) % 24:(2 * j) % 24 + 2]
    size = 4 + j % 6

    def gen(rng, alphabet=alphabet, size=size):
        return _chars(rng, alphabet, size)

    return (f"field_{i:02d}", gen)


def _mess(rng) -> str:
    return _chars(rng, _MESS, 8)


def _maybe_extras(rng, doc: dict) -> None:
    # boolean/null keys that extraction is required to ignore
    if rng.random() < 0.3:
        doc["verified"] = bool(rng.random() < 0.5)
    if rng.random() < 0.2:
        doc["contributors"] = None


def _pair_doc(rng, root_key: str, child_keys: tuple[str, str],
              alphabets: tuple[str, str], aligned: bool, noise: float) -> dict:
    """Array-of-objects document for one joint-profile class.

    Every element holds exactly one token from each of the two alphabets,
    so any bag-of-values statistic of the root column is class-blind.
    Aligned classes put the first-alphabet token under the first key in
    every element; their twins spread the assignment evenly across both
    keys, so only the per-child joint composition separates the pair.
    Noise flips single elements.
    """
    m = int(rng.integers(8, 13))
    if aligned:
        assign = np.ones(m, dtype=bool)
    else:
        assign = np.zeros(m, dtype=bool)
        assign[: m // 2] = True
        assign = assign[rng.permutation(m)]
    first, second = child_keys
    elements = []
    for i in range(m):
        a = bool(assign[i])
        if rng.random() < noise:
            a = not a
        tok_a = _chars(rng, alphabets[0], int(rng.integers(10, 17)))
        tok_b = _chars(rng, alphabets[1], int(rng.integers(10, 17)))
        elements.append({
            first: tok_a if a else tok_b,
            second: tok_b if a else tok_a,
        })
    return {root_key: elements}


_PAIR_SPECS = [
    # (root key, child keys, token alphabets, aligned, child label)
    ("reg_list", ("u", "v"), ("mnstw", "12345"), True, "cell"),
    ("mix_list", ("u", "v"), ("mnstw", "12345"), False, "cell"),
    ("crate_list", ("p", "q"), ("bcfgk", "67890"), True, "crate_cell"),
    ("jumble_list", ("p", "q"), ("bcfgk", "67890"), False, "crate_cell"),
]


def generate_synthetic_corpus(class_count: int, docs_per_class: int,
                              nesting_profile: str = "flat",
                              noise: float = 0.0, seed: int = 0):
    """Build (documents, annotations, subject class names).

    Deterministic for a given argument tuple; the same seed yields a
    byte-identical corpus once serialized.
    """
    if class_count < 2:
        raise ContractError("need at least 2 classes")
    if docs_per_class < 1:
        raise ContractError("need at least 1 document per class")
    if nesting_profile not in PROFILES:
        raise ContractError(
            f"unknown nesting profile {nesting_profile!r}; choose from {PROFILES}"
        )
    if not 0.0 <= noise <= 1.0:
        raise ContractError(f"noise must be in [0, 1], got {noise}")

    rng = np.random.default_rng(seed)
    docs: list[dict] = []
    rules: list[tuple[str, str]] = []
    subjects: list[str] = []

    def scalar_value(gen, rng) -> str:
        if rng.random() < noise:
            return _mess(rng)
        return gen(rng)

    def add_scalar_class(name: str, gen) -> None:
        subjects.append(name)
        rules.append((f"$.{name}_alt", name))
        for j in range(docs_per_class):
            key = f"{name}_alt" if j % 5 == 4 else name
            doc = {key: scalar_value(gen, rng)}
            _maybe_extras(rng, doc)
            docs.append(doc)

    if nesting_profile == "flat":
        for i in range(class_count):
            name, gen = _generator(i)
            add_scalar_class(name, gen)

    elif nesting_profile == "nested":
        offset = class_count
        for i in range(class_count):
            gname, gen = _generator(i)
            if i % 2 == 0:
                add_scalar_class(gname, gen)
                continue
            name = f"{gname}_box"
            subjects.append(name)
            _, gen_a = _generator(offset)
            _, gen_b = _generator(offset + 1)
            offset += 2
            chain = i % 6 == 5
            for _ in range(docs_per_class):
                if chain:
                    inner = {f"{name}_leaf": scalar_value(gen_a, rng),
                             f"{name}_tag": scalar_value(gen_b, rng)}
                    doc = {name: {f"{name}_mid": inner}}
                else:
                    doc = {name: {f"{name}_a": scalar_value(gen_a, rng),
                                  f"{name}_b": scalar_value(gen_b, rng)}}
                _maybe_extras(rng, doc)
                docs.append(doc)

    else:  # joint
        n_pairs = min(2, class_count // 2)
        for root_key, child_keys, alphabets, aligned, child_label in \
                _PAIR_SPECS[: 2 * n_pairs]:
            subjects.append(root_key)
            for ck in child_keys:
                rules.append((f"$.{root_key}[*].{ck}", child_label))
            for _ in range(docs_per_class):
                doc = _pair_doc(rng, root_key, child_keys, alphabets,
                                aligned, noise)
                _maybe_extras(rng, doc)
                docs.append(doc)
        for i in range(class_count - 2 * n_pairs):
            name, gen = _generator(i)
            add_scalar_class(name, gen)

    return docs, AnnotationMap(rules), subjects


def write_corpus(path, docs) -> int:
    """One compact JSON document per line, UTF-8; insertion key order."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
            count += 1
    return count
