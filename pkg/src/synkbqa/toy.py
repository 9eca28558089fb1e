"""Deterministic toy fixture: a small film/TV knowledge base, templated
questions with hand-written dependency parses, and a word-vector table.

Regenerate the committed files with `python -m synkbqa.toy data/toy`.
Synonym rows in the word-vector table share one vector (movies/movie/film,
shows/show/tv, played/play) so type linking resolves those spans exactly.
"""
from __future__ import annotations

import os
import sys

import numpy as np

DIM = 24

PERSONS = [
    "Alice", "Bob", "Carol", "David", "Emma", "Frank",
    "Grace", "Henry", "Irene", "Jack", "Karen", "Liam",
    "Mona", "Nathan", "Olivia", "Peter", "Quinn", "Rachel",
    "Simon", "Tina", "Umar", "Vera", "Walter", "Xena",
]
COUNTRIES = ["France", "Japan", "Brazil", "Canada", "Egypt"]
FILMS = [
    "Starfall", "Moonrise", "Ironwood", "Duskwatch", "Riverstone",
    "Nightglass", "Suncatcher", "Thornfield", "Windmere", "Ashgrove",
    "Coldharbor", "Brightwater", "Stormvale", "Greyhollow", "Firecrest",
    "Oakhaven", "Silverpine", "Redbrook", "Mistral", "Lionsgate",
]
SHOWS = [
    "Harborline", "Westwick", "Crownpoint", "Fernridge",
    "Saltmarsh", "Kingsford", "Bellweather", "Northgate",
]

VECTOR_GROUPS = [
    ("movies", "movie", "film", "films"),
    ("shows", "show", "tv"),
    ("played", "play"),
]


def eid(name: str) -> str:
    return name.lower()


def build_kb():
    """Returns (triples, aliases, types) as plain tuples.

    Triples are (subject, predicate, object, objtype) with objtype one of
    entity/year.
    """
    triples: list[tuple[str, str, str, str]] = []
    aliases: list[tuple[str, str]] = []
    types: list[tuple[str, str]] = []

    directors = PERSONS[:6]
    actors = PERSONS[6:]
    works = [(t, "film") for t in FILMS] + [(t, "tv_show") for t in SHOWS]

    for name in PERSONS:
        aliases.append((eid(name), name))
    for name in COUNTRIES:
        aliases.append((eid(name), name))
        types.append((eid(name), "country"))
    for i, name in enumerate(PERSONS):
        triples.append((eid(name), "birth_year", str(1950 + 2 * i), "year"))
        triples.append((eid(name), "born_in", eid(COUNTRIES[i % 5]), "entity"))
    for name in directors:
        types.append((eid(name), "director"))
    for name in actors:
        types.append((eid(name), "actor"))

    for i, (title, kind) in enumerate(works):
        w = eid(title)
        aliases.append((w, title))
        types.append((w, kind))
        triples.append((eid(directors[i % 6]), "directed", w, "entity"))
        triples.append((w, "release_year", str(1980 + (i * 3) % 40), "year"))
        if kind == "film":
            cast = [actors[i % 18], actors[(i + 5) % 18]]
            if i % 2 == 0:
                cast.append(actors[(i + 11) % 18])
        else:
            # TV casts draw from the back half only, so actors[0..9] appear
            # in films exclusively
            j = i - len(FILMS)
            cast = [actors[10 + (j % 8)], actors[10 + ((j + 3) % 8)]]
        for a in cast:
            triples.append((eid(a), "play", w, "entity"))
    return triples, aliases, types


def _index(triples):
    plays: dict[str, list[str]] = {}      # person -> works
    cast: dict[str, list[str]] = {}       # work -> persons
    director: dict[str, str] = {}         # work -> person
    for s, p, o, _ in triples:
        if p == "play":
            plays.setdefault(s, []).append(o)
            cast.setdefault(o, []).append(s)
        elif p == "directed":
            director[o] = s
    release = {s: int(o) for s, p, o, _ in triples if p == "release_year"}
    birth = {s: int(o) for s, p, o, _ in triples if p == "birth_year"}
    born = {s: o for s, p, o, _ in triples if p == "born_in"}
    return plays, cast, director, release, birth, born


# hand-written head/deprel patterns, one per template; slots are filled by
# name and heads stay valid because every slot is a single token
PARSES = {
    "T1": [("what", 2, "det"), ("movies", 5, "dobj"), ("did", 5, "aux"),
           ("{P}", 5, "nsubj"), ("play", 0, "root"), ("in", 5, "prep"), ("?", 5, "punct")],
    "T2": [("what", 2, "det"), ("shows", 5, "dobj"), ("did", 5, "aux"),
           ("{P}", 5, "nsubj"), ("play", 0, "root"), ("in", 5, "prep"), ("?", 5, "punct")],
    "T3": [("who", 2, "nsubj"), ("directed", 0, "root"), ("{F}", 2, "dobj"), ("?", 2, "punct")],
    "T4": [("who", 2, "nsubj"), ("played", 0, "root"), ("in", 2, "prep"),
           ("{F}", 3, "pobj"), ("?", 2, "punct")],
    "T5": [("where", 4, "advmod"), ("was", 4, "auxpass"), ("{P}", 4, "nsubjpass"),
           ("born", 0, "root"), ("?", 4, "punct")],
    "T6": [("when", 4, "advmod"), ("was", 4, "auxpass"), ("{P}", 4, "nsubjpass"),
           ("born", 0, "root"), ("?", 4, "punct")],
    "T7": [("what", 2, "det"), ("movies", 5, "dobj"), ("did", 5, "aux"),
           ("{P}", 5, "nsubj"), ("play", 0, "root"), ("in", 5, "prep"),
           ("before", 5, "prep"), ("{Y}", 7, "pobj"), ("?", 5, "punct")],
    "T8": [("what", 2, "det"), ("movies", 5, "dobj"), ("did", 5, "aux"),
           ("{P}", 5, "nsubj"), ("play", 0, "root"), ("in", 5, "prep"),
           ("after", 5, "prep"), ("{Y}", 7, "pobj"), ("?", 5, "punct")],
    "T9": [("what", 2, "nsubj"), ("was", 0, "root"), ("the", 5, "det"),
           ("latest", 5, "amod"), ("movie", 2, "attr"), ("that", 8, "dobj"),
           ("{P}", 8, "nsubj"), ("played", 5, "relcl"), ("in", 8, "prep"), ("?", 2, "punct")],
    "T10": [("who", 2, "nsubj"), ("directed", 0, "root"), ("the", 4, "det"),
            ("movies", 2, "dobj"), ("that", 7, "dobj"), ("{P}", 7, "nsubj"),
            ("played", 4, "relcl"), ("in", 7, "prep"), ("?", 2, "punct")],
    "T11": [("what", 2, "det"), ("movies", 5, "dobj"), ("did", 5, "aux"),
            ("{P}", 5, "nsubj"), ("play", 0, "root"), ("in", 5, "prep"),
            ("with", 5, "prep"), ("{Q}", 7, "pobj"), ("?", 5, "punct")],
}
TEMPLATE_ORDER = ["T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8", "T9", "T10", "T11"]


def _instantiate(template: str, slots: dict[str, str]):
    tokens = []
    for form, head, deprel in PARSES[template]:
        if form.startswith("{"):
            form = slots[form[1:-1]]
        tokens.append((form, head, deprel))
    return tokens


def build_questions(triples, types):
    """80 template instances with nonempty gold answers, cycling templates."""
    plays, cast, director, release, birth, born = _index(triples)
    kind = {e: t for e, t in types}
    film_set = {eid(t) for t in FILMS}

    def films_of(p):
        return sorted(w for w in plays.get(p, []) if w in film_set)

    def shows_of(p):
        return sorted(w for w in plays.get(p, []) if w not in film_set)

    actors = [eid(n) for n in PERSONS[6:]]
    works = sorted(director)
    questions = []

    def add(template, slots, gold):
        if not gold:
            return
        questions.append((template, slots, sorted(set(gold))))

    round_no = 0
    while len(questions) < 80:
        for template in TEMPLATE_ORDER:
            if len(questions) >= 80:
                break
            i = round_no
            if template == "T1":
                p = actors[i % len(actors)]
                add(template, {"P": p.capitalize()}, films_of(p))
            elif template == "T2":
                p = actors[10 + (i + 3) % 8]
                add(template, {"P": p.capitalize()}, shows_of(p))
            elif template == "T3":
                f = works[i % len(works)]
                add(template, {"F": f.capitalize()}, [director[f]])
            elif template == "T4":
                f = works[(i + 7) % len(works)]
                add(template, {"F": f.capitalize()}, sorted(cast[f]))
            elif template == "T5":
                p = eid(PERSONS[i % len(PERSONS)])
                add(template, {"P": p.capitalize()}, [born[p]])
            elif template == "T6":
                p = eid(PERSONS[(i + 9) % len(PERSONS)])
                add(template, {"P": p.capitalize()}, [str(birth[p])])
            elif template in ("T7", "T8"):
                p = actors[(i + 5) % 10]
                years = sorted({release[w] for w in films_of(p)})
                if len(years) < 2:
                    continue
                pivot = years[len(years) // 2]
                if template == "T7":
                    gold = [w for w in films_of(p) if release[w] < pivot]
                else:
                    gold = [w for w in films_of(p) if release[w] > pivot]
                add(template, {"P": p.capitalize(), "Y": str(pivot)}, gold)
            elif template == "T9":
                p = actors[(i + 2) % 10]
                fs = films_of(p)
                if not fs:
                    continue
                latest = max(release[w] for w in fs)
                gold = sorted(w for w in fs if release[w] == latest)
                if len(gold) != 1:
                    continue
                add(template, {"P": p.capitalize()}, gold)
            elif template == "T10":
                p = actors[(i + 8) % len(actors)]
                add(template, {"P": p.capitalize()},
                    sorted({director[w] for w in plays.get(p, [])}))
            elif template == "T11":
                p = actors[(i + 4) % len(actors)]
                partners = sorted({a for w in films_of(p) for a in cast[w] if a != p})
                if not partners:
                    continue
                q = partners[i % len(partners)]
                gold = sorted(w for w in films_of(p) if q in cast[w])
                add(template, {"P": p.capitalize(), "Q": q.capitalize()}, gold)
        round_no += 1
        if round_no > 50:
            raise RuntimeError("could not fill 80 questions")
    return questions[:80]


def question_vocab(questions) -> list[str]:
    words = set()
    for template, slots, _ in questions:
        for form, _, _ in _instantiate(template, slots):
            words.add(form.lower())
    # words appearing in relation names and type labels
    words |= {"play", "directed", "release", "year", "birth", "born", "in",
              "inv", "cmp", "eq", "lt", "gt", "ord", "asc", "desc",
              "film", "tv", "show", "actor", "director", "country"}
    return sorted(words)


def build_word_vectors(vocab: list[str]) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(7)
    shared = {}
    for group in VECTOR_GROUPS:
        vec = rng.normal(0, 0.5, DIM)
        for w in group:
            shared[w] = vec
    vectors = {}
    for w in vocab:
        vectors[w] = shared[w] if w in shared else rng.normal(0, 0.5, DIM)
    return vectors


def render_triples(triples, aliases, types) -> str:
    lines = [f"{s}\t{p}\t{o}\t{t}" for s, p, o, t in triples]
    lines += [f"@alias\t{e}\t{a}" for e, a in aliases]
    lines += [f"@type\t{e}\t{t}" for e, t in types]
    return "\n".join(lines) + "\n"


def render_conllu(questions) -> str:
    blocks = []
    for n, (template, slots, _) in enumerate(questions, start=1):
        tokens = _instantiate(template, slots)
        text = " ".join(f for f, _, _ in tokens)
        lines = [f"# sent_id = q{n:03d}", f"# text = {text}"]
        for i, (form, head, deprel) in enumerate(tokens, start=1):
            lines.append(f"{i}\t{form}\t_\t_\t_\t_\t{head}\t{deprel}\t_\t_")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_dataset(questions) -> str:
    lines = []
    for n, (template, slots, gold) in enumerate(questions, start=1):
        text = " ".join(f for f, _, _ in _instantiate(template, slots))
        lines.append(f"q{n:03d}\t{text}\tq{n:03d}\t{'|'.join(gold)}")
    return "\n".join(lines) + "\n"


def render_word_vectors(vectors: dict[str, np.ndarray]) -> str:
    lines = [f"{len(vectors)} {DIM}"]
    for w in sorted(vectors):
        lines.append(w + " " + " ".join("%.17g" % x for x in vectors[w]))
    return "\n".join(lines) + "\n"


def split_train_dev(questions):
    """60/20 split; every fourth question goes to dev so all templates show
    up on both sides."""
    train, dev = [], []
    for i in range(len(questions)):
        (dev if i % 4 == 3 else train).append(i)
    return train, dev


def write_fixture(outdir: str) -> None:
    triples, aliases, types = build_kb()
    questions = build_questions(triples, types)
    vectors = build_word_vectors(question_vocab(questions))
    train_idx, dev_idx = split_train_dev(questions)
    os.makedirs(outdir, exist_ok=True)

    def write(name, content):
        with open(os.path.join(outdir, name), "w", encoding="utf-8") as f:
            f.write(content)

    write("triples.tsv", render_triples(triples, aliases, types))
    write("questions.conllu", render_conllu(questions))
    write("dataset.tsv", render_dataset(questions))
    dataset_lines = render_dataset(questions).splitlines()
    write("train.tsv", "\n".join(dataset_lines[i] for i in train_idx) + "\n")
    write("dev.tsv", "\n".join(dataset_lines[i] for i in dev_idx) + "\n")
    write("word_vectors.txt", render_word_vectors(vectors))


def main(argv=None):
    args = sys.argv[1:] if argv is None else argv
    outdir = args[0] if args else "data/toy"
    write_fixture(outdir)
    print(f"wrote toy fixture to {outdir}")


if __name__ == "__main__":
    main()
