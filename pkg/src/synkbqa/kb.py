"""In-memory triple store with typed object values, inverse-direction hops
and the virtual-predicate semantics (time comparison, ordinal selection)
needed to run query graphs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_TWO_HOP_LIMIT = 10_000

# a directed predicate: (predicate id, traversed against triple direction?)
Hop = tuple[str, bool]


class KbError(ValueError):
    pass


@dataclass(frozen=True)
class Value:
    kind: str            # entity | text | int | year | date
    payload: tuple

    @staticmethod
    def entity(eid: str) -> "Value":
        return Value("entity", (eid,))

    @staticmethod
    def text(s: str) -> "Value":
        return Value("text", (s,))

    @staticmethod
    def integer(n: int) -> "Value":
        return Value("int", (int(n),))

    @staticmethod
    def year(y: int) -> "Value":
        y = int(y)
        if not 1000 <= y <= 2999:
            raise KbError(f"year {y} out of range 1000..2999")
        return Value("year", (y,))

    @staticmethod
    def date(y: int, m: int, d: int) -> "Value":
        y, m, d = int(y), int(m), int(d)
        if not (1000 <= y <= 2999 and 1 <= m <= 12 and 1 <= d <= 31):
            raise KbError(f"invalid date {y}-{m}-{d}")
        return Value("date", (y, m, d))

    @property
    def entity_id(self) -> str:
        if self.kind != "entity":
            raise KbError(f"not an entity value: {self}")
        return self.payload[0]

    def is_time(self) -> bool:
        return self.kind in ("year", "date")

    def time_key(self) -> tuple:
        y, m, d = (self.payload + (0, 0))[:3]
        return (y, m, d)

    def sort_key(self) -> tuple:
        return (self.kind,) + tuple(str(p) for p in self.payload)

    def render(self) -> str:
        if self.kind == "date":
            y, m, d = self.payload
            return f"{y:04d}-{m:02d}-{d:02d}"
        return str(self.payload[0])


def compare_time(op: str, obj: Value, ref: Value) -> bool:
    """Virtual comparison predicate. `==` is exact value equality; order
    comparisons use (year, month, day) keys with missing parts as zero."""
    if op == "==":
        return obj == ref
    if not obj.is_time() or not ref.is_time():
        return False
    if op == "<":
        return obj.time_key() < ref.time_key()
    if op == ">":
        return obj.time_key() > ref.time_key()
    raise KbError(f"unknown comparison operator {op!r}")


@dataclass
class EntityInfo:
    aliases: list[str] = field(default_factory=list)
    types: set[str] = field(default_factory=set)


class TripleStore:
    """Immutable after load; all queries are pure."""

    def __init__(self):
        self.entities: dict[str, EntityInfo] = {}
        self.predicates: set[str] = set()
        self.triples: set[tuple[str, str, Value]] = set()
        self._spo: dict[str, list[tuple[str, Value]]] = {}
        self._ops: dict[str, list[tuple[str, str]]] = {}

    def _entity(self, eid: str) -> EntityInfo:
        if eid not in self.entities:
            self.entities[eid] = EntityInfo()
        return self.entities[eid]

    def add_triple(self, subject: str, predicate: str, obj: Value) -> None:
        self._entity(subject)
        self.predicates.add(predicate)
        if obj.kind == "entity":
            self._entity(obj.entity_id)
        self.triples.add((subject, predicate, obj))

    def add_alias(self, eid: str, surface: str) -> None:
        info = self._entity(eid)
        if surface not in info.aliases:
            info.aliases.append(surface)

    def add_type(self, eid: str, label: str) -> None:
        self._entity(eid).types.add(label)

    def freeze(self) -> None:
        """Build the deterministic indexes; call once after loading."""
        for info_id, info in self.entities.items():
            if not info.aliases:
                info.aliases.append(info_id)
        self._spo = {}
        self._ops = {}
        for s, p, o in sorted(self.triples, key=lambda t: (t[0], t[1], t[2].sort_key())):
            self._spo.setdefault(s, []).append((p, o))
            if o.kind == "entity":
                self._ops.setdefault(o.entity_id, []).append((p, s))

    def facts_of(self, eid: str) -> list[tuple[str, Value]]:
        return self._spo.get(eid, [])

    def facts_into(self, eid: str) -> list[tuple[str, str]]:
        return self._ops.get(eid, [])

    def type_labels(self) -> list[str]:
        labels: set[str] = set()
        for info in self.entities.values():
            labels |= info.types
        return sorted(labels)

    def check_entity(self, eid: str) -> None:
        if eid not in self.entities:
            raise KbError(f"unregistered entity {eid!r}")


def _parse_object(obj: str, objtype: str, lineno: int) -> Value:
    try:
        if objtype == "entity":
            return Value.entity(obj)
        if objtype == "text":
            return Value.text(obj)
        if objtype == "int":
            return Value.integer(int(obj))
        if objtype == "year":
            return Value.year(int(obj))
        if objtype == "date":
            parts = obj.split("-")
            if len(parts) != 3:
                raise KbError("malformed date")
            return Value.date(int(parts[0]), int(parts[1]), int(parts[2]))
    except (ValueError, KbError) as exc:
        raise KbError(f"line {lineno}: bad {objtype} object {obj!r}: {exc}") from None
    raise KbError(f"line {lineno}: unknown object type {objtype!r}")


def load_triples(path) -> TripleStore:
    """Load a TSV: `subject <TAB> predicate <TAB> object <TAB> objtype`
    fact lines plus `@alias <TAB> entity <TAB> surface` and
    `@type <TAB> entity <TAB> label` metadata lines."""
    store = TripleStore()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if cols[0] == "@alias":
                if len(cols) != 3:
                    raise KbError(f"line {lineno}: @alias needs entity and surface")
                store.add_alias(cols[1], cols[2])
            elif cols[0] == "@type":
                if len(cols) != 3:
                    raise KbError(f"line {lineno}: @type needs entity and label")
                store.add_type(cols[1], cols[2])
            else:
                if len(cols) != 4:
                    raise KbError(f"line {lineno}: expected 4 tab-separated fields, got {len(cols)}")
                store.add_triple(cols[0], cols[1], _parse_object(cols[2], cols[3], lineno))
    store.freeze()
    return store


def one_hop(store: TripleStore, eid: str) -> list[tuple[Hop, Value]]:
    """Outgoing facts plus inverse hops over entity-valued in-links,
    in deterministic (predicate, direction, object) order."""
    store.check_entity(eid)
    out = [((p, False), o) for p, o in store.facts_of(eid)]
    out += [((p, True), Value.entity(s)) for p, s in store.facts_into(eid)]
    out.sort(key=lambda it: (it[0][0], it[0][1], it[1].sort_key()))
    return out


def two_hop(store: TripleStore, eid: str,
            limit: int = DEFAULT_TWO_HOP_LIMIT) -> list[tuple[Hop, Value, Hop, Value]]:
    """All length-2 chains through entity-valued midpoints, deterministically
    ordered and truncated at `limit`."""
    store.check_entity(eid)
    chains = []
    for hop1, mid in one_hop(store, eid):
        if mid.kind != "entity":
            continue
        for hop2, val in one_hop(store, mid.entity_id):
            chains.append((hop1, mid, hop2, val))
    chains.sort(key=lambda c: (c[0][0], c[0][1], c[1].sort_key(), c[2][0], c[2][1], c[3].sort_key()))
    return chains[:limit]


def _hop_values(store: TripleStore, eid: str, hop: Hop) -> list[Value]:
    pred, inverse = hop
    if inverse:
        return [Value.entity(s) for p, s in store.facts_into(eid) if p == pred]
    return [o for p, o in store.facts_of(eid) if p == pred]


def main_path_bindings(store: TripleStore, entity: str,
                       hops: tuple[Hop, ...]) -> list[tuple[Value, ...]]:
    """All node-value tuples along the main path, starting at the entity."""
    store.check_entity(entity)
    for pred, _ in hops:
        if pred not in store.predicates:
            raise KbError(f"unregistered predicate {pred!r}")
    bindings: list[tuple[Value, ...]] = [(Value.entity(entity),)]
    for hop in hops:
        nxt = []
        for b in bindings:
            if b[-1].kind != "entity":
                continue
            for v in _hop_values(store, b[-1].entity_id, hop):
                nxt.append(b + (v,))
        bindings = nxt
    return bindings


def execute(store: TripleStore, graph) -> set[Value]:
    """Run a query graph: traverse the main path from the grounded entity,
    then filter by every constraint. Ordinal constraints select the element
    at `rank` after sorting the surviving answer entities by their sort-key
    predicate (ties broken by entity id ascending)."""
    bindings = main_path_bindings(store, graph.entity, graph.hops)
    answer_node = len(graph.hops)
    ordinals = []
    for c in graph.constraints:
        ckind = type(c).__name__
        if ckind == "EntityConstraint":
            store.check_entity(c.entity)
            if c.hop[0] not in store.predicates:
                raise KbError(f"unregistered predicate {c.hop[0]!r}")
            bindings = [b for b in bindings
                        if b[c.node].kind == "entity"
                        and Value.entity(c.entity) in _hop_values(store, b[c.node].entity_id, c.hop)]
        elif ckind == "TypeConstraint":
            bindings = [b for b in bindings
                        if b[answer_node].kind == "entity"
                        and c.label in store.entities[b[answer_node].entity_id].types]
        elif ckind == "TimeConstraint":
            if c.predicate not in store.predicates:
                raise KbError(f"unregistered predicate {c.predicate!r}")
            bindings = [b for b in bindings
                        if b[c.node].kind == "entity"
                        and any(compare_time(c.op, o, c.value)
                                for p, o in store.facts_of(b[c.node].entity_id)
                                if p == c.predicate)]
        elif ckind == "OrdinalConstraint":
            ordinals.append(c)
        else:
            raise KbError(f"unknown constraint kind {ckind}")
    answers = {b[-1] for b in bindings}
    for c in ordinals:
        if c.node != answer_node:
            raise KbError("ordinal constraints are supported on the answer node only")
        if c.key_predicate not in store.predicates:
            raise KbError(f"unregistered predicate {c.key_predicate!r}")
        keyed = []
        for v in answers:
            if v.kind != "entity":
                continue
            keys = [o.time_key() if o.is_time() else (o.payload[0], 0, 0)
                    for p, o in store.facts_of(v.entity_id)
                    if p == c.key_predicate and (o.is_time() or o.kind == "int")]
            if keys:
                extreme = min(keys) if c.direction == "ascending" else max(keys)
                keyed.append((extreme, v))
        keyed.sort(key=lambda kv: kv[1].entity_id)
        keyed.sort(key=lambda kv: kv[0], reverse=(c.direction == "descending"))
        answers = {keyed[c.rank - 1][1]} if c.rank <= len(keyed) else set()
    return answers
