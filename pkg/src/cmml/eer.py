"""In-memory EER conceptual model: entity types, relationships with
cardinalities, generalizations, task declarations; structural validation,
many-to-many rewriting and target resolution.

Cardinality convention: each relationship end carries (entity, min, max)
where (min, max) bounds how many instances of *that* entity relate to one
instance of the opposite end. `CUSTOMER (1,1) -- (1,N) ORDER` reads: every
order has exactly one customer; every customer has one or more orders.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import expr as ex
from .diagnostics import Report

ATTRIBUTE_KINDS = ("identifier", "numeric", "nominal", "boolean", "date", "text")
AGG_SET_ALL = ("count", "mean", "sum", "min", "max")
NUMERIC_AGGS_DEFAULT = ("mean", "sum", "min", "max")


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    is_key: bool = False
    optional: bool = False
    applicable_when: Optional[ex.Expr] = None
    derivation: Optional[ex.Expr] = None

    @property
    def is_derived(self) -> bool:
        return self.derivation is not None


@dataclass(frozen=True)
class EntityType:
    name: str
    attributes: tuple[Attribute, ...]

    @property
    def key_attrs(self) -> tuple[Attribute, ...]:
        return tuple(a for a in self.attributes if a.is_key)

    @property
    def key_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.key_attrs)

    def attr(self, name: str) -> Optional[Attribute]:
        for a in self.attributes:
            if a.name == name:
                return a
        return None


@dataclass(frozen=True)
class RelEnd:
    entity: str
    min: int  # 0 or 1
    max: str  # "1" or "N"


@dataclass(frozen=True)
class Relationship:
    name: str
    left: RelEnd
    right: RelEnd
    fk_columns: tuple[str, ...]  # 1 column (on the child) or 2 (N:M, on the associative entity)
    rel_attributes: tuple[Attribute, ...] = ()

    @property
    def is_many_to_many(self) -> bool:
        return self.left.max == "N" and self.right.max == "N"

    @property
    def is_one_to_one(self) -> bool:
        return self.left.max == "1" and self.right.max == "1"

    def many_end(self) -> RelEnd:
        """The end with max N (the child side). Undefined for 1:1 (returns right)."""
        return self.left if self.left.max == "N" else self.right

    def one_end(self) -> RelEnd:
        return self.right if self.left.max == "N" else self.left

    def child_entity(self) -> str:
        """Entity carrying the foreign key: the many side, or the right end for 1:1."""
        return self.many_end().entity if not self.is_one_to_one else self.right.entity

    def parent_entity(self) -> str:
        return self.one_end().entity if not self.is_one_to_one else self.left.entity

    def other(self, entity: str) -> str:
        return self.right.entity if entity == self.left.entity else self.left.entity

    def end_of(self, entity: str) -> RelEnd:
        return self.left if self.left.entity == entity else self.right


@dataclass(frozen=True)
class Subtype:
    name: str
    membership: Optional[ex.Expr]  # predicate over supertype attrs; None => from table
    attributes: tuple[Attribute, ...] = ()

    @property
    def from_table(self) -> bool:
        return self.membership is None


@dataclass(frozen=True)
class Generalization:
    name: str
    supertype: str
    mode: str  # "disjoint" | "overlap"
    subtypes: tuple[Subtype, ...]


@dataclass(frozen=True)
class TaskDecl:
    name: str
    target_entity: str
    target_attr: str
    split_by: Optional[str] = None
    agg_set: tuple[str, ...] = AGG_SET_ALL
    top_k: int = 20
    impute: str = "mean_mode"  # "mean_mode" | "none" | "constant:<value>"


@dataclass(frozen=True)
class TreeEdge:
    parent: str
    child: str
    relationship: str


@dataclass(frozen=True)
class TargetBinding:
    target_entity: str
    target_attr: str
    predictor_entities: tuple[str, ...]
    spanning_tree: tuple[TreeEdge, ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class EerSchema:
    entities: tuple[EntityType, ...] = ()
    relationships: tuple[Relationship, ...] = ()
    generalizations: tuple[Generalization, ...] = ()
    tasks: tuple[TaskDecl, ...] = ()

    def entity(self, name: str) -> Optional[EntityType]:
        for e in self.entities:
            if e.name == name:
                return e
        return None

    def relationship(self, name: str) -> Optional[Relationship]:
        for r in self.relationships:
            if r.name == name:
                return r
        return None

    def generalization(self, name: str) -> Optional[Generalization]:
        for g in self.generalizations:
            if g.name == name:
                return g
        return None

    def task(self, name: str) -> Optional[TaskDecl]:
        for t in self.tasks:
            if t.name == name:
                return t
        return None

    def generalizations_of(self, entity: str) -> tuple[Generalization, ...]:
        return tuple(g for g in self.generalizations if g.supertype == entity)

    def effective_columns(self, entity: str) -> tuple[Attribute, ...]:
        """Stored columns of the entity's table: declared non-derived attributes,
        implicit foreign-key columns, and predicate-subtype attributes."""
        ent = self.entity(entity)
        cols: list[Attribute] = [a for a in ent.attributes if not a.is_derived]
        names = {a.name for a in cols}
        for rel in self.relationships:
            if rel.is_many_to_many:
                continue
            if rel.child_entity() == entity:
                fk = rel.fk_columns[0]
                if fk not in names:
                    cols.append(Attribute(fk, "identifier"))
                    names.add(fk)
        for gen in self.generalizations_of(entity):
            for st in gen.subtypes:
                if not st.from_table:
                    for a in st.attributes:
                        if a.name not in names:
                            cols.append(a)
                            names.add(a.name)
        return tuple(cols)

    def subtype_owner(self, entity: str, column: str):
        """(generalization, subtype) owning a predicate-subtype column stored
        on the supertype's table, or (None, None)."""
        for gen in self.generalizations_of(entity):
            for st in gen.subtypes:
                if not st.from_table and any(a.name == column for a in st.attributes):
                    return gen, st
        return None, None

    def type_env(self, entity: str) -> ex.TypeEnv:
        """Typing environment for expressions owned by `entity`: its stored and
        derived attributes, plus related-entity attributes per relationship
        where `entity` sits on the one side (aggregation source)."""
        ent = self.entity(entity)
        attrs = {a.name: a.kind for a in ent.attributes}
        for a in self.effective_columns(entity):
            attrs.setdefault(a.name, a.kind)
        rels: dict[str, dict[str, str]] = {}
        for rel in self.relationships:
            if rel.is_many_to_many:
                continue
            if rel.parent_entity() == entity:
                child = self.entity(rel.child_entity())
                if child is not None:
                    rels[rel.name] = {a.name: a.kind for a in child.attributes}
        return ex.TypeEnv(attrs=attrs, rels=rels)


# ---------------------------------------------------------------------------
# Structural validation


def validate_schema(schema: EerSchema) -> Report:
    """Structural diagnostics; the schema is valid iff the report has no errors."""
    rep = Report()
    _check_duplicates(schema, rep)
    for ent in schema.entities:
        _validate_entity(schema, ent, rep)
    for rel in schema.relationships:
        _validate_relationship(schema, rel, rep)
    for gen in schema.generalizations:
        _validate_generalization(schema, gen, rep)
    for task in schema.tasks:
        _validate_task(schema, task, rep)
    return rep


def _check_duplicates(schema: EerSchema, rep: Report) -> None:
    for label, names in (
        ("entity", [e.name for e in schema.entities]),
        ("relationship", [r.name for r in schema.relationships]),
        ("generalization", [g.name for g in schema.generalizations]),
        ("task", [t.name for t in schema.tasks]),
    ):
        seen: set[str] = set()
        for n in names:
            if n in seen:
                rep.error("duplicate-name", f"duplicate {label} {n!r}")
            seen.add(n)


def _validate_entity(schema: EerSchema, ent: EntityType, rep: Report) -> None:
    seen: set[str] = set()
    for a in ent.attributes:
        if a.name in seen:
            rep.error("duplicate-attr", f"duplicate attribute {a.name!r} in entity {ent.name}", ent.name)
        seen.add(a.name)
        if a.kind not in ATTRIBUTE_KINDS:
            rep.error("bad-kind", f"attribute {ent.name}.{a.name} has unknown kind {a.kind!r}", ent.name)
        if a.is_key and (a.is_derived or a.optional):
            rep.error("key-derived-or-optional",
                      f"key attribute {ent.name}.{a.name} must not be derived or optional", ent.name)
    if not ent.key_attrs:
        rep.error("missing-key", f"entity {ent.name} lacks a key", ent.name)
    env = schema.type_env(ent.name)
    for a in ent.attributes:
        if a.applicable_when is not None:
            _check_expr(a.applicable_when, env, "boolean",
                        f"applicable_when of {ent.name}.{a.name}", rep, ent.name)
        if a.derivation is not None:
            _check_expr(a.derivation, env, a.kind, f"derivation of {ent.name}.{a.name}", rep, ent.name)


def _check_expr(e: ex.Expr, env: ex.TypeEnv, want: str, what: str, rep: Report, loc: str) -> None:
    try:
        got = ex.type_of(e, env)
    except ex.ExprTypeError as err:
        rep.error("expr-type", f"{what}: {err}", loc)
        return
    if got != want and not (want == "nominal" and got == "string"):
        rep.error("expr-type", f"{what}: expected {want}, got {got}", loc)


def _validate_relationship(schema: EerSchema, rel: Relationship, rep: Report) -> None:
    for end in (rel.left, rel.right):
        if schema.entity(end.entity) is None:
            rep.error("unknown-entity", f"relationship {rel.name} references undeclared entity {end.entity!r}",
                      rel.name)
            return
        if end.min not in (0, 1) or end.max not in ("1", "N"):
            rep.error("bad-cardinality", f"relationship {rel.name}: bad cardinality on {end.entity}", rel.name)
    if rel.rel_attributes and not rel.is_many_to_many:
        rep.error("rel-attrs-not-nm",
                  f"relationship {rel.name} has attributes but is not many-to-many", rel.name)
    want_fks = 2 if rel.is_many_to_many else 1
    if len(rel.fk_columns) != want_fks:
        rep.error("bad-fk-count",
                  f"relationship {rel.name} needs {want_fks} foreign-key column(s), got {len(rel.fk_columns)}",
                  rel.name)


def _validate_generalization(schema: EerSchema, gen: Generalization, rep: Report) -> None:
    sup = schema.entity(gen.supertype)
    if sup is None:
        rep.error("unknown-entity", f"generalization {gen.name} references undeclared entity {gen.supertype!r}",
                  gen.name)
        return
    if len(gen.subtypes) < 2:
        rep.error("too-few-subtypes", f"generalization {gen.name} needs at least 2 subtypes", gen.name)
    seen: set[str] = set()
    env = schema.type_env(gen.supertype)
    for st in gen.subtypes:
        if st.name in seen:
            rep.error("duplicate-name", f"duplicate subtype {st.name!r} in generalization {gen.name}", gen.name)
        seen.add(st.name)
        if st.membership is not None:
            _check_expr(st.membership, env, "boolean", f"membership of subtype {st.name}", rep, gen.name)


def _validate_task(schema: EerSchema, task: TaskDecl, rep: Report) -> None:
    ent = schema.entity(task.target_entity)
    if ent is None:
        rep.error("unknown-entity", f"task {task.name} targets undeclared entity {task.target_entity!r}",
                  task.name)
        return
    if ent.attr(task.target_attr) is None:
        rep.error("unknown-attr",
                  f"task {task.name}: entity {task.target_entity} has no attribute {task.target_attr!r}",
                  task.name)
    if task.split_by is not None and schema.generalization(task.split_by) is None:
        rep.error("unknown-generalization",
                  f"task {task.name}: split_by names undeclared generalization {task.split_by!r}", task.name)
    if task.top_k < 1:
        rep.error("bad-top-k", f"task {task.name}: top_k must be positive", task.name)
    bad = [a for a in task.agg_set if a not in AGG_SET_ALL]
    if bad:
        rep.error("bad-agg", f"task {task.name}: unknown aggregate(s) {bad}", task.name)


# ---------------------------------------------------------------------------
# Many-to-many rewrite


def rewrite_many_to_many(schema: EerSchema) -> EerSchema:
    """Replace every N:M relationship with an associative entity `<LEFT>_<RIGHT>`
    (both keys plus the relationship attributes) and two 1:N relationships.
    Idempotent; raises ValueError on a name collision with an existing entity.
    """
    entities = list(schema.entities)
    rels: list[Relationship] = []
    for rel in schema.relationships:
        if not rel.is_many_to_many:
            rels.append(rel)
            continue
        assoc_name = f"{rel.left.entity}_{rel.right.entity}"
        if schema.entity(assoc_name) is not None:
            raise ValueError(
                f"cannot rewrite {rel.name}: associative entity name {assoc_name!r} collides with an existing entity"
            )
        fk_left, fk_right = rel.fk_columns
        assoc = EntityType(
            assoc_name,
            (
                Attribute(fk_left, "identifier", is_key=True),
                Attribute(fk_right, "identifier", is_key=True),
            )
            + rel.rel_attributes,
        )
        entities.append(assoc)
        # associative side participates mandatorily (min 1, exactly one parent)
        rels.append(Relationship(
            name=f"{rel.name}_{rel.left.entity}",
            left=RelEnd(rel.left.entity, 1, "1"),
            right=RelEnd(assoc_name, rel.right.min, "N"),
            fk_columns=(fk_left,),
        ))
        rels.append(Relationship(
            name=f"{rel.name}_{rel.right.entity}",
            left=RelEnd(rel.right.entity, 1, "1"),
            right=RelEnd(assoc_name, rel.left.min, "N"),
            fk_columns=(fk_right,),
        ))
    return replace(schema, entities=tuple(entities), relationships=tuple(rels))


# ---------------------------------------------------------------------------
# Target resolution


def resolve_target(schema: EerSchema, task: TaskDecl) -> TargetBinding:
    """Breadth-first spanning tree over relationships reachable from the
    target-bearing entity; declaration order breaks ties, first visit wins.
    """
    root = schema.entity(task.target_entity)
    if root is None:
        raise ValueError(f"unknown target entity {task.target_entity!r}")
    if root.attr(task.target_attr) is None:
        raise ValueError(f"entity {task.target_entity} has no attribute {task.target_attr!r}")

    visited = [root.name]
    edges: list[TreeEdge] = []
    warnings: list[str] = []
    queue = [root.name]
    used_rels: set[str] = set()
    while queue:
        current = queue.pop(0)
        for rel in schema.relationships:
            if current not in (rel.left.entity, rel.right.entity):
                continue
            if rel.name in used_rels:
                continue
            other = rel.other(current)
            if other in visited:
                warnings.append(
                    f"relationship {rel.name} closes a cycle at {other}; skipped in the spanning tree"
                )
                used_rels.add(rel.name)
                continue
            used_rels.add(rel.name)
            visited.append(other)
            edges.append(TreeEdge(parent=current, child=other, relationship=rel.name))
            queue.append(other)
    unreached = [e.name for e in schema.entities if e.name not in visited]
    for name in unreached:
        warnings.append(f"entity {name} is unreachable from {root.name} and is excluded from the plan")
    return TargetBinding(
        target_entity=root.name,
        target_attr=task.target_attr,
        predictor_entities=tuple(visited),
        spanning_tree=tuple(edges),
        warnings=tuple(warnings),
    )
