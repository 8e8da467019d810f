"""Compile a bound model + task into an ordered, guideline-tagged
transformation plan, with a human-readable explanation and a lossless JSON
form. Plans depend only on schema + task + options, never on the data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from . import eer
from . import expr as ex

GUIDELINES = ("G1", "G2", "G3", "G4", "G5")


@dataclass(frozen=True)
class PlanOptions:
    agg_set: tuple[str, ...] = eer.AGG_SET_ALL
    top_k: int = 20
    impute: str = "mean_mode"  # mean_mode | none | constant:<value>
    seed: Optional[int] = None
    holdout: float = 0.0

    @classmethod
    def from_task(cls, task: eer.TaskDecl, **overrides) -> "PlanOptions":
        base = dict(agg_set=tuple(task.agg_set), top_k=task.top_k, impute=task.impute)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def to_dict(self) -> dict:
        return {"agg": list(self.agg_set), "top_k": self.top_k, "impute": self.impute,
                "seed": self.seed, "holdout": self.holdout}


@dataclass(frozen=True)
class PlanStep:
    kind: str
    guidelines: tuple[str, ...]
    params: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "guidelines": list(self.guidelines), **self.params}


@dataclass(frozen=True)
class TransformationPlan:
    task: str
    binding: eer.TargetBinding
    steps: tuple[PlanStep, ...]
    outputs: tuple[str, ...]
    options: PlanOptions
    notes: tuple[str, ...] = ()


class PlanError(ValueError):
    pass


def compile_plan(bound_or_schema, task: eer.TaskDecl, options: Optional[PlanOptions] = None
                 ) -> TransformationPlan:
    """Compile the ordered step list.

    Step order: non-aggregate derivations on every tree entity; bottom-up
    child summarization (deepest edges first, one-partner hops joined in
    place); aggregate-bearing derivations on the target entity; one-to-one
    joins at the target entity; subtype split; per-dataset imputation;
    emission.
    """
    schema: eer.EerSchema = getattr(bound_or_schema, "schema", bound_or_schema)
    options = options or PlanOptions.from_task(task)
    binding = eer.resolve_target(schema, task)
    root = binding.target_entity
    target_attr = schema.entity(root).attr(binding.target_attr)

    if target_attr.derivation is not None and ex.referenced_aggregates(target_attr.derivation):
        if target_attr.kind != "numeric":
            raise PlanError(
                f"target {root}.{target_attr.name} aggregates child data but is {target_attr.kind}, "
                "not numeric")

    steps: list[PlanStep] = []
    notes: list[str] = list(binding.warnings)

    # (a) non-aggregate derivations, breadth-first entity order
    for entity in binding.predictor_entities:
        for a in schema.entity(entity).attributes:
            if a.derivation is not None and not ex.referenced_aggregates(a.derivation):
                steps.append(PlanStep("derive_attr", ("G2",),
                                      {"entity": entity, "attribute": a.name,
                                       "expression": ex.pretty_print(a.derivation)}))

    # (b) bottom-up along the spanning tree; aggregate-bearing derivations on a
    # child run once its own subtree is summarized, just before it is consumed
    depth = {root: 0}
    for e in binding.spanning_tree:
        depth[e.child] = depth[e.parent] + 1
    deep_edges = sorted(
        (e for e in binding.spanning_tree),
        key=lambda e: (-depth[e.child],
                       [x.child for x in binding.spanning_tree].index(e.child)),
    )
    root_joins: list[eer.TreeEdge] = []
    for edge in deep_edges:
        rel = schema.relationship(edge.relationship)
        child_per_parent = rel.end_of(edge.child).max
        for a in schema.entity(edge.child).attributes:
            if a.derivation is not None and ex.referenced_aggregates(a.derivation):
                steps.append(PlanStep("derive_attr", ("G2",),
                                      {"entity": edge.child, "attribute": a.name,
                                       "expression": ex.pretty_print(a.derivation)}))
        if child_per_parent == "N":
            steps.append(PlanStep("summarize_child", ("G4",), {
                "parent": edge.parent, "child": edge.child,
                "relationship": edge.relationship,
                "aggregates": [a for a in options.agg_set if a != "count"],
                "top_k": options.top_k,
            }))
        elif edge.parent == root:
            root_joins.append(edge)
        else:
            steps.append(PlanStep("join_one_to_one", (), {
                "parent": edge.parent, "child": edge.child,
                "relationship": edge.relationship,
            }))

    # (c) aggregate-bearing derivations on the target entity
    for a in schema.entity(root).attributes:
        if a.derivation is not None and ex.referenced_aggregates(a.derivation):
            steps.append(PlanStep("derive_attr", ("G2",),
                                  {"entity": root, "attribute": a.name,
                                   "expression": ex.pretty_print(a.derivation)}))

    # (d) one-to-one joins at the target entity
    for edge in root_joins:
        steps.append(PlanStep("join_one_to_one", (), {
            "parent": edge.parent, "child": edge.child,
            "relationship": edge.relationship,
        }))

    # (e) subtype split
    split_gen = _choose_split(schema, task, root, notes)
    if split_gen is not None:
        steps.append(PlanStep("subtype_split", ("G5",), {"generalization": split_gen.name}))
        outputs = tuple(f"{task.name}_{st.name}" for st in split_gen.subtypes)
    else:
        outputs = (task.name,)

    # (f) imputation per output dataset, (g) emission
    for name in outputs:
        if options.impute != "none":
            steps.append(PlanStep("impute_columns", ("G3",),
                                  {"dataset": name, "strategy": options.impute}))
    for name in outputs:
        steps.append(PlanStep("emit_dataset", (), {"dataset": name}))

    return TransformationPlan(task=task.name, binding=binding, steps=tuple(steps),
                              outputs=outputs, options=options, notes=tuple(notes))


def _choose_split(schema: eer.EerSchema, task: eer.TaskDecl, root: str,
                  notes: list[str]) -> Optional[eer.Generalization]:
    if task.split_by is not None:
        gen = schema.generalization(task.split_by)
        if gen is None or gen.supertype != root:
            raise PlanError(
                f"split_by {task.split_by!r} does not name a generalization of the "
                f"target-bearing entity {root}")
        return gen
    gens = schema.generalizations_of(root)
    if len(gens) == 1:
        notes.append(
            f"target-bearing entity {root} has exactly one generalization "
            f"({gens[0].name}); splitting by it")
        return gens[0]
    if len(gens) > 1:
        notes.append(
            f"target-bearing entity {root} has {len(gens)} generalizations and no "
            "split_by was given; emitting a single dataset")
    return None


# ---------------------------------------------------------------------------
# Explanation


def explain_plan(plan: TransformationPlan) -> str:
    """One numbered paragraph per step: the guideline realized, the entities
    involved and the columns produced."""
    lines = [
        f"Plan for task {plan.task}: predict "
        f"{plan.binding.target_entity}.{plan.binding.target_attr}.",
        "Guideline 1 (feature labeling) applies globally: every output column "
        "is labeled with its entities of origin.",
    ]
    for note in plan.notes:
        lines.append(f"Note: {note}")
    for i, step in enumerate(plan.steps, start=1):
        lines.append(f"{i}. {_describe(step)}")
    return "\n".join(lines) + "\n"


def _describe(step: PlanStep) -> str:
    p = step.params
    if step.kind == "derive_attr":
        return (f"Guideline 2 (derive features): compute {p['entity']}.{p['attribute']} "
                f"= {p['expression']}, producing column "
                f"{p['entity']}_{p['attribute']}.")
    if step.kind == "summarize_child":
        aggs = ", ".join(p["aggregates"])
        return (f"Guideline 4 (entity summarization): collapse {p['child']} rows onto "
                f"{p['parent']} via relationship {p['relationship']}, producing "
                f"{p['child']}_count, numeric summaries ({aggs}) per numeric column, "
                f"per-category counts for the top {p['top_k']} categories of each nominal "
                f"column, true-counts for booleans, newline-concatenation for text and "
                f"min/max for dates.")
    if step.kind == "join_one_to_one":
        return (f"Join the single {p['child']} partner of each {p['parent']} row via "
                f"relationship {p['relationship']} (one-partner hop; no duplication), "
                f"producing {p['child']}-prefixed columns.")
    if step.kind == "subtype_split":
        return (f"Guideline 5 (multiple training datasets): split by generalization "
                f"{p['generalization']}, one dataset per subtype with only that "
                f"subtype's members and subtype-specific columns.")
    if step.kind == "impute_columns":
        return (f"Guideline 3 (impute features): fill nulls classified applicable-but-"
                f"unknown using strategy {p['strategy']} with statistics computed within "
                f"this output dataset; not-applicable cells are never altered.")
    if step.kind == "emit_dataset":
        return f"Emit dataset {p['dataset']} (rows sorted by key; null-target rows dropped)."
    return f"{step.kind}: {p}"


# ---------------------------------------------------------------------------
# JSON round trip

_PLAN_FIELDS = {"task", "target", "binding", "steps", "outputs", "options", "notes"}
_STEP_BASE_FIELDS = {"kind", "guidelines"}


def plan_to_json(plan: TransformationPlan) -> str:
    doc = {
        "task": plan.task,
        "target": f"{plan.binding.target_entity}.{plan.binding.target_attr}",
        "binding": {
            "predictor_entities": list(plan.binding.predictor_entities),
            "spanning_tree": [
                {"parent": e.parent, "child": e.child, "relationship": e.relationship}
                for e in plan.binding.spanning_tree
            ],
            "warnings": list(plan.binding.warnings),
        },
        "steps": [s.to_dict() for s in plan.steps],
        "outputs": list(plan.outputs),
        "options": plan.options.to_dict(),
        "notes": list(plan.notes),
    }
    return json.dumps(doc, indent=2)


def plan_from_json(text: str) -> TransformationPlan:
    doc = json.loads(text)
    unknown = set(doc) - _PLAN_FIELDS
    if unknown:
        raise PlanError(f"unknown plan field(s): {sorted(unknown)}")
    for want in ("task", "target", "binding", "steps", "outputs", "options"):
        if want not in doc:
            raise PlanError(f"plan is missing field {want!r}")
    entity, _, attr = doc["target"].partition(".")
    binding = eer.TargetBinding(
        target_entity=entity,
        target_attr=attr,
        predictor_entities=tuple(doc["binding"]["predictor_entities"]),
        spanning_tree=tuple(
            eer.TreeEdge(e["parent"], e["child"], e["relationship"])
            for e in doc["binding"]["spanning_tree"]
        ),
        warnings=tuple(doc["binding"].get("warnings", ())),
    )
    steps = []
    for s in doc["steps"]:
        params = {k: v for k, v in s.items() if k not in _STEP_BASE_FIELDS}
        steps.append(PlanStep(s["kind"], tuple(s["guidelines"]), params))
    opt = doc["options"]
    unknown = set(opt) - {"agg", "top_k", "impute", "seed", "holdout"}
    if unknown:
        raise PlanError(f"unknown option field(s): {sorted(unknown)}")
    options = PlanOptions(agg_set=tuple(opt["agg"]), top_k=opt["top_k"], impute=opt["impute"],
                          seed=opt.get("seed"), holdout=opt.get("holdout", 0.0))
    return TransformationPlan(task=doc["task"], binding=binding, steps=tuple(steps),
                              outputs=tuple(doc["outputs"]), options=options,
                              notes=tuple(doc.get("notes", ())))
