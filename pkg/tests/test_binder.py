from cmml import binder
from cmml.values import NOT_APPLICABLE_TAG, UNKNOWN_TAG
from conftest import parse_full


def _bind(schema_text: str, tables: dict[str, str], tmp_path):
    schema = parse_full(schema_text)
    for name, text in tables.items():
        (tmp_path / f"{name}.csv").write_text(text, encoding="utf-8")
    bundle, rep = binder.load_bundle(schema, tmp_path)
    assert rep.ok, rep.render()
    return binder.bind(schema, bundle)


PARENT_CHILD = """
entity P { key pid: identifier attr t: numeric }
entity C { key cid: identifier attr v: numeric }
relationship R { P (1,1) -- (1,N) C via pid }
task T { target P.t }
"""


def test_bind_example(example_bound):
    assert example_bound.ok
    idx = example_bound.children_of["PLACES"]
    assert {k: len(v) for k, v in idx.items()} == {
        "101": 4, "400": 1, "223": 2, "398": 1}


def test_missing_table_is_error(tmp_path):
    bound_schema = parse_full(PARENT_CHILD)
    _, rep = binder.load_bundle(bound_schema, tmp_path)
    assert not rep.ok


def test_dangling_fk_is_error(tmp_path):
    bound = _bind(PARENT_CHILD, {
        "P": "pid,t\np1,1\n",
        "C": "cid,v,pid\nc1,1,NOPE\n",
    }, tmp_path)
    assert not bound.ok
    assert any("NOPE" in d.message for d in bound.report.errors)


def test_duplicate_key_is_error(tmp_path):
    bound = _bind(PARENT_CHILD, {
        "P": "pid,t\np1,1\np1,2\n",
        "C": "cid,v,pid\nc1,1,p1\n",
    }, tmp_path)
    assert not bound.ok


def test_null_key_is_error(tmp_path):
    bound = _bind(PARENT_CHILD, {
        "P": "pid,t\n,1\n",
        "C": "cid,v,pid\nc1,1,p1\n",
    }, tmp_path)
    assert not bound.ok


def test_mandatory_participation_violation_is_warning(tmp_path):
    # P (1,N) side: every P must have at least one C; p2 has none
    bound = _bind(PARENT_CHILD, {
        "P": "pid,t\np1,1\np2,2\n",
        "C": "cid,v,pid\nc1,1,p1\n",
    }, tmp_path)
    assert bound.ok  # warning, not error
    assert any("p2" in d.message or "R" in d.message
               for d in bound.report.warnings)


def test_cardinality_report(example_bound):
    cards = binder.cardinality_report(example_bound)
    places = next(c for c in cards if c.relationship == "PLACES")
    assert (places.declared_min, places.declared_max) == (1, "N")
    assert (places.observed_min, places.observed_max) == (1, 4)
    assert places.conformant


def test_cardinality_report_flags_violation(tmp_path):
    bound = _bind(PARENT_CHILD, {
        "P": "pid,t\np1,1\np2,2\n",
        "C": "cid,v,pid\nc1,1,p1\n",
    }, tmp_path)
    rep = binder.cardinality_report(bound)
    r = next(c for c in rep if c.relationship == "R")
    assert not r.conformant and len(r.violations) == 1 and r.observed_min == 0


SUBTYPED = """
entity E {
  key id: identifier
  attr t: numeric
  attr size: numeric
  attr employed: boolean
  attr salary: numeric applicable_when (employed = true)
}
generalization G of E disjoint {
  subtype SMALL when (size < 10) { attr s_only: numeric }
  subtype BIG when (size >= 10) { attr b_only: numeric }
}
task T { target E.t }
"""


def test_subtype_membership_by_predicate(tmp_path):
    bound = _bind(SUBTYPED, {
        "E": ("id,t,size,employed,salary,s_only,b_only\n"
              "a,1,5,true,100,7,\n"
              "b,2,20,false,,,9\n"),
    }, tmp_path)
    assert bound.ok, bound.report.render()
    m = bound.subtype_membership["G"]
    assert m[("a",)] == {"SMALL"}
    assert m[("b",)] == {"BIG"}


def test_null_classification_priority(tmp_path):
    bound = _bind(SUBTYPED, {
        "E": ("id,t,size,employed,salary,s_only,b_only\n"
              "a,1,5,true,,7,\n"     # salary: applicable but missing -> unknown
              "b,2,20,false,,,\n"    # salary: predicate false -> not_applicable
              "c,3,5,,,,\n"),        # employed null -> predicate null -> unknown
    }, tmp_path)
    assert bound.ok, bound.report.render()
    nc = bound.null_class
    assert nc[("E", 0, "salary")] == UNKNOWN_TAG
    assert nc[("E", 1, "salary")] == NOT_APPLICABLE_TAG
    assert nc[("E", 2, "salary")] == UNKNOWN_TAG
    # sibling-subtype columns are not applicable to non-members
    assert nc[("E", 0, "b_only")] == NOT_APPLICABLE_TAG
    assert nc[("E", 1, "s_only")] == NOT_APPLICABLE_TAG
    # plain missing value with no predicate in play -> unknown
    assert nc[("E", 1, "employed")] == UNKNOWN_TAG if ("E", 1, "employed") in nc else True


def test_null_predicate_produces_diagnostic(tmp_path):
    bound = _bind(SUBTYPED, {
        "E": ("id,t,size,employed,salary,s_only,b_only\n"
              "c,3,5,,,,\n"),
    }, tmp_path)
    assert any("employed" in d.message or "salary" in d.message
               for d in bound.report.diagnostics)


def test_disjointness_violation_is_error(tmp_path):
    text = """
        entity E { key id: identifier attr t: numeric attr size: numeric }
        generalization G of E disjoint {
          subtype A when (size < 10)
          subtype B when (size < 20)
        }
        task T { target E.t }
    """
    bound = _bind(text, {"E": "id,t,size\nx,1,5\n"}, tmp_path)
    assert not bound.ok


def test_overlap_allows_multi_membership(tmp_path):
    text = """
        entity E { key id: identifier attr t: numeric attr size: numeric }
        generalization G of E overlap {
          subtype A when (size < 10)
          subtype B when (size < 20)
        }
        task T { target E.t }
    """
    bound = _bind(text, {"E": "id,t,size\nx,1,5\n"}, tmp_path)
    assert bound.ok, bound.report.render()
    assert bound.subtype_membership["G"][("x",)] == {"A", "B"}


def test_from_table_subtype_membership(tmp_path):
    text = """
        entity E { key id: identifier attr t: numeric }
        generalization G of E overlap {
          subtype S from table { attr extra: numeric }
          subtype R from table { attr other: numeric }
        }
        task T { target E.t }
    """
    bound = _bind(text, {
        "E": "id,t\na,1\nb,2\n",
        "S": "id,extra\na,42\n",
        "R": "id,other\nb,7\n",
    }, tmp_path)
    assert bound.ok, bound.report.render()
    assert bound.subtype_membership["G"] == {("a",): {"S"}, ("b",): {"R"}}
