import datetime as dt

from cmml.tabular import (Table, distinct_key_count, read_csv,
                          table_to_csv_bytes, write_csv)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


COLS = [("id", "identifier"), ("v", "numeric"), ("d", "date"), ("b", "boolean")]


def test_read_csv_basic(tmp_path):
    p = _write(tmp_path, "T.csv", "id,v,d,b\nx,1.5,2019-01-02,true\ny,,,\n")
    table, rep = read_csv(p, "T", COLS, key_columns=["id"])
    assert rep.ok, rep.render()
    assert table.rows == [["x", 1.5, dt.date(2019, 1, 2), True], ["y", None, None, None]]


def test_read_csv_any_column_order(tmp_path):
    p = _write(tmp_path, "T.csv", "b,id,d,v\ntrue,x,2019-01-02,1.5\n")
    table, rep = read_csv(p, "T", COLS, key_columns=["id"])
    assert rep.ok
    # normalized to declared order
    assert table.column_names == ["id", "v", "d", "b"]
    assert table.rows == [["x", 1.5, dt.date(2019, 1, 2), True]]


def test_read_csv_header_mismatch(tmp_path):
    p = _write(tmp_path, "T.csv", "id,v\nx,1\n")
    _, rep = read_csv(p, "T", COLS, key_columns=["id"])
    assert not rep.ok


def test_read_csv_extra_column_rejected(tmp_path):
    p = _write(tmp_path, "T.csv", "id,v,d,b,zzz\nx,1,,,9\n")
    _, rep = read_csv(p, "T", COLS, key_columns=["id"])
    assert not rep.ok


def test_read_csv_cell_diagnostics_name_row_and_column(tmp_path):
    p = _write(tmp_path, "T.csv", "id,v,d,b\nx,notanumber,2019-01-02,true\n")
    _, rep = read_csv(p, "T", COLS, key_columns=["id"])
    assert not rep.ok
    msg = rep.errors[0].location or rep.errors[0].message
    assert msg == "T:1:v"  # data row 1, column v


def test_write_deterministic_bytes(tmp_path):
    t = Table("T", COLS, rows=[["x", 48.0, dt.date(2019, 1, 2), True]],
              key_columns=["id"])
    b1 = table_to_csv_bytes(t)
    b2 = table_to_csv_bytes(t)
    assert b1 == b2
    assert b1 == b"id,v,d,b\nx,48,2019-01-02,true\n"
    write_csv(t, tmp_path / "out.csv")
    assert (tmp_path / "out.csv").read_bytes() == b1


def test_distinct_key_count():
    t = Table("T", [("id", "identifier"), ("v", "numeric")],
              rows=[["a", 1.0], ["a", 2.0], ["b", 3.0]], key_columns=["id"])
    assert distinct_key_count(t) == 2
