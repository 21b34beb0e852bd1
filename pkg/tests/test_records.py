import pytest

from abprofile.errors import DataError
from abprofile.records import SequenceRecord, SequenceSet, parse_sequences

CSV_HEADER = "id,dataset_id,set_label,heavy,light\n"


def test_single_row():
    text = CSV_HEADER + "ab1,d1,targeting,EVQLVESGG,DIQMTQSPS\n"
    out = parse_sequences(text)
    assert len(out) == 1
    rec = out.records[0]
    assert rec.id == "ab1"
    assert rec.heavy == "EVQLVESGG"
    assert rec.light == "DIQMTQSPS"
    assert out.datasets == {"d1": [0]}


def test_empty_file():
    out = parse_sequences("")
    assert len(out) == 0
    assert out.datasets == {}


def test_illegal_residue_rejected():
    text = CSV_HEADER + "ab1,d1,targeting,EVBQL,\n"
    with pytest.raises(DataError, match="B"):
        parse_sequences(text)


def test_x_allowed_only_with_flag():
    text = CSV_HEADER + "ab1,d1,targeting,EVXQL,\n"
    with pytest.raises(DataError):
        parse_sequences(text)
    out = parse_sequences(text, allow_x=True)
    assert out.records[0].heavy == "EVXQL"


def test_duplicate_id_rejected():
    text = CSV_HEADER + "ab1,d1,targeting,EVQL,\nab1,d2,targeting,EVQL,\n"
    with pytest.raises(DataError, match="duplicate"):
        parse_sequences(text)


def test_bad_header_names_line():
    with pytest.raises(DataError, match="line 1"):
        parse_sequences("id,heavy\nab1,EVQL\n")


def test_missing_both_chains_rejected():
    text = CSV_HEADER + "ab1,d1,targeting,,\n"
    with pytest.raises(DataError, match="chain"):
        parse_sequences(text)


def test_record_order_preserved():
    text = CSV_HEADER + "".join(f"ab{i},d{i % 2},reference,EVQL,\n" for i in range(6))
    out = parse_sequences(text)
    assert [r.id for r in out] == [f"ab{i}" for i in range(6)]
    assert out.datasets == {"d0": [0, 2, 4], "d1": [1, 3, 5]}


def test_fasta_pairs_chains_by_id():
    text = (
        ">ab1|d1|targeting|H\nEVQLVE\nSGG\n"
        ">ab2|d1|targeting|H\nQVQLQE\n"
        ">ab1|d1|targeting|L\nDIQMTQ\n"
    )
    out = parse_sequences(text, fmt="fasta")
    assert len(out) == 2
    assert out.records[0].heavy == "EVQLVESGG"
    assert out.records[0].light == "DIQMTQ"
    assert out.records[1].light is None


def test_fasta_bad_header():
    with pytest.raises(DataError, match="header"):
        parse_sequences(">ab1|d1\nEVQL\n", fmt="fasta")


def test_unknown_set_label():
    with pytest.raises(DataError, match="set label"):
        SequenceRecord("a", "d", "other", heavy="EVQL")


def test_sequence_set_duplicate_guard():
    recs = [
        SequenceRecord("a", "d", "targeting", heavy="EVQL"),
        SequenceRecord("a", "d", "targeting", heavy="EVQI"),
    ]
    with pytest.raises(DataError):
        SequenceSet(recs)
