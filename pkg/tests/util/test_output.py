import pandas as pd

from frprune.util.output import pretty_time, write_csv


def test_pretty_time():
    assert pretty_time(0) == "0.00s"
    assert pretty_time(0.256) == "0.26s"
    assert pretty_time(1) == "1s"
    assert pretty_time(59) == "59s"
    assert pretty_time(60) == "1m 0s"
    assert pretty_time(61) == "1m 1s"
    assert pretty_time(119) == "1m 59s"
    assert pretty_time(120) == "2m 0s"
    assert pretty_time((60 * 50) + 12) == "50m 12s"
    assert pretty_time((60 * 60) + 12) == "1h 0m 12s"
    assert pretty_time((60 * 60 * 2) + (60 * 50) + 12) == "2h 50m 12s"


def test_write_csv(tmp_path):
    frame = pd.DataFrame({"layer_id": [0, 3], "score": [0.1, 1.0 / 3.0]})
    path = write_csv(frame, tmp_path / "nested" / "scores.csv")
    assert path.is_file()
    assert path.read_text() == "layer_id,score\n0,0.1\n3,0.333333333\n"
    write_csv(frame, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
