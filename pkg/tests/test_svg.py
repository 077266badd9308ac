import xml.etree.ElementTree as ET

from curbsight.svg import boxplot, parse_embedded_data, scatter


def test_scatter_embeds_points():
    text = scatter([1.0, 2.5], [1.5, 2.0], "t", "x", "y")
    ET.fromstring(text)
    rows = parse_embedded_data(text)
    assert rows == [["x", "y"], ["1.0", "1.5"], ["2.5", "2.0"]]
    assert text.count("<circle") == 2


def test_boxplot_quartiles():
    text = boxplot({"a": [1, 2, 3, 4, 5], "b": []}, "t & co", "err")
    ET.fromstring(text)
    header, a, b = parse_embedded_data(text)
    assert header[0] == "group"
    assert a == ["a", "5", "1.0", "2.0", "3.0", "4.0", "5.0"]
    assert b[:2] == ["b", "0"]


def test_boxplot_outlier_beyond_whisker():
    text = boxplot({"a": [1, 2, 2, 3, 50]}, "t", "e")
    _, a = parse_embedded_data(text)
    assert float(a[-1]) == 3.0
    assert text.count('fill="none"') == 1


def test_deterministic():
    assert scatter([3, 1], [2, 4], "t", "x", "y") == scatter([3, 1], [2, 4], "t", "x", "y")
