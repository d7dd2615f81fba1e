import pytest

from zipcol import write_file
from zipcol.arrays import array_equal, avg_value_width, validate
from zipcol.scenarios import SCENARIOS, generate

SMALL = {"vector": 500, "vector-list": 200, "image": 300, "image-list": 60}
ROUTE = {
    "scalar": "miniblock", "string": "miniblock", "scalar-list": "miniblock", "string-list": "miniblock",
    "vector": "fullzip", "vector-list": "fullzip", "image": "fullzip", "image-list": "fullzip",
}


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenario_shape_and_routing(name):
    rows = SMALL.get(name, 5000)
    a = generate(name, rows)
    assert validate(a) is None
    assert a.length == rows and a.dtype == SCENARIOS[name].dtype
    assert 0.05 < 1 - a.is_valid().mean() < 0.15
    assert avg_value_width(a) == pytest.approx(SCENARIOS[name].nominal_bytes, rel=0.25)
    _, report = write_file({name: a})
    assert report.encodings() == {ROUTE[name]}


def test_seeded_and_null_free():
    assert array_equal(generate("string-list", 1000, seed=3), generate("string-list", 1000, seed=3))
    assert not array_equal(generate("string-list", 1000, seed=3), generate("string-list", 1000, seed=4))
    assert generate("scalar", 1000, null_fraction=0.0).is_valid().all()


def test_unknown_scenario():
    with pytest.raises(KeyError):
        generate("tensor", 10)
