import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from causal_kit.data import Dataset, format_number, parse_csv, write_csv
from causal_kit.errors import DataError, EmptyArmError

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)), elements=finite))
def test_csv_roundtrip_is_value_identical(values):
    ds = Dataset({f"c{j}": values[:, j] for j in range(values.shape[1])})
    back = parse_csv(write_csv(ds))
    assert back.names == ds.names
    for name in ds.names:
        assert np.array_equal(back[name], ds[name])


def test_integral_values_print_plainly():
    assert format_number(3.0) == "3"
    assert format_number(-0.5) == "-0.5"
    assert format_number(0.1) == "0.1"


def test_validation():
    with pytest.raises(DataError):
        Dataset({"a": [1, 2], "b": [1]})
    with pytest.raises(DataError):
        Dataset({"a": [1, np.nan]})
    with pytest.raises(DataError):
        Dataset({"a": [1.0]}, y="missing")
    with pytest.raises(DataError):
        parse_csv("a,b\n1,x\n")
    with pytest.raises(DataError):
        parse_csv("a,a\n1,2\n")


def test_treatment_arms():
    ds = Dataset.from_arrays([1, 2, 3], [0, 1, 1])
    control, treated = ds.treatment_arms()
    assert control.tolist() == [True, False, False]
    with pytest.raises(DataError):
        Dataset.from_arrays([1, 2], [0, 2]).treatment_arms()
    with pytest.raises(EmptyArmError) as info:
        Dataset.from_arrays([1, 2], [1, 1]).treatment_arms()
    assert info.value.arm == 0


def test_columns_are_read_only():
    ds = Dataset.from_arrays([1.0, 2.0], [0, 1])
    with pytest.raises(ValueError):
        ds.Y[0] = 5
