import datetime as dt

import numpy as np
import pytest

from causeway.timeseries import TimeSeries

D0 = dt.date(2013, 1, 1)


@pytest.fixture
def day0() -> dt.date:
    return D0


def series(values, start=D0, name="s") -> TimeSeries:
    return TimeSeries(start, np.asarray(values, dtype=float), name)


@pytest.fixture
def make_series():
    return series
