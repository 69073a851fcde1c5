import numpy as np
import pytest

from macrodml.panel_data import TimeSeriesMatrix, month_range


def make_tsm(values, start="2000-01", names=None) -> TimeSeriesMatrix:
    """Wrap a 2-D array as a TimeSeriesMatrix on consecutive months."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if names is None:
        names = [f"c{j + 1}" for j in range(values.shape[1])]
    return TimeSeriesMatrix(month_range(start, values.shape[0]), list(names), values)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
