"""Monthly temperature forecasting: Box-Jenkins ARIMA against a conv/LSTM network."""

from .errors import TempcastError
from .series_io import TimeSeries

__version__ = "0.1.0"

__all__ = ["TempcastError", "TimeSeries", "__version__"]
