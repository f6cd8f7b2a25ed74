"""C-LSTM sentence classifier: n-gram convolution feeding an LSTM, trained with
hand-derived gradients on numpy."""

__version__ = "0.1.0"
