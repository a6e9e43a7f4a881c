"""First-, second- and k-th order neural ODEs with interchangeable gradient engines."""

__version__ = "0.1.0"
