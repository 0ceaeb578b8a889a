"""Link-level channel simulation, estimation and LSTM prediction workbench."""

__version__ = "1.0.0"
