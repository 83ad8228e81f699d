"""Export-volume distribution analysis: RCA, fitness, log-normal fits and GoF tests."""

__version__ = "0.1.0"
