"""Stochastic magnetoelectric MTJ neuron: macrospin simulator, telegraph
analysis, bias-plane characterization and a behavioral Markov neuron."""

__version__ = "0.1.0"
