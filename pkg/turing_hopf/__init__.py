"""Turing-Hopf bifurcation analysis for delayed reaction-diffusion systems."""
