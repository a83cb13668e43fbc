"""Differential inclusions over uniformly prox-regular sets."""
