"""Vectorized quantum transformer toolkit: simulator, encoders, VQDP, noise, model and CLI."""
