"""Differentiable CCA layer toolkit."""
