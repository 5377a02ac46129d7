"""Minimal float64 neural network engine: forward/backward layers,
least-squares adversarial losses, Adam, weight serialization."""
