"""Fixture generator: trains a tiny CNN on a synthetic grating dataset and
exports model.onnx + manifest.json for the local oracle backend.
"""

from .generate import FixtureSpec, generate_fixture

__all__ = ["FixtureSpec", "generate_fixture"]
