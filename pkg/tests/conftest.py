"""Test configuration; keeps the tests directory importable for oracles."""

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))
