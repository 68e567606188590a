import logging
import os
import sys

# Make the top-level modules importable when pytest runs from TEST/
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

logging.basicConfig(level=logging.INFO)
