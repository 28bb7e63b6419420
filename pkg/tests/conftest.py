import os
import sys

# Make the repository root importable when pytest runs from anywhere
sys.path.append(os.path.join(os.path.dirname(__file__), ".."))
