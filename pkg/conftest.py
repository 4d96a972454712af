import os
import sys

# make the top-level packages importable when pytest runs from any directory
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
