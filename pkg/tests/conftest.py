import sys
from pathlib import Path

# the oracles module lives next to the tests, outside the package
sys.path.insert(0, str(Path(__file__).parent))
