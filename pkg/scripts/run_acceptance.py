"""Evaluate each acceptance criterion and print one PASS/FAIL line apiece."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from tests.test_acceptance import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
