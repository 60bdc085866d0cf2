#!/usr/bin/env python3
"""Run the acceptance criteria outside pytest and print one line per criterion.

    python scripts/run_acceptance.py            # all ten (about 17 minutes)
    python scripts/run_acceptance.py 1 2 7      # a subset

Exit status 0 when every selected criterion passes, 1 otherwise.
"""

import importlib.util
import pathlib
import sys

HERE = pathlib.Path(__file__).resolve().parent


def load_acceptance():
    path = HERE.parent / "tests" / "test_acceptance.py"
    spec = importlib.util.spec_from_file_location("acceptance", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


if __name__ == "__main__":
    sys.exit(load_acceptance().main(sys.argv[1:]))
