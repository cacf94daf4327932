"""python -m cmasolve: set thread caps before numpy loads, then run."""

import os
import sys

_threads = os.environ.get("CMASOLVE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from cmasolve.cli import main  # noqa: E402

sys.exit(main())
