"""Allow `python -m evm_clone_detector`."""

import sys

from .run_detection import main

sys.exit(main())
