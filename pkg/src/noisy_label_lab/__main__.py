"""Module entry point for python -m noisy_label_lab."""

import sys

from .cli import main

sys.exit(main())
