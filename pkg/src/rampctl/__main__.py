import sys

from rampctl.cli import main

sys.exit(main())
