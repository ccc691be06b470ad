import sys

from fibergate.cli import main

sys.exit(main())
