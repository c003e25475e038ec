import sys

from corner.cli import main

sys.exit(main())
