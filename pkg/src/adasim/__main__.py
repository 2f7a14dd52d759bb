import sys

from adasim.cli import main

sys.exit(main())
