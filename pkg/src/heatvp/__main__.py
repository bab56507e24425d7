import sys

from heatvp.cli import main

sys.exit(main())
