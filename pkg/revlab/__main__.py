import sys

from revlab.cli import main

sys.exit(main())
