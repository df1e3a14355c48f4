import sys

from conewalk.cli import main

sys.exit(main())
