import sys

from himars.cli import main

sys.exit(main())
