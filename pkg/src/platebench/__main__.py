import sys

from platebench.cli import main

sys.exit(main())
