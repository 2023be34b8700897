import sys

from caproute.cli import main

sys.exit(main())
