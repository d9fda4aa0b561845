import sys

from supplyshock.cli import main

sys.exit(main())
