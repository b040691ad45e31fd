import sys

from edgeband.cli.main import main

sys.exit(main())
