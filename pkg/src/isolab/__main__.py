import sys

from isolab.cli import main

sys.exit(main())
