import sys

from tendency.cli import main

sys.exit(main())
