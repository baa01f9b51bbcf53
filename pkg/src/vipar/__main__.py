import sys

from vipar.cli import main

sys.exit(main())
