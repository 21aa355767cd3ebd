import sys

from sepris.cli import main

sys.exit(main())
