import sys

from tempsel.harness.cli import main

sys.exit(main())
