import sys

from triflow.cli import main

sys.exit(main())
