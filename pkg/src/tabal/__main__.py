import sys

from tabal.cli import main

sys.exit(main())
