import sys

from airbeam.cli import main

sys.exit(main())
