import sys

from imbreg.cli import main

sys.exit(main())
