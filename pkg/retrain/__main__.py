import sys

from .cli_util import main

sys.exit(main())
