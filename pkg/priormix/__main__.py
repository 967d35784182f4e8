import sys

from priormix.main import main

sys.exit(main())
