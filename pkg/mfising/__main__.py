import sys

from mfising.main import main


sys.exit(main())
