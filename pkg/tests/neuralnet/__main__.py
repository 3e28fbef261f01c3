import os
import sys
import unittest

# runs every test_*.py module of this folder
if __name__ == '__main__':
    here = os.path.dirname(os.path.abspath(__file__))
    suite = unittest.defaultTestLoader.discover(here, pattern='test_*.py', top_level_dir=os.path.dirname(os.path.dirname(here)))
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(0 if result.wasSuccessful() else 1)
