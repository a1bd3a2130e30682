import os

dir_path = os.path.dirname(os.path.realpath(__file__))
FIXTURES_PATH = os.path.join(dir_path, "..", "fixtures")
