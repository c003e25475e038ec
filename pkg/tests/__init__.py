import logging

logging.basicConfig(level="DEBUG", format="%(levelname)s %(name)s %(message)s")
