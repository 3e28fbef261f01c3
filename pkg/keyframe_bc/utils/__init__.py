from . import basic, errors
