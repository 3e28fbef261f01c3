from . import utils, neuralnet, envs, demos, keyframes, imitation, eval, config, cli

__version__ = "0.1.0"
