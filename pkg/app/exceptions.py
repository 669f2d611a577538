class PipelineError(Exception):
    """Base class for data and algorithm failures in the reconstruction pipeline"""
    pass


class ConfigError(Exception):
    """Raised when a command line argument or config file is unusable"""
    pass
