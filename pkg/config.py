"""
Configuration management for the Cognitive Load Market Laboratory
"""
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Base configuration class"""

    # Run outputs
    OUTPUT_DIR = os.getenv('COGLOAD_OUTPUT_DIR', 'runs')
    DEFAULT_CONFIG = os.getenv('COGLOAD_DEFAULT_CONFIG', 'configs/default.yaml')

    # Logging
    LOG_LEVEL = os.getenv('COGLOAD_LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

    # Reproducibility and parallelism
    DEFAULT_SEED = int(os.getenv('COGLOAD_SEED', 20240101))
    THREADS = int(os.getenv('COGLOAD_THREADS', 1))

    # Model constants
    ALPHA_ATTENTION = 0.5
    ALPHA_MEMORY = 1.0
    MAX_STRUCTURE = 30.0
    SHINGLE_SIZE = 8


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.getenv('COGLOAD_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    LOG_LEVEL = os.getenv('COGLOAD_LOG_LEVEL', 'INFO')


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'default': ProductionConfig
}
