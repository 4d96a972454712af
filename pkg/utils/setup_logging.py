"""
Logging configuration for lml runs
"""
import logging
import os
from datetime import datetime
from typing import Optional

from utils.config import get_log_level, get_output_dir


def setup_logging(output_dir: Optional[str] = None):
    """
    Configure logging to both console and file
    """
    # Create logs directory if it doesn't exist
    log_dir = os.path.join(output_dir or get_output_dir(), 'logs')
    os.makedirs(log_dir, exist_ok=True)

    # Create log filename with timestamp
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    log_file = os.path.join(log_dir, f'lml_run_{timestamp}.log')

    logging.basicConfig(
        level=getattr(logging, get_log_level(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler()  # Also print to console
        ],
        force=True,
    )

    logger = logging.getLogger('lml')
    logger.info(f"Logging initialized. Log file: {log_file}")

    return logger, log_file
