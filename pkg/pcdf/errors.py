import click

USAGE_EXIT_CODE = 2
DATA_EXIT_CODE = 3
NUMERIC_EXIT_CODE = 4


def _error_exit(exit_code, message):
    """
    Helper method for building a CLI error that exits with exit_code.
    """
    error = click.ClickException(message)
    error.exit_code = exit_code

    return error


def usage_error(message):
    """
    Helper method for raising usage and configuration errors with exit code 2.
    """
    return _error_exit(USAGE_EXIT_CODE, message)


def data_error(message):
    """
    Helper method for raising ingestion and data errors with exit code 3.
    """
    return _error_exit(DATA_EXIT_CODE, message)


def numeric_error(message):
    """
    Helper method for raising numeric and divergence errors with exit code 4.
    """
    return _error_exit(NUMERIC_EXIT_CODE, message)
