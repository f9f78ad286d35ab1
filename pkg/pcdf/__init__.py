import logging

from flask import Flask
from flask.cli import FlaskGroup

from config import DevelopmentConfig


def create_app(config=DevelopmentConfig):
    """Create and configure an instance of the pcdf command-line app"""

    app = Flask(__name__, instance_relative_config=True)

    app.config.from_object(config)
    app.logger.setLevel(app.config.get("LOG_LEVEL", logging.INFO))

    with app.app_context():
        from pcdf.management import commands

        app.register_blueprint(commands.bp)

        return app


cli = FlaskGroup(create_app=create_app, add_default_commands=False, add_version_option=False)
