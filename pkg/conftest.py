import os

import django
import pytest

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'hqts_manager.settings')
django.setup()


@pytest.fixture(scope='session', autouse=True)
def django_test_environment():
    """Same database setup as `manage.py test` (test DB + test environment)."""
    from django.test.runner import DiscoverRunner

    runner = DiscoverRunner(verbosity=0, interactive=False)
    runner.setup_test_environment()
    old_config = runner.setup_databases()
    try:
        yield
    finally:
        runner.teardown_databases(old_config)
        runner.teardown_test_environment()
