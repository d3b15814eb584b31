import pytest

from udn_handover.model import table_one


@pytest.fixture
def table1():
    return table_one(1.5)
