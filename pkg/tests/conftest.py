import pytest

from esgrid.clock import SimClock
from esgrid.security import GroupPolicy, SecurityService

SERVICE_KEY = b"unit-test-key"


@pytest.fixture
def clock():
    return SimClock()


@pytest.fixture
def security(clock):
    svc = SecurityService(clock, SERVICE_KEY)
    svc.bootstrap_account("root@esg.test", ["esg-admin"], "full", "rootpass")
    return svc


@pytest.fixture
def admin_token(security):
    return security.login("root@esg.test", "rootpass")


@pytest.fixture
def publisher_token(security, admin_token):
    for pattern, actions in [
        ("lfn://**", {"read", "publish"}),
        ("svc://datamover", {"move"}),
        ("svc://storage", {"publish"}),
    ]:
        security.add_policy(GroupPolicy("publishers", pattern, frozenset(actions)), admin_token)
    return security.issue_token("pub@esg.test", ["publishers"], "full")


@pytest.fixture
def reader_token(security, admin_token):
    security.add_policy(GroupPolicy("readers", "lfn://**", frozenset({"read"})), admin_token)
    return security.issue_token("reader@esg.test", ["readers"], "moderate")
