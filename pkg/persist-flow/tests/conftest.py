# -*- coding: utf-8 -*-
import pytest

from tests.utils import desk_curves


@pytest.fixture
def curves():
    return desk_curves()
