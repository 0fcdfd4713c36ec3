import sys
from pathlib import Path

import pytest

from tradeflux.network import ImbalanceNetwork

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def net3() -> ImbalanceNetwork:
    """Hand-solved absorbing fixture.

    S sends 2 to A and 1 to B; A forwards 1 to B. Accounts come out as
    S: -3 (consumer), A: +1, B: +2 (producers). A unit from S is absorbed
    at A with probability 1/3 and at B with probability 2/3.
    """
    return ImbalanceNetwork.from_edges(
        [("S", "A", 2.0), ("S", "B", 1.0), ("A", "B", 1.0)]
    )
