import pytest

from splaynetsim.modules.topology import build_balanced_tree, build_tree


@pytest.fixture
def tree7():
    """
    Balanced tree over 1..7: root 4, children 2 and 6, leaves 1, 3, 5, 7
    """
    return build_balanced_tree(7)


@pytest.fixture
def tree15():
    return build_balanced_tree(15)


@pytest.fixture
def path4():
    """
    Left-leaning path 4-3-2-1 rooted at 4
    """
    return build_tree(4, {4: (3, None), 3: (2, None), 2: (1, None)})


@pytest.fixture
def trace_lines():
    return ["# src,dst[,arrival]", "1,2", "", "3 5 4", "7,1,17"]
