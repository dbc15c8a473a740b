import pytest

from bottfano.bott import BottTowerSpec, build_fan, hirzebruch_spec
from bottfano.fan import product, projective_space


def hirzebruch(l):
    return build_fan(hirzebruch_spec(l))


def p1_cubed():
    p1 = projective_space(1)
    return product(product(p1, p1), p1)


def ray(fan, label):
    return fan.index_of(label)


@pytest.fixture
def p2():
    return projective_space(2)


# A small corpus of specs used by the corpus-wide property tests.
CORPUS = [
    BottTowerSpec((1,)),
    BottTowerSpec((2,)),
    BottTowerSpec((3,)),
    BottTowerSpec((1, 1), (((0,),),)),
    BottTowerSpec((1, 1), (((3,),),)),
    BottTowerSpec((1, 1), (((-2,),),)),
    BottTowerSpec((2, 1), (((1,),),)),
    BottTowerSpec((1, 2), (((1,), (-1,)),)),
    BottTowerSpec((1, 1, 1), (((1,),), ((-1, 2),))),
    BottTowerSpec((1, 1, 1), (((0,),), ((1, 1),))),
    BottTowerSpec((2, 2), (((1,), (-2,)),)),
    BottTowerSpec((1, 1, 1, 1), (((-1,),), ((-1, -1),), ((-1, -1, -1),))),
]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
