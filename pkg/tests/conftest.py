import random

import pytest

from fieldcov.expr import Fun, Pow, Ref, fiber, jet, rational
from fieldcov.theory import parse_theory


_POOL = [Ref(fiber("a")), Ref(fiber("b")), Ref(fiber("c")),
         Ref(jet("u", 0, 0)), Ref(jet("u", 0, 1)),
         rational(2), rational(-3), rational(1, 2), rational(-2, 3)]


def random_expr(rng: random.Random, depth: int = 3):
    """Seeded random expression trees for corpus-style properties."""
    if depth == 0:
        return _POOL[rng.randrange(len(_POOL))]
    k = rng.randrange(6)
    if k == 0:
        return random_expr(rng, depth - 1) + random_expr(rng, depth - 1)
    if k == 1:
        return random_expr(rng, depth - 1) - random_expr(rng, depth - 1)
    if k == 2:
        return random_expr(rng, depth - 1) * random_expr(rng, depth - 1)
    if k == 3:
        return Pow(random_expr(rng, depth - 1), rng.choice([-2, -1, 2, 3]))
    if k == 4:
        return -random_expr(rng, depth - 1)
    return Fun("V", random_expr(rng, depth - 1))


@pytest.fixture(scope="session")
def harmonic():
    return parse_theory(
        "theory harmonic\n"
        "base 1 (t)\n"
        "field q[1] : scalar variational\n"
        "lagrangian (1/2)*D[q;t]^2 - (1/2)*q^2\n")
