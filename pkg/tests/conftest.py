import random

import pytest

from crfid_downlink.ihex import generate_fixture, parse_file

FIRMWARE_BYTES = 5387  # base firmware image size used in the transfer benchmarks
FIRMWARE_RECORD_WIDTH = 26  # bytes per record, matching toolchain-image averages


@pytest.fixture(scope="session")
def firmware_matrix():
    """5387-byte firmware-sized fixture, 26-byte records."""
    rng = random.Random(99)
    payload = bytes(rng.randrange(256) for _ in range(FIRMWARE_BYTES))
    return parse_file(generate_fixture(payload, record_width=FIRMWARE_RECORD_WIDTH))


@pytest.fixture(scope="session")
def random_5120_matrix():
    """5120 bytes of random data in 16-byte records (320 rows)."""
    rng = random.Random(41)
    payload = bytes(rng.randrange(256) for _ in range(5120))
    return parse_file(generate_fixture(payload, record_width=16))


@pytest.fixture()
def small_matrix():
    rng = random.Random(17)
    payload = bytes(rng.randrange(256) for _ in range(520))
    return parse_file(generate_fixture(payload, record_width=26))


def clean_power(_round: int) -> bool:
    return True


def static_distance(cm: float):
    def at(_round: int) -> float:
        return cm

    return at
