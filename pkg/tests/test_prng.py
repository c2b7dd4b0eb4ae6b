import numpy as np

from resad.prng import SplitMix64, Xoshiro256StarStar


def test_splitmix64_reference_vector():
    # published test vector for splitmix64 from seed 0
    sm = SplitMix64(0)
    assert sm.next_u64() == 0xE220A8397B1DCDAF
    assert sm.next_u64() == 0x6E789E6AA1B965F4
    assert sm.next_u64() == 0x06C45D188009454F


def test_xoshiro_hand_derived_outputs():
    # worked by hand from the xoshiro256** recurrence with state (1, 2, 3, 4):
    #   out1 = rotl(2*5, 7) * 9 = 1280 * 9
    #   out2 = rotl(0*5, 7) * 9 = 0          (s1 becomes 0 after the update)
    #   out3 = rotl(262149*5, 7) * 9
    gen = Xoshiro256StarStar([1, 2, 3, 4])
    assert gen.next_u64() == 11520
    assert gen.next_u64() == 0
    assert gen.next_u64() == 1509978240


def test_from_seed_is_deterministic():
    a = Xoshiro256StarStar.from_seed(1234, stream=3)
    b = Xoshiro256StarStar.from_seed(1234, stream=3)
    assert a.state == b.state
    assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]


def test_streams_are_distinct():
    a = Xoshiro256StarStar.from_seed(1234, stream=0)
    b = Xoshiro256StarStar.from_seed(1234, stream=1)
    assert a.state != b.state
    assert [a.next_u64() for _ in range(4)] != [b.next_u64() for _ in range(4)]


def test_randoms_matches_scalar_path():
    a = Xoshiro256StarStar.from_seed(99)
    b = Xoshiro256StarStar.from_seed(99)
    batch = a.randoms(257)
    scalar = np.array([b.random() for _ in range(257)])
    assert np.array_equal(batch, scalar)
    assert a.state == b.state


def test_randoms_in_unit_interval():
    values = Xoshiro256StarStar.from_seed(5).randoms(10000)
    assert values.min() >= 0.0
    assert values.max() < 1.0
    # crude uniformity sanity check
    assert abs(values.mean() - 0.5) < 0.02


def test_all_zero_state_is_replaced():
    gen = Xoshiro256StarStar([0, 0, 0, 0])
    assert any(gen.state)
