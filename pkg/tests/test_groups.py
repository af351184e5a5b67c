import random

import pytest

from conftest import check_golden
from tdcss import groups
from tdcss.errors import DecodeError, UnsupportedParameters

P = groups.group_setup()
R = random.Random(7)


def test_setup_is_cached_and_nondegenerate():
    assert groups.group_setup(128) == P
    assert groups.group_setup() is groups.group_setup()
    assert P.gt != P.identity_gt()
    assert P.order == groups.ORDER


def test_unsupported_parameters():
    with pytest.raises(UnsupportedParameters):
        groups.group_setup(80)
    with pytest.raises(UnsupportedParameters):
        groups.group_setup(128, "MNT224")


def test_bilinearity_random():
    for _ in range(100):
        x, y = R.randrange(groups.ORDER), R.randrange(groups.ORDER)
        lhs = groups.pair(P.g1 ** x, P.g2 ** y)
        assert lhs == P.gt ** (x * y % groups.ORDER)


def test_zero_exponent_gives_unity():
    y = R.randrange(1, groups.ORDER)
    assert groups.pair(groups.g1_exp(P.g1, 0), P.g2 ** y) == P.identity_gt()


def test_op_counter_nests():
    with groups.count_ops() as outer:
        groups.g1_exp(P.g1, 3)
        with groups.count_ops() as inner:
            groups.pair(P.g1, P.g2)
            groups.g2_exp(P.g2, 2)
        groups.gt_exp(P.gt, 5)
    assert inner.as_dict() == {"g1_exp": 0, "g2_exp": 1, "gt_exp": 0, "pairing": 1}
    assert outer.as_dict() == {"g1_exp": 1, "g2_exp": 1, "gt_exp": 1, "pairing": 1}


# -- hashing -----------------------------------------------------------------

def test_hash_to_g1_deterministic_and_distinct():
    assert groups.hash_to_g1("A") == groups.hash_to_g1(b"A")
    assert groups.hash_to_g1("A") != groups.hash_to_g1("B")
    assert groups.hash_to_g1("A").is_valid()


def test_sentinel_differs_from_attribute_named_like_it():
    # "11" as a real attribute must not hit the sentinel for |U| = 10
    assert groups.attr_sentinel(10) == groups.attr_sentinel(10)
    assert groups.attr_sentinel(10) != groups.hash_to_g1("11")
    assert groups.attr_sentinel(10) != groups.attr_sentinel(11)


def test_mask_length_and_sensitivity():
    z = P.gt ** 12345
    m = groups.mask_from_gt(z)
    assert len(m) * 8 == 128
    assert groups.mask_from_gt(z) == m
    assert groups.mask_from_gt(z * P.gt) != m
    assert len(groups.mask_from_gt(z, 256)) == 32


def _random_tuple(r):
    dci = P.g2 ** r.randrange(1, groups.ORDER)
    c1 = P.g2 ** r.randrange(1, groups.ORDER)
    c2 = r.randbytes(16)
    c3 = [P.g2 ** r.randrange(1, groups.ORDER) for _ in range(r.randint(1, 3))]
    c4 = [P.g1 ** r.randrange(1, groups.ORDER) for _ in range(r.randint(2, 4))]
    return dci, c1, c2, c3, c4


def test_capsule_digest_single_field_mutations():
    r = random.Random(11)
    seen = set()
    for _ in range(100):
        dci, c1, c2, c3, c4 = _random_tuple(r)
        base = groups.capsule_digest(dci, c1, c2, c3, c4)
        assert base == groups.capsule_digest(dci, c1, c2, c3, c4)
        flipped = bytearray(c2)
        flipped[r.randrange(16)] ^= 1 << r.randrange(8)
        variants = [
            groups.capsule_digest(dci * P.g2, c1, c2, c3, c4),
            groups.capsule_digest(dci, c1 * P.g2, c2, c3, c4),
            groups.capsule_digest(dci, c1, bytes(flipped), c3, c4),
            groups.capsule_digest(dci, c1, c2, c3[:-1] or [P.g2], c4),
            groups.capsule_digest(dci, c1, c2, c3, c4[::-1]),
            groups.capsule_digest(dci, c1, c2, c3, c4[:-1]),
            # moving a G1 element across the c3/c4 boundary is still a change
            groups.capsule_digest(c1, dci, c2, c3, c4),
        ]
        assert base not in variants
        assert base != 0 and all(v != 0 for v in variants)
        seen.add(base)
    assert len(seen) == 100


def test_capsule_digest_rejects_empty_lists():
    dci, c1, c2, c3, c4 = _random_tuple(random.Random(1))
    with pytest.raises(ValueError):
        groups.capsule_digest(dci, c1, c2, [], c4)


def test_hash_to_scalar_nonzero():
    assert all(groups.hash_to_scalar(bytes([i])) != 0 for i in range(256))


def test_hash_suite_matches_module_functions():
    H = groups.HashSuite(128)
    z = P.gt ** 9
    assert H.H2(z) == groups.mask_from_gt(z)
    assert H.h(b"x") == groups.hash_to_scalar(b"x")
    assert H.H1("attr") == groups.hash_to_g1("attr")


# -- serialization -----------------------------------------------------------

def test_roundtrips():
    for _ in range(30):
        a = groups.g1_exp(P.g1, R.randrange(groups.ORDER))
        b = groups.g2_exp(P.g2, R.randrange(groups.ORDER))
        c = P.gt ** R.randrange(groups.ORDER)
        k = R.randrange(groups.ORDER)
        assert groups.decode_g1(groups.encode_element(a)) == a
        assert groups.decode_g2(groups.encode_element(b)) == b
        assert groups.decode_gt(groups.encode_element(c)) == c
        assert groups.decode_scalar(groups.encode_scalar(k)) == k


def test_encoding_widths():
    assert len(groups.encode_element(P.g1)) == groups.G1_BYTES
    assert len(groups.encode_element(P.g2)) == groups.G2_BYTES
    assert len(groups.encode_element(P.gt)) == groups.GT_BYTES
    assert len(groups.encode_scalar(5)) == groups.SCALAR_BYTES


def test_identity_roundtrip():
    assert groups.decode_g1(groups.encode_element(groups.g1_identity())) == groups.g1_identity()
    assert groups.decode_g2(groups.encode_element(groups.g2_identity())) == groups.g2_identity()


@pytest.mark.parametrize("decode,width", [(groups.decode_g1, 49), (groups.decode_g2, 97)])
def test_all_zero_and_wrong_length_rejected(decode, width):
    with pytest.raises(DecodeError):
        decode(bytes(width))
    with pytest.raises(DecodeError):
        decode(bytes(width - 1))
    with pytest.raises(DecodeError):
        decode(b"\x01")


def test_gt_zero_bytes_is_unity():
    # the backend's packed form of 1_GT is all zeros; any other short input fails
    assert groups.decode_gt(bytes(384)) == P.identity_gt()
    with pytest.raises(DecodeError):
        groups.decode_gt(bytes(383))


def test_scalar_out_of_range_rejected():
    with pytest.raises(DecodeError):
        groups.decode_scalar(groups.ORDER.to_bytes(32, "big"))
    with pytest.raises(DecodeError):
        groups.decode_scalar(b"\x01" * 31)


def test_corrupted_bytes_rejected_or_changed():
    r = random.Random(5)
    for decode, x in ((groups.decode_g1, P.g1 ** 77), (groups.decode_g2, P.g2 ** 77), (groups.decode_gt, P.gt ** 77)):
        raw = groups.encode_element(x)
        for _ in range(50):
            bad = bytearray(raw)
            bit = r.randrange(8, len(raw) * 8)  # leave the prefix byte alone
            bad[bit // 8] ^= 1 << (bit % 8)
            try:
                y = decode(bytes(bad))
            except DecodeError:
                continue
            assert y != x


def test_off_subgroup_point_rejected():
    # x = 4 is on the G1 curve but not in the prime-order subgroup
    data = bytes([2]) + (4).to_bytes(48, "big")
    with pytest.raises(DecodeError):
        groups.decode_g1(data)


def test_golden_vectors():
    lines = [
        f"g1 {groups.encode_element(P.g1).hex()}",
        f"g2 {groups.encode_element(P.g2).hex()}",
        f"gt {groups.encode_element(P.gt).hex()}",
        f"H1(A) {groups.encode_element(groups.hash_to_g1('A')).hex()}",
        f"H1(sentinel 11) {groups.encode_element(groups.attr_sentinel(10)).hex()}",
        f"h(abc) {groups.hash_to_scalar(b'abc'):064x}",
        f"H2(gt) {groups.mask_from_gt(P.gt).hex()}",
        f"H3 {groups.capsule_digest(P.g2, P.g2 ** 2, bytes(16), [P.g2 ** 3], [P.g1, P.g1 ** 2]):064x}",
        f"scalar(5) {groups.encode_scalar(5).hex()}",
    ]
    check_golden("groups.txt", "\n".join(lines) + "\n")


def test_generator_is_the_standard_one():
    # published x coordinate of the BLS12-381 G1 generator
    x = ("17f1d3a73197d7942695638c4fa9ac0fc3688c4f9774b905a14e3a3f171bac58"
         "6c55e83ff97a1aeffb3af00adb22c6bb")
    assert groups.encode_element(P.g1)[1:].hex() == x
