import math

import numpy as np
import pytest
from scipy import stats

from conftest import ks_bound
from tbemon.distributions import (GumbelParams, MobeParams, MobwParams, ic_cdf_first,
                                  ic_cdf_second)
from tbemon.exceptions import DomainError, ProtocolError
from tbemon.transform import (Z_MAX, EventRecord, StreamTransformer, classify,
                              events_from_pairs, stream_block, stream_step, transform_first,
                              transform_second, transform_vectors)

N = 100_000
REAL_DATA = MobwParams(0.0435, 0.0105, 5.78e-8, 1.1677)
FAMILIES = {
    "mobe": MobeParams(0.2, 0.2),
    "mobe-ties": MobeParams(0.1, 0.1, 0.1),
    "mobw": MobwParams(0.1, 0.2, 0.05, 1.5),
    "gumbel": GumbelParams(5, 15, 1.0),
    "gumbel-dependent": GumbelParams(5, 15, 0.5),
}


def test_classify():
    assert classify(3, 2) == 1
    assert classify(2, 3) == 0
    assert classify(2, 2) == 2


class TestSingleTransforms:
    def test_first_examples(self):
        p = MobeParams(0.2, 0.2)
        assert transform_first(p, 0.0, 0).z == 0.0
        z = transform_first(p, 5.0, 1)
        assert z.z == pytest.approx(2.0, rel=1e-15)
        assert z.label == 1 and z.rank == "first"

    def test_first_mobw_real_data(self):
        for x in (0.3, 7.0, 55.0):
            z = transform_first(REAL_DATA, x, 0).z
            assert z == pytest.approx(REAL_DATA.total_rate * x ** 1.1677, rel=1e-13)
            # composition through the CDF
            assert z == pytest.approx(-math.log1p(-ic_cdf_first(REAL_DATA, x)), rel=1e-10)

    def test_second_examples(self):
        p = MobeParams(0.2, 0.2)
        assert transform_second(p, 2.0, 2.0, 0).z == 0.0
        z = transform_second(p, 1.0, 6.0, 0)
        assert z.z == pytest.approx(1.0, rel=1e-14) and z.label == 2
        z = transform_second(MobeParams(0.3, 0.2), 1.0, 2.0, 1)
        assert z.z == pytest.approx(0.3, rel=1e-14) and z.label == 3

    def test_second_tie_is_error(self):
        with pytest.raises(DomainError):
            transform_second(MobeParams(1, 1), 1.0, 1.0, 2)

    def test_second_precedes_first(self):
        with pytest.raises(DomainError):
            transform_second(MobeParams(1, 1), 2.0, 1.0, 0)

    def test_clamp(self):
        z = transform_first(MobeParams(1, 1), 1e6, 0)
        assert z.z == Z_MAX and z.clamped
        assert math.isfinite(z.z)

    @pytest.mark.parametrize("name", sorted(FAMILIES))
    def test_fast_path_matches_cdf_composition(self, name, rng):
        p = FAMILIES[name]
        x1, x2 = p.sample(2000, rng)
        y1, y2, v = transform_vectors(p, x1, x2)
        lo, hi = np.minimum(x1, x2), np.maximum(x1, x2)
        ok = (y1 > 1e-8) & (y1 < 30)
        u1 = ic_cdf_first(p, lo[ok])
        np.testing.assert_allclose(y1[ok], -np.log1p(-u1), rtol=1e-12)
        keep = (v != 2) & (y2 > 1e-6) & (y2 < 30)
        u2 = ic_cdf_second(p, hi[keep], lo[keep], v[keep])
        np.testing.assert_allclose(y2[keep], -np.log1p(-u2), rtol=1e-9)


class TestStream:
    def test_example_sequence(self):
        ic = MobeParams(0.2, 0.3)
        st = {}
        a = stream_step(ic, st, EventRecord(1, "first", 2.0, 1))
        assert [o.label for o in a] == [1] and 1 in st
        b = stream_step(ic, st, EventRecord(1, "second", 3.0))
        assert [o.label for o in b] == [3] and not st

    def test_tie_emits_one_label_one(self):
        st = {}
        out = stream_step(MobeParams(1, 1, 1), st, EventRecord(1, "tied", 4.0, 2))
        assert len(out) == 1 and out[0].label == 1 and not st

    def test_first_with_v2_is_a_tie(self):
        st = {}
        out = stream_step(MobeParams(1, 1, 1), st, EventRecord(5, "first", 4.0, 2))
        assert len(out) == 1 and not st

    def test_second_without_first(self):
        with pytest.raises(ProtocolError):
            stream_step(MobeParams(1, 1), {}, EventRecord(1, "second", 1.0))

    def test_second_before_first_value(self):
        st = {}
        stream_step(MobeParams(1, 1), st, EventRecord(1, "first", 2.0, 0))
        with pytest.raises(ProtocolError):
            stream_step(MobeParams(1, 1), st, EventRecord(1, "second", 1.0))
        assert 1 in st

    def test_repeated_first(self):
        st = {}
        stream_step(MobeParams(1, 1), st, EventRecord(1, "first", 2.0, 0))
        with pytest.raises(ProtocolError):
            stream_step(MobeParams(1, 1), st, EventRecord(1, "first", 2.0, 0))

    @pytest.mark.parametrize("bad", [EventRecord(1, "third", 1.0, 0),
                                     EventRecord(1, "first", 1.0, None),
                                     EventRecord(1, "first", -1.0, 0),
                                     EventRecord(1, "first", float("nan"), 0)])
    def test_malformed(self, bad):
        with pytest.raises(ProtocolError):
            stream_step(MobeParams(1, 1), {}, bad)

    def test_streaming_matches_block(self, rng):
        ic = MobeParams(0.1, 0.1, 0.1)
        x1, x2 = ic.sample(500, rng)
        blk = stream_block(ic, x1, x2)
        tr = StreamTransformer(ic)
        out = [o for ev in events_from_pairs(x1, x2) for o in tr.push(ev)]
        np.testing.assert_array_equal([o.z for o in out], blk.z)
        np.testing.assert_array_equal([o.label for o in out], blk.label)
        np.testing.assert_array_equal([o.vector_index - 1 for o in out], blk.vector)

    def test_block_clock(self):
        ic = MobeParams(1, 1)
        blk = stream_block(ic, np.array([1.0, 4.0]), np.array([3.0, 2.0]))
        np.testing.assert_allclose(blk.time, [1.0, 3.0, 5.0, 7.0])
        assert blk.span == 7.0


@pytest.mark.parametrize("name", sorted(FAMILIES))
class TestInControl:
    def test_uniform_by_rank(self, name, rng):
        p = FAMILIES[name]
        x1, x2 = p.sample(N, rng)
        y1, y2, v = transform_vectors(p, x1, x2)
        u1 = -np.expm1(-y1)
        u2 = -np.expm1(-y2[v != 2])
        assert stats.kstest(u1, "uniform").statistic < ks_bound(u1.size)
        assert stats.kstest(u2, "uniform").statistic < ks_bound(u2.size)

    def test_stream_exponential_and_independent(self, name, rng):
        p = FAMILIES[name]
        x1, x2 = p.sample(N, rng)
        blk = stream_block(p, x1, x2)
        assert stats.kstest(blk.z, "expon").statistic < ks_bound(blk.z.size)
        assert abs(np.corrcoef(blk.z[:-1], blk.z[1:])[0, 1]) < 0.015
        y1, y2, v = transform_vectors(p, x1, x2)
        keep = v != 2
        assert abs(np.corrcoef(y1[keep], y2[keep])[0, 1]) < 0.015

    def test_label_bookkeeping(self, name, rng):
        p = FAMILIES[name]
        x1, x2 = p.sample(20_000, rng)
        blk = stream_block(p, x1, x2)
        v = np.where(x1 < x2, 0, np.where(x1 > x2, 1, 2))
        assert np.sum(blk.label == 1) == x1.size
        assert np.sum(blk.label == 2) == np.sum(v == 0)
        assert np.sum(blk.label == 3) == np.sum(v == 1)
        assert blk.z.size == 2 * x1.size - np.sum(v == 2)
