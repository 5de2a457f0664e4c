import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agt_cert.intervals import (
    IntervalError,
    IntervalMatrix,
    IntervalVector,
    iadd,
    iclip,
    ielemmul,
    iintersect,
    imatmul,
    iscale,
    isub,
    itranspose,
)

RNG = np.random.default_rng(20240601)


def random_interval_matrix(rng, shape, scale=2.0):
    a = rng.uniform(-scale, scale, size=shape)
    b = rng.uniform(-scale, scale, size=shape)
    return IntervalMatrix(np.minimum(a, b), np.maximum(a, b))


def sample_member(rng, iv, n):
    """n uniform samples from the interval, shape (n, *iv.shape)."""
    u = rng.uniform(size=(n,) + iv.lo.shape)
    return iv.lo + u * (iv.hi - iv.lo)


def exact_hull_matmul(a: IntervalMatrix, b: IntervalMatrix) -> IntervalMatrix:
    """Oracle: sum of exact scalar-interval products, entry by entry."""
    n, m = a.lo.shape
    m2, k = b.lo.shape
    assert m == m2
    lo = np.zeros((n, k))
    hi = np.zeros((n, k))
    for i in range(n):
        for j in range(k):
            acc_lo = 0.0
            acc_hi = 0.0
            for t in range(m):
                cands = [
                    a.lo[i, t] * b.lo[t, j],
                    a.lo[i, t] * b.hi[t, j],
                    a.hi[i, t] * b.lo[t, j],
                    a.hi[i, t] * b.hi[t, j],
                ]
                acc_lo += min(cands)
                acc_hi += max(cands)
            lo[i, j] = acc_lo
            hi[i, j] = acc_hi
    return IntervalMatrix(lo, hi)


class TestConstruction:
    def test_rejects_crossed_endpoints(self):
        with pytest.raises(IntervalError):
            IntervalMatrix([[1.0]], [[0.5]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(IntervalError):
            IntervalMatrix(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_rejects_nan_and_inf(self):
        with pytest.raises(IntervalError):
            IntervalMatrix([[np.nan]], [[1.0]])
        with pytest.raises(IntervalError):
            IntervalVector([0.0], [np.inf])

    def test_vector_must_be_1d(self):
        with pytest.raises(IntervalError):
            IntervalVector(np.zeros((2, 2)), np.zeros((2, 2)))

    def test_ball(self):
        v = IntervalVector.ball([1.0, -1.0], 0.5)
        assert np.allclose(v.lo, [0.5, -1.5])
        assert np.allclose(v.hi, [1.5, -0.5])
        with pytest.raises(IntervalError):
            IntervalVector.ball([0.0], -0.1)


class TestAdd:
    def test_zero_identity(self):
        z = IntervalMatrix.point([[0.0]])
        assert iadd(z, z).lo[0, 0] == 0.0
        assert iadd(z, z).hi[0, 0] == 0.0

    def test_endpoint_addition(self):
        a = IntervalMatrix([[1.0]], [[2.0]])
        b = IntervalMatrix([[-1.0]], [[3.0]])
        c = iadd(a, b)
        assert c.lo[0, 0] == 0.0
        assert c.hi[0, 0] == 5.0

    def test_mc_containment(self):
        a = random_interval_matrix(RNG, (3, 3))
        b = random_interval_matrix(RNG, (3, 3))
        c = iadd(a, b)
        xs = sample_member(RNG, a, 1000)
        ys = sample_member(RNG, b, 1000)
        assert np.all(c.lo <= xs + ys) and np.all(xs + ys <= c.hi)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(IntervalError):
            iadd(IntervalMatrix.point(np.zeros((2, 2))), IntervalMatrix.point(np.zeros((2, 3))))


class TestMatmul:
    def test_point_product(self):
        a = IntervalMatrix.point([[2.0]])
        b = IntervalMatrix.point([[3.0]])
        c = imatmul(a, b)
        assert c.lo[0, 0] == 6.0 and c.hi[0, 0] == 6.0

    def test_symmetric_unit(self):
        a = IntervalMatrix([[-1.0]], [[1.0]])
        c = imatmul(a, a)
        assert c.lo[0, 0] == pytest.approx(-1.0)
        assert c.hi[0, 0] == pytest.approx(1.0)

    def test_contains_exact_hull(self):
        for _ in range(20):
            a = random_interval_matrix(RNG, (4, 5))
            b = random_interval_matrix(RNG, (5, 3))
            c = imatmul(a, b)
            h = exact_hull_matmul(a, b)
            assert np.all(c.lo <= h.lo + 1e-12)
            assert np.all(c.hi >= h.hi - 1e-12)

    def test_mc_containment(self):
        a = random_interval_matrix(RNG, (4, 5))
        b = random_interval_matrix(RNG, (5, 3))
        c = imatmul(a, b)
        xs = sample_member(RNG, a, 1000)
        ys = sample_member(RNG, b, 1000)
        prods = np.matmul(xs, ys)
        assert np.all(prods >= c.lo - 1e-12) and np.all(prods <= c.hi + 1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(IntervalError):
            imatmul(IntervalMatrix.point(np.zeros((2, 3))), IntervalMatrix.point(np.zeros((2, 3))))

    def test_point_degeneracy_matches_numpy(self):
        x = RNG.normal(size=(6, 4))
        y = RNG.normal(size=(4, 5))
        c = imatmul(IntervalMatrix.point(x), IntervalMatrix.point(y))
        ref = x @ y
        assert np.allclose(c.lo, ref, rtol=1e-12, atol=0)
        assert np.allclose(c.hi, ref, rtol=1e-12, atol=0)


class TestElemmul:
    def test_unit_interval_identity(self):
        a = IntervalMatrix.point([[1.0]])
        b = IntervalMatrix([[5.0]], [[7.0]])
        c = ielemmul(a, b)
        assert c.lo[0, 0] == 5.0 and c.hi[0, 0] == 7.0

    def test_endpoint_hull(self):
        a = IntervalMatrix([[-2.0]], [[3.0]])
        b = IntervalMatrix([[-1.0]], [[1.0]])
        c = ielemmul(a, b)
        assert c.lo[0, 0] == -3.0 and c.hi[0, 0] == 3.0

    def test_point_times_point(self):
        a = IntervalMatrix.point([[-1.5, 2.0]])
        b = IntervalMatrix.point([[4.0, -0.5]])
        c = ielemmul(a, b)
        assert np.allclose(c.lo, [[-6.0, -1.0]]) and np.allclose(c.hi, [[-6.0, -1.0]])

    def test_mc_containment(self):
        a = random_interval_matrix(RNG, (3, 4))
        b = random_interval_matrix(RNG, (3, 4))
        c = ielemmul(a, b)
        xs = sample_member(RNG, a, 1000)
        ys = sample_member(RNG, b, 1000)
        assert np.all(xs * ys >= c.lo - 1e-15) and np.all(xs * ys <= c.hi + 1e-15)


class TestScaleClipTranspose:
    def test_negative_scale_swaps(self):
        a = IntervalMatrix([[1.0]], [[2.0]])
        c = iscale(a, -1.0)
        assert c.lo[0, 0] == -2.0 and c.hi[0, 0] == -1.0

    def test_clip_saturation(self):
        a = IntervalMatrix([[-5.0]], [[2.0]])
        c = iclip(a, 1.0)
        assert c.lo[0, 0] == -1.0 and c.hi[0, 0] == 1.0

    def test_clip_interior_identity(self):
        a = IntervalMatrix([[0.2]], [[0.3]])
        c = iclip(a, 1.0)
        assert c.lo[0, 0] == 0.2 and c.hi[0, 0] == 0.3

    def test_clip_rejects_negative_kappa(self):
        with pytest.raises(IntervalError):
            iclip(IntervalMatrix.point([[0.0]]), -1.0)

    def test_transpose(self):
        a = random_interval_matrix(RNG, (2, 3))
        t = itranspose(a)
        assert t.lo.shape == (3, 2)
        assert np.array_equal(t.lo, a.lo.T) and np.array_equal(t.hi, a.hi.T)

    def test_clip_is_sound_image(self):
        a = random_interval_matrix(RNG, (3, 3), scale=3.0)
        c = iclip(a, 1.0)
        xs = np.clip(sample_member(RNG, a, 500), -1.0, 1.0)
        assert np.all(xs >= c.lo) and np.all(xs <= c.hi)


class TestSubIntersect:
    def test_sub_containment(self):
        a = random_interval_matrix(RNG, (3, 3))
        b = random_interval_matrix(RNG, (3, 3))
        c = isub(a, b)
        xs = sample_member(RNG, a, 500)
        ys = sample_member(RNG, b, 500)
        assert np.all(xs - ys >= c.lo - 1e-15) and np.all(xs - ys <= c.hi + 1e-15)

    def test_intersect_tightens(self):
        a = IntervalMatrix([[-1.0]], [[1.0]])
        b = IntervalMatrix([[0.0]], [[2.0]])
        c = iintersect(a, b)
        assert c.lo[0, 0] == 0.0 and c.hi[0, 0] == 1.0

    def test_empty_intersection_rejected(self):
        a = IntervalMatrix([[0.0]], [[1.0]])
        b = IntervalMatrix([[2.0]], [[3.0]])
        with pytest.raises(IntervalError):
            iintersect(a, b)


finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(
    a=finite_floats, b=finite_floats, c=finite_floats, d=finite_floats,
    ua=st.floats(0, 1), ub=st.floats(0, 1),
)
def test_scalar_product_containment_property(a, b, c, d, ua, ub):
    """Any member pair's product lies in the elementwise product interval."""
    alo, ahi = min(a, b), max(a, b)
    blo, bhi = min(c, d), max(c, d)
    x = alo + ua * (ahi - alo)
    y = blo + ub * (bhi - blo)
    m = ielemmul(IntervalMatrix([[alo]], [[ahi]]), IntervalMatrix([[blo]], [[bhi]]))
    tol = 1e-9 * max(1.0, abs(x * y))
    assert m.lo[0, 0] - tol <= x * y <= m.hi[0, 0] + tol


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_matmul_monotone_inclusion(data):
    """Enlarging any operand interval never shrinks any output entry."""
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    a = random_interval_matrix(rng, (3, 4))
    b = random_interval_matrix(rng, (4, 2))
    grow = rng.uniform(0, 0.5, size=a.lo.shape)
    a_big = IntervalMatrix(a.lo - grow, a.hi + grow)
    c = imatmul(a, b)
    c_big = imatmul(a_big, b)
    assert np.all(c_big.lo <= c.lo + 1e-12)
    assert np.all(c_big.hi >= c.hi - 1e-12)


def test_degenerate_ops_match_real_arithmetic():
    x = RNG.normal(size=(4, 4))
    y = RNG.normal(size=(4, 4))
    px, py = IntervalMatrix.point(x), IntervalMatrix.point(y)
    checks = [
        (iadd(px, py), x + y),
        (isub(px, py), x - y),
        (ielemmul(px, py), x * y),
        (imatmul(px, py), x @ y),
        (iscale(px, -2.5), -2.5 * x),
        (iclip(px, 0.7), np.clip(x, -0.7, 0.7)),
    ]
    for got, ref in checks:
        assert np.allclose(got.lo, ref, rtol=1e-12, atol=1e-15)
        assert np.allclose(got.hi, ref, rtol=1e-12, atol=1e-15)
