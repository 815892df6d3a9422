import numpy as np
import pytest

from mmkp import autodiff as ad
from mmkp.errors import ContractError

from gradcheck import analytic_grads, fd_grads


def _check(loss_fn, params, tol=1e-6):
    an, _ = analytic_grads(loss_fn, params)
    fd = fd_grads(loss_fn, params)
    for a, f in zip(an, fd):
        assert np.max(np.abs(a - f)) < tol, (a, f)


def _p(shape, seed):
    rng = np.random.default_rng(seed)
    return ad.tensor(rng.uniform(-0.8, 0.8, size=shape), requires_grad=True)


pytestmark = pytest.mark.usefixtures("float64")


def test_add_mul_broadcast():
    a, b = _p((3, 4), 1), _p((4,), 2)
    _check(lambda: ad.sum_all(ad.mul(ad.add(a, b), a)), [a, b])


def test_scalar_and_elementwise():
    a = _p((5,), 3)
    _check(lambda: ad.sum_all(ad.smul(ad.tanh(a), 2.5)), [a])
    _check(lambda: ad.sum_all(ad.sigmoid(a)), [a])
    _check(lambda: ad.sum_all(ad.relu(ad.add(a, 0.3))), [a])


def test_log_div():
    a = _p((4,), 4)
    b = _p((4,), 5)
    pos_a = ad.add(ad.sigmoid(a), 0.1)
    pos_b = ad.add(ad.sigmoid(b), 0.1)
    _check(lambda: ad.sum_all(ad.log(ad.div(pos_a, pos_b))), [a, b])


def test_matrix_products():
    m, v, w = _p((3, 4), 6), _p((4,), 7), _p((4, 3), 8)
    _check(lambda: ad.sum_all(ad.matmul(m, ad.softmax(w, axis=-1))), [m, w])
    _check(lambda: ad.sum_all(ad.matvec(m, v)), [m, v])
    _check(lambda: ad.sum_all(ad.vecmat(v, ad.softmax(w, axis=-1))), [v, w])


def test_affine_linear_rows():
    x, w, b = _p((4,), 9), _p((4, 3), 10), _p((3,), 11)
    _check(lambda: ad.sum_all(ad.tanh(ad.affine(x, w, b))), [x, w, b])
    xs = _p((5, 4), 12)
    _check(lambda: ad.sum_all(ad.tanh(ad.linear_rows(xs, w, b))), [xs, w, b])


def test_shape_ops():
    a, b = _p((2, 3), 13), _p((2, 3), 14)
    _check(lambda: ad.sum_all(ad.mul(ad.concat([a, b], axis=1), 1.0)), [a, b])
    v = _p((3,), 15)
    _check(lambda: ad.sum_all(ad.mul(ad.tile_rows(v, 4), a.data[0, 0])), [v])
    _check(lambda: ad.sum_all(ad.mul(ad.flip_rows(a), b)), [a, b])
    _check(lambda: ad.gather(ad.row(a, 1), 2), [a])


def test_indexing_ops():
    table = _p((6, 3), 16)
    _check(lambda: ad.sum_all(ad.tanh(ad.embed(table, [0, 2, 2, 5]))), [table])
    v = _p((5,), 17)
    _check(lambda: ad.sum_all(ad.gather_vec(v, [0, 3, 3])), [v])
    _check(lambda: ad.sum_all(ad.scatter_sum(v, [0, 1, 1, 2, 0], 4)), [v])
    _check(lambda: ad.sum_all(ad.pad_to(v, 9)), [v])


def test_softmax_layer_norm_pool():
    x = _p((4,), 18)
    _check(lambda: ad.gather(ad.softmax(x), 1), [x])
    g, b = _p((4,), 19), _p((4,), 20)
    _check(lambda: ad.sum_all(ad.mul(ad.layer_norm(x, g, b), x)), [x, g, b])
    m = _p((3, 4), 21)
    _check(lambda: ad.sum_all(ad.pool(m, "avg")), [m])
    _check(lambda: ad.sum_all(ad.pool(m, "max")), [m])


def test_softmax_rows_sum_to_one():
    m = _p((3, 5), 22)
    out = ad.softmax(m, axis=-1)
    assert np.allclose(out.data.sum(axis=-1), 1.0)


def test_tape_single_use():
    a = _p((2,), 23)
    with ad.Tape() as tape:
        loss = ad.sum_all(a)
    tape.backward(loss)
    with pytest.raises(ContractError):
        tape.backward(loss)


def test_backward_requires_scalar():
    a = _p((2,), 24)
    with ad.Tape() as tape:
        out = ad.tanh(a)
    with pytest.raises(ContractError):
        tape.backward(out)


def test_no_tape_no_graph():
    a = _p((3,), 25)
    out = ad.tanh(a)
    assert out.data.shape == (3,)
    assert a.grad is None


def test_max_pool_first_index_ties():
    data = np.array([[1.0, 2.0], [1.0, 2.0]])
    x = ad.tensor(data, requires_grad=True)
    with ad.Tape() as tape:
        loss = ad.sum_all(ad.pool(x, "max"))
    tape.backward(loss)
    assert np.array_equal(x.grad, np.array([[1.0, 1.0], [0.0, 0.0]]))
