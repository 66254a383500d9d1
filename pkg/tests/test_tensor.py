"""Autodiff engine tests: hand oracles, finite differences, determinism."""

import numpy as np
import pytest

from gxplain import tensor as T
from gxplain.container import load_tensors, save_tensors
from gxplain.errors import ContractError, DomainError, ShapeError
from gxplain.optim import AdamState, adam_step
from gxplain.tensor import Tape, Tensor, backward


def fd_grad(f, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x0)
    flat = x0.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x0)
        flat[i] = orig - h
        lo = f(x0)
        flat[i] = orig
        out[i] = (hi - lo) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal((3, 3))
        out = T.matmul(Tensor(np.eye(3)), Tensor(b))
        assert np.allclose(out.data, b)

    def test_hand_sum(self):
        out = T.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]]))
        assert out.data.tolist() == [[3], [7]]

    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 5))
        b = rng.standard_normal((5, 2))
        expected = np.zeros((4, 2))
        for i in range(4):
            for j in range(2):
                for k in range(5):
                    expected[i, j] += a[i, k] * b[k, j]
        out = T.matmul(Tensor(a), Tensor(b))
        assert np.max(np.abs(out.data - expected)) <= 1e-12

    def test_associativity_against_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            a, b, c = (rng.standard_normal((5, 5)) for _ in range(3))
            left = T.matmul(T.matmul(Tensor(a), Tensor(b)), Tensor(c)).data
            right = T.matmul(Tensor(a), T.matmul(Tensor(b), Tensor(c))).data
            assert np.max(np.abs(left - right)) <= 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestElementwise:
    def test_sigmoid_symmetry(self):
        assert T.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_relu_definition(self):
        assert T.relu(Tensor([-3.2])).data[0] == 0.0

    def test_sigmoid_closed_form(self):
        # sigma(ln 9) = 0.9
        assert abs(T.sigmoid(Tensor([2.1972])).data[0] - 0.9000) <= 1e-4

    def test_log_domain_error(self):
        with pytest.raises(DomainError):
            T.log(Tensor([1.0, 0.0]))

    def test_dispatcher_matches_functions(self):
        x = Tensor([1.0, 2.0])
        assert np.allclose(T.elementwise("exp", x).data, np.exp([1.0, 2.0]))
        assert np.allclose(T.elementwise("add", x, x).data, [2.0, 4.0])

    def test_bad_broadcast_rejected(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.ones(3)), Tensor(np.ones(2)))

    def test_scalar_broadcast(self):
        out = T.mul(Tensor([1.0, 2.0, 3.0]), 2.0)
        assert out.data.tolist() == [2.0, 4.0, 6.0]


class TestReduce:
    def test_sum(self):
        assert T.tsum(Tensor([1.0, 2.0, 3.0])).item() == 6.0

    def test_max_axis(self):
        out = T.tmax(Tensor([[1.0, 5.0], [7.0, 2.0]]), axis=0)
        assert out.data.tolist() == [7.0, 5.0]

    def test_streaming_mean_oracle(self):
        rng = np.random.default_rng(7)
        xs = rng.standard_normal(1000)
        mean = 0.0
        for i, v in enumerate(xs, start=1):
            mean += (v - mean) / i
        assert abs(T.tmean(Tensor(xs)).item() - mean) <= 1e-12

    def test_empty_reduction(self):
        with pytest.raises(DomainError):
            T.tsum(Tensor(np.zeros((0,))))

    def test_dispatcher(self):
        assert T.reduce("mean", Tensor([2.0, 4.0])).item() == 3.0


class TestBackward:
    def test_square(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = T.tsum(T.mul(x, x))
        grads = backward(tape, loss)
        assert grads.wrt(x).tolist() == [6.0]

    def test_sigmoid_matmul_fd(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal((4, 3))
        x = rng.standard_normal((3, 1))
        wt = Tensor(w.copy(), requires_grad=True)
        with Tape() as tape:
            loss = T.tsum(T.sigmoid(T.matmul(wt, Tensor(x))))
        grads = backward(tape, loss)

        def f(w_arr):
            return float(np.sum(1.0 / (1.0 + np.exp(-(w_arr @ x)))))

        assert rel_err(grads.wrt(wt), fd_grad(f, w.copy())) <= 1e-4

    def test_unused_leaf_zero(self):
        x = Tensor([2.0], requires_grad=True)
        unused = Tensor([5.0, 5.0], requires_grad=True)
        with Tape() as tape:
            loss = T.tsum(T.mul(x, x))
        grads = backward(tape, loss)
        assert grads.wrt(unused).tolist() == [0.0, 0.0]
        assert unused not in grads

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = T.mul(x, x)
        with pytest.raises(ContractError):
            backward(tape, y)

    def test_deterministic_two_passes(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal(6), requires_grad=True)
        with Tape() as tape:
            loss = T.tsum(T.sigmoid(T.mul(x, x)))
        g1 = backward(tape, loss).wrt(x)
        g2 = backward(tape, loss).wrt(x)
        assert np.array_equal(g1, g2)

    def test_max_routes_to_argmax_only(self):
        x = Tensor([1.0, 4.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = T.tmax(x)
        grads = backward(tape, loss)
        assert grads.wrt(x).tolist() == [0.0, 1.0, 0.0]


PRIMITIVES_FOR_FD = {
    "add": (lambda a, b: T.tsum(T.add(a, b)), 2),
    "sub": (lambda a, b: T.tsum(T.sub(a, b)), 2),
    "mul": (lambda a, b: T.tsum(T.mul(a, b)), 2),
    "neg": (lambda a: T.tsum(T.neg(a)), 1),
    "sigmoid": (lambda a: T.tsum(T.sigmoid(a)), 1),
    "exp": (lambda a: T.tsum(T.exp(a)), 1),
    "log": (lambda a: T.tsum(T.log(a)), 1),
    "relu": (lambda a: T.tsum(T.relu(a)), 1),
    "power": (lambda a: T.tsum(T.power(a, 1.5)), 1),
    "mean": (lambda a: T.tmean(a), 1),
    "matmul": (lambda a, b: T.tsum(T.matmul(a, b)), "matmul"),
    "take_rows": (lambda a: T.tsum(T.mul(T.take_rows(a, [0, 2, 2]), T.take_rows(a, [1, 0, 2]))), "matrix"),
    "diag": (lambda a: T.tsum(T.sigmoid(T.diag(a))), 1),
    "clamp": (lambda a: T.tsum(T.clamp(a, 0.2, 0.8)), 1),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES_FOR_FD))
def test_primitive_gradients_match_fd(name):
    """Property: reverse-mode grad matches central FD on 100 random points."""
    fn, arity = PRIMITIVES_FOR_FD[name]
    rng = np.random.default_rng(hash(name) % 2**31)
    for trial in range(100):
        if arity == "matmul":
            a = rng.standard_normal((3, 4))
            b = rng.standard_normal((4, 2))
            at, bt = Tensor(a.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True)
            with Tape() as tape:
                loss = fn(at, bt)
            grads = backward(tape, loss)

            def fa(arr):
                return float(np.sum(arr @ b))

            def fb(arr):
                return float(np.sum(a @ arr))

            assert rel_err(grads.wrt(at), fd_grad(fa, a.copy())) <= 1e-4
            assert rel_err(grads.wrt(bt), fd_grad(fb, b.copy())) <= 1e-4
            continue
        if arity == "matrix":
            x = rng.standard_normal((3, 2))
        elif name == "log":
            x = rng.uniform(0.1, 3.0, size=5)
        elif name == "relu":
            # keep away from the kink where FD is invalid
            x = rng.standard_normal(5)
            x = np.where(np.abs(x) < 1e-3, 0.5, x)
        elif name == "power":
            x = rng.uniform(0.1, 2.0, size=5)
        elif name == "clamp":
            x = rng.uniform(0.0, 1.0, size=5)
            x = np.where(np.abs(x - 0.2) < 1e-3, 0.5, x)
            x = np.where(np.abs(x - 0.8) < 1e-3, 0.5, x)
        else:
            x = rng.standard_normal(5)
        if arity == 2:
            y = rng.standard_normal(x.shape)
            xt, yt = Tensor(x.copy(), requires_grad=True), Tensor(y.copy(), requires_grad=True)
            with Tape() as tape:
                loss = fn(xt, yt)
            grads = backward(tape, loss)

            def fx(arr):
                with Tape():
                    return fn(Tensor(arr), Tensor(y)).item()

            def fy(arr):
                with Tape():
                    return fn(Tensor(x), Tensor(arr)).item()

            assert rel_err(grads.wrt(xt), fd_grad(fx, x.copy())) <= 1e-4
            assert rel_err(grads.wrt(yt), fd_grad(fy, y.copy())) <= 1e-4
        else:
            xt = Tensor(x.copy(), requires_grad=True)
            with Tape() as tape:
                loss = fn(xt)
            grads = backward(tape, loss)

            def f(arr):
                with Tape():
                    return fn(Tensor(arr)).item()

            assert rel_err(grads.wrt(xt), fd_grad(f, x.copy())) <= 1e-4


def test_edge_adjacency_and_incidence_gradients():
    rng = np.random.default_rng(9)
    pairs = np.array([[0, 1], [1, 2], [0, 2]])
    w = rng.uniform(0.1, 1.0, size=3)
    wt = Tensor(w.copy(), requires_grad=True)
    m = rng.standard_normal((3, 3))
    with Tape() as tape:
        a = T.edge_adjacency(wt, pairs, 3)
        inc = T.edge_incidence(wt, pairs, 3)
        loss = T.add(T.tsum(T.mul(a, Tensor(m))), T.tsum(T.sigmoid(inc)))
    grads = backward(tape, loss)

    def f(arr):
        aa = np.zeros((3, 3))
        aa[pairs[:, 0], pairs[:, 1]] = arr
        aa[pairs[:, 1], pairs[:, 0]] = arr
        ii = np.zeros((3, 3))
        ii[pairs[:, 0], np.arange(3)] = arr
        ii[pairs[:, 1], np.arange(3)] = arr
        return float(np.sum(aa * m) + np.sum(1 / (1 + np.exp(-ii))))

    assert rel_err(grads.wrt(wt), fd_grad(f, w.copy())) <= 1e-4


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = Tensor([1.0, -2.0], requires_grad=True)
        state = AdamState()
        before = p.data.copy()
        with Tape() as tape:
            loss = T.tsum(T.mul(Tensor([5.0]), Tensor([5.0])))
        grads = backward(tape, loss)
        adam_step({"p": p}, grads, state, lr=0.1)
        assert np.array_equal(p.data, before)
        assert np.allclose(state.m["p"], 0.0) and np.allclose(state.v["p"], 0.0)

    def test_descent_direction(self):
        p = Tensor([1.0], requires_grad=True)
        state = AdamState()
        with Tape() as tape:
            loss = T.tsum(T.mul(p, p))
        grads = backward(tape, loss)
        adam_step({"p": p}, grads, state, lr=0.1)
        assert p.data[0] < 1.0

    def test_quadratic_convergence(self):
        # f(x) = (x0 - 3)^2 + 2 (x1 + 1)^2, minimizer (3, -1)
        p = Tensor([0.0, 0.0], requires_grad=True)
        state = AdamState()
        target = Tensor([3.0, -1.0])
        scale = Tensor([1.0, 2.0])
        for _ in range(500):
            with Tape() as tape:
                d = T.sub(p, target)
                loss = T.tsum(T.mul(scale, T.mul(d, d)))
            grads = backward(tape, loss)
            adam_step({"p": p}, grads, state, lr=0.05)
        assert np.max(np.abs(p.data - np.array([3.0, -1.0]))) <= 1e-3


class TestCheckpoint:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        tensors = {
            "a.w": rng.standard_normal((4, 3)),
            "b": rng.standard_normal(7),
            "scalar": np.array(3.25),
        }
        path = tmp_path / "params.bin"
        save_tensors(path, tensors)
        loaded = load_tensors(path)
        assert set(loaded) == set(tensors)
        for name, arr in tensors.items():
            assert loaded[name].data.shape == arr.shape
            assert np.array_equal(loaded[name].data, arr)
            assert loaded[name].data.tobytes() == np.ascontiguousarray(arr).tobytes()

    def test_atomic_write_on_failure(self, tmp_path):
        from gxplain.container import atomic_write_bytes
        path = tmp_path / "out.bin"

        def boom(fh):
            fh.write(b"partial")
            raise RuntimeError("interrupted")

        with pytest.raises(RuntimeError):
            atomic_write_bytes(path, boom)
        assert not path.exists()
        assert list(tmp_path.iterdir()) == []


def test_tensor_finite_invariant_on_ops():
    with pytest.raises(DomainError):
        T.exp(Tensor([1e4]))
