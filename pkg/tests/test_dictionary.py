import numpy as np
import pytest

from hadcs.channel import Image, MeasurementVector
from hadcs.corpus import full_corpus
from hadcs.dictionary import (
    CodeStack,
    DictionaryStack,
    TrainConfig,
    TrainingDiverged,
    decode,
    encode,
    init_stack,
    load_stack,
    loss,
    mutual_coherence_effective,
    save_loss_trace,
    save_stack,
    train,
)
from hadcs.sensing import SensingMatrix, build_sensing_matrix, mutual_coherence


def dense(A):
    A = np.asarray(A, float)
    return SensingMatrix(A, tuple(range(A.shape[0])), None)


def test_init_stack():
    st = init_stack([4, 4], seed=3)
    assert st.depth == 1 and st.layers[0].shape == (4, 4)
    assert np.allclose(np.linalg.norm(st.layers[0], axis=0), 1.0, atol=1e-6)
    again = init_stack([4, 4], seed=3)
    assert np.array_equal(st.layers[0], again.layers[0])
    big = init_stack([1763, 512, 128], seed=0)
    assert [D.shape for D in big.layers] == [(1763, 512), (512, 128)]
    assert big.layer_dims == [1763, 512, 128]
    with pytest.raises(ValueError):
        init_stack([5])
    with pytest.raises(ValueError):
        init_stack([5, 0])
    with pytest.raises(ValueError):
        DictionaryStack([np.eye(3), np.eye(4)])


def test_encode_examples():
    ident = DictionaryStack([np.eye(3)])
    x = Image(np.array([[0.5, -2.0, 1.0]]))
    codes = encode(ident, x, TrainConfig(alphas=(0.0,), code_iters=5))
    assert np.allclose(codes.top, x.flat())
    D = np.random.default_rng(0).standard_normal((5, 3))
    D /= np.linalg.norm(D, axis=0)
    st = DictionaryStack([D])
    y = Image(np.arange(5.0)[None, :])
    huge = float(np.abs(D.T @ y.flat()).max())
    assert not encode(st, y, TrainConfig(alphas=(huge,), code_iters=50)).top.any()
    # x = (3, 0) against the unit basis with alpha 1: one soft-threshold step
    two = DictionaryStack([np.eye(2)])
    z = encode(two, Image(np.array([[3.0, 0.0]])), TrainConfig(alphas=(1.0,), code_iters=1)).top
    assert np.allclose(z, [2.0, 0.0])
    with pytest.raises(ValueError):
        encode(two, Image(np.zeros((1, 3))), TrainConfig(alphas=(1.0,)))


def test_decode_examples(rng):
    st = init_stack([12, 8, 5, 3], seed=1)
    assert not decode(st, CodeStack([np.zeros(8), np.zeros(5), np.zeros(3)])).pixels.any()
    z = rng.standard_normal(3)
    expect = st.layers[0] @ (st.layers[1] @ (st.layers[2] @ z))
    out = decode(st, CodeStack([None, None, z]), 3, 4)
    assert out.pixels.shape == (3, 4)
    assert np.allclose(out.flat(), expect, rtol=1e-12, atol=1e-12)
    ident = DictionaryStack([np.eye(4)])
    assert np.array_equal(decode(ident, CodeStack([np.arange(4.0)])).flat(), np.arange(4.0))
    with pytest.raises(ValueError):
        decode(st, CodeStack([np.zeros(4)]))


def test_encode_decode_round_trip_in_range(rng):
    st = init_stack([20, 10], seed=2)
    z = rng.standard_normal(10)
    img = Image((st.layers[0] @ z)[None, :])
    codes = encode(st, img, TrainConfig(alphas=(0.0,), code_iters=20000))
    assert np.allclose(decode(st, codes).flat(), img.flat(), atol=1e-6)


def straight_line_loss(layers, codes, P, S, T, alphas, beta, gamma):
    Pp = codes[-1]
    for D in layers[::-1]:
        Pp = D @ Pp
    a_term = sum(a * np.sum(np.abs(z)) for a, z in zip(alphas, codes))
    e1 = np.sum((Pp - P) ** 2)
    e2 = np.sum((S @ Pp - T) ** 2)
    return a_term + beta * e1 + gamma * e2


def test_loss_examples(rng):
    st = init_stack([6, 4, 2], seed=5)
    S = rng.integers(0, 2, (3, 6)).astype(float)
    z2 = rng.standard_normal(2)
    codes = CodeStack([st.layers[1] @ z2, z2])
    P = st.layers[0] @ codes.codes[0]
    cfg = TrainConfig(alphas=(0.2, 0.3), beta=0.7, gamma=1.3)
    bd = loss(st, codes, Image(P[None, :]), dense(S), MeasurementVector(S @ P), cfg)
    assert bd.image_mse == pytest.approx(0.0, abs=1e-24) and bd.meas_mse == pytest.approx(0.0, abs=1e-24)
    # zero codes, no l1 weight
    P2 = rng.random(6)
    T2 = rng.random(3)
    zero = CodeStack([np.zeros(4), np.zeros(2)])
    cfg0 = TrainConfig(alphas=(0.0, 0.0), beta=0.7, gamma=1.3)
    bd = loss(st, zero, Image(P2[None, :]), dense(S), MeasurementVector(T2), cfg0)
    assert bd.total == pytest.approx(0.7 * P2 @ P2 + 1.3 * T2 @ T2, rel=1e-14)
    # random instance against the straight-line formula
    c = [rng.standard_normal(4), rng.standard_normal(2)]
    bd = loss(st, CodeStack(c), Image(P2[None, :]), dense(S), MeasurementVector(T2), cfg)
    ref = straight_line_loss(st.layers, c, P2, S, T2, cfg.alphas, cfg.beta, cfg.gamma)
    assert bd.total == pytest.approx(ref, rel=1e-12)
    assert bd.total == pytest.approx(bd.l1_codes + cfg.beta * bd.image_mse + cfg.gamma * bd.meas_mse, rel=1e-14)


def test_train_config_validation():
    for bad in (dict(alphas=(-1.0,)), dict(beta=0, gamma=0), dict(epochs=0), dict(dict_step=0), dict(beta=-1)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_train_memorises_single_image(rng):
    P = rng.random((3, 4))
    S = dense(np.eye(12)[:5])
    st, hist = train([Image(P)], S, TrainConfig(alphas=(0.0,), gamma=0.0, epochs=200, code_iters=50), layer_dims=[12, 12])
    assert hist[-1].image_mse < 1e-8


def test_train_spans_orthogonal_pair():
    a = np.zeros(8)
    a[:4] = 1.0
    b = np.zeros(8)
    b[4:6] = 1.0
    imgs = [Image(a[None, :]), Image(b[None, :])]
    S = dense(np.eye(8)[::2])
    st, _ = train(imgs, S, TrainConfig(alphas=(0.0,), epochs=100, code_iters=50), layer_dims=[8, 2])
    D = st.layers[0]
    Q, _ = np.linalg.qr(D)
    for v in (a, b):
        assert np.linalg.norm(v - Q @ (Q.T @ v)) < 1e-3


def test_train_contracts(small_stack):
    stack, hist = small_stack
    totals = [h.total for h in hist]
    assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))
    assert totals[-1] < totals[0]
    for norms in stack.column_norms():
        assert np.allclose(norms, 1.0, atol=1e-6)
    assert stack.epochs_trained == 30


def test_train_deterministic(mask143):
    s = build_sensing_matrix(mask143, list(range(0, 143, 5)))
    corpus = full_corpus(11, 13)[:5]
    cfg = TrainConfig(alphas=(0.01, 0.01), epochs=4, code_iters=20, seed=9)
    a, ha = train(corpus, s, cfg, layer_dims=[143, 20, 8])
    b, hb = train(corpus, s, cfg, layer_dims=[143, 20, 8])
    assert ha == hb
    assert all(np.array_equal(x, y) for x, y in zip(a.layers, b.layers))


def test_train_errors(mask143):
    s = build_sensing_matrix(mask143, [0, 1])
    with pytest.raises(ValueError):
        train([], s, TrainConfig())
    with pytest.raises(ValueError):
        train([Image(np.zeros((11, 13))), Image(np.zeros((13, 11)))], s, TrainConfig())
    with pytest.raises(ValueError):
        train(full_corpus(11, 13)[:2], s, TrainConfig(alphas=(0.1,)), layer_dims=[143, 10, 5])


def test_train_divergence_is_reported():
    # two huge orthogonal images cannot share one atom: the loss stays above the limit
    imgs = [Image(np.diag([1e7, 0.0])), Image(np.diag([0.0, 1e7]))]
    with pytest.raises(TrainingDiverged):
        train(imgs, dense(np.eye(4)), TrainConfig(alphas=(0.0,), epochs=2, code_iters=1), layer_dims=[4, 1])


def test_effective_coherence(rng, mask15):
    s = build_sensing_matrix(mask15, [0, 3, 5, 9])
    ident = DictionaryStack([np.eye(15)])
    assert mutual_coherence_effective(s, ident).mu == pytest.approx(mutual_coherence(s).mu, abs=1e-15)
    st = init_stack([15, 7, 4], seed=4)
    full_id = dense(np.eye(15))
    assert mutual_coherence_effective(full_id, st).mu == pytest.approx(mutual_coherence(st.product()).mu, abs=1e-12)
    A = rng.standard_normal((3, 15))
    B = st.product()
    E = A @ B
    brute = max(abs(E[:, i] @ E[:, j]) / np.linalg.norm(E[:, i]) / np.linalg.norm(E[:, j]) for i in range(4) for j in range(i + 1, 4))
    assert mutual_coherence_effective(dense(A), st).mu == pytest.approx(brute, abs=1e-12)


def test_stack_round_trip(tmp_path, small_stack):
    stack, hist = small_stack
    save_stack(stack, tmp_path / "d.txt")
    back = load_stack(tmp_path / "d.txt")
    assert back.layer_dims == stack.layer_dims and back.seed == stack.seed
    assert back.epochs_trained == stack.epochs_trained and back.alphas == stack.alphas
    assert all(np.array_equal(a, b) for a, b in zip(back.layers, stack.layers))
    save_loss_trace(hist, tmp_path / "l.csv")
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "epoch,l1_codes,image_mse,meas_mse,total" and len(lines) == len(hist) + 1
