import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from helpers import finite_difference_audit

from vqt.errors import NumericError
from vqt.qtransformer import (
    DEFAULT,
    LARGE,
    ModelConfig,
    QuantumKernel,
    build_model,
    cross_entropy,
    load_checkpoint,
    make_windows,
    q_dim,
    quantum_perplexity,
    qubit_bounds,
    save_checkpoint,
    straight_through_backward,
    train,
)
from vqt.qtransformer import training as train_mod
from vqt.qtransformer.quantum import QKScores, VNQEFeatures

TINY = ModelConfig(vocab_size=10, seq_len=4, d_model=8, d_ff=16, d_mlp=16, nq_addr=2, nq_data=2)


def tokens(cfg, batch=3, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randint(0, cfg.vocab_size, (batch, cfg.seq_len), generator=g)


# ---------------------------------------------------------------- config


def test_defaults():
    assert (DEFAULT.vocab_size, DEFAULT.seq_len, DEFAULT.d_model, DEFAULT.d_ff) == (100, 6, 32, 128)
    assert (DEFAULT.n_blocks, DEFAULT.n_heads, DEFAULT.shots, DEFAULT.d_mlp) == (1, 2, 1024, 128)
    assert (DEFAULT.dropout, DEFAULT.lr, DEFAULT.batch_size) == (0.0, 1e-3, 5)
    assert DEFAULT.q_dim == 24 and LARGE.q_dim == 384


def test_q_dim_and_bounds():
    assert q_dim(3, 3) == 24 and q_dim(6, 6) == 384
    assert qubit_bounds(32)[1] == 6
    for N in range(2, 10):
        assert q_dim(N - 1, 1) == 2 ** (N - 1)
    with pytest.raises(ValueError):
        qubit_bounds(0)


@given(st.integers(1, 5000))
def test_exact_bound_never_exceeds_loose(qdim):
    exact, loose = qubit_bounds(qdim)
    assert exact <= loose
    # some (k address, rest data) split of `exact` qubits holds qdim values
    assert any(2**k * (exact - k) >= qdim for k in range(0, exact))


def test_config_round_trip_and_errors():
    assert ModelConfig.from_dict(DEFAULT.to_dict()) == DEFAULT
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ModelConfig(attn_norm="none")
    with pytest.raises(ValueError):
        ModelConfig(dropout=1.0)


# ---------------------------------------------------------------- embedding and heads


def test_embed_is_token_plus_position():
    model = build_model(TINY, 0)
    tok = torch.tensor([[3, 1, 4, 1]])
    z = model.embed(tok)
    for p in range(4):
        assert torch.equal(z[0, p], model.tok_emb.weight[tok[0, p]] + model.pos_emb.weight[p])
    with torch.no_grad():
        model.tok_emb.weight.zero_()
        model.pos_emb.weight.zero_()
    assert torch.count_nonzero(model.embed(tok)) == 0


def test_embed_rejects_out_of_vocab():
    model = build_model(TINY, 0)
    with pytest.raises(ValueError, match="token ids"):
        model.embed(torch.tensor([[0, 10, 1, 2]]))


def test_zero_input_gives_uniform_causal_attention():
    head = build_model(TINY, 0).blocks[0].heads[0]
    out = head.tanh_forward(torch.zeros(2, 4, 8, dtype=torch.float64), QuantumKernel())
    assert torch.count_nonzero(out.scores) == 0
    expected = torch.tril(torch.ones(4, 4)) / torch.arange(1, 5)[:, None]
    assert torch.allclose(out.attention[0], expected.double())


def classical_forward(model, tok):
    """Plain torch reference with the same weights and no circuits."""
    cfg = model.cfg
    z = model.embed(tok)
    T = tok.shape[1]
    mask = torch.tril(torch.ones(T, T, dtype=torch.bool))
    for block in model.blocks:
        outs = []
        for h in block.heads:
            q, k, v = torch.tanh(h.w_q(z)), torch.tanh(h.w_k(z)), torch.tanh(h.w_v(z))
            s = (q @ k.transpose(1, 2)) / math.sqrt(cfg.d_model)
            a = torch.softmax(s.masked_fill(~mask, float("-inf")), dim=-1)
            outs.append(a @ v + h.expr_proj(torch.tanh(h.angle_mlp(z))))
        z = block.ln1(z + block.w_o(torch.cat(outs, dim=-1)))
        z = block.ln2(z + block.ff(z))
    return model.head(z)


@pytest.mark.parametrize("backend", ["analytic", "statevector"])
def test_exact_mode_equals_classical_reference(backend):
    model = build_model(TINY, 1)
    tok = tokens(TINY)
    quantum = model(tok, QuantumKernel("exact", backend=backend))
    assert torch.max(torch.abs(quantum - classical_forward(model, tok))) < 1e-8


def test_exact_mode_is_deterministic():
    model = build_model(TINY, 2)
    tok = tokens(TINY)
    assert torch.equal(model(tok), model(tok))


def test_circuit_budget():
    for cfg in (TINY, DEFAULT, DEFAULT.replace(n_blocks=2, n_heads=3)):
        model = build_model(cfg, 0)
        kernel = QuantumKernel()
        model(tokens(cfg, batch=2), kernel)
        H, blocks, d = cfg.n_heads, cfg.n_blocks, cfg.d_model
        assert kernel.circuits == H * blocks * 2 * d + H * blocks


def test_causality():
    model = build_model(TINY, 3)
    tok = tokens(TINY, batch=1)
    base = model(tok)
    for j in range(TINY.seq_len):
        changed = tok.clone()
        changed[0, j] = (changed[0, j] + 1) % TINY.vocab_size
        out = model(changed)
        assert torch.equal(out[0, :j], base[0, :j])


def test_scale_only_normalisation_keeps_range():
    cfg = TINY.replace(attn_norm="scale_only")
    model = build_model(cfg, 0)
    out = model.blocks[0].heads[0].tanh_forward(model.embed(tokens(cfg)), QuantumKernel())
    assert out.attention.abs().max() <= 1.0
    assert torch.count_nonzero(torch.triu(out.attention[0], diagonal=1)) == 0


# ---------------------------------------------------------------- VNQE


@pytest.mark.parametrize("backend", ["analytic", "statevector"])
def test_vnqe_exact_mode_returns_its_input(backend, rng):
    a = torch.as_tensor(rng.uniform(-1, 1, (2, 3, 24)))
    out = VNQEFeatures.apply(a, QuantumKernel(backend=backend), 3, 3)
    assert torch.max(torch.abs(out - a)) < 1e-10
    zero = VNQEFeatures.apply(torch.zeros(1, 24, dtype=torch.float64), QuantumKernel(), 3, 3)
    assert zero.abs().max() < 1e-12


def test_vnqe_shape_mismatch():
    with pytest.raises(ValueError, match="holds 24"):
        VNQEFeatures.apply(torch.zeros(1, 20, dtype=torch.float64), QuantumKernel(), 3, 3)


def test_vnqe_sampled_is_noisy_but_centred(rng):
    a = torch.as_tensor(rng.uniform(-1, 1, (200, 24)))
    out = VNQEFeatures.apply(a, QuantumKernel("sampled", shots=1024, seed=0), 3, 3)
    err = (out - a).numpy()
    assert 0 < np.abs(err).max() < 0.2
    assert abs(err.mean()) < 4 * err.std() / np.sqrt(err.size)


def test_straight_through_is_identity():
    g = torch.randn(3, 5)
    assert straight_through_backward(g) is g
    a = torch.rand(2, 24, dtype=torch.float64, requires_grad=True)
    VNQEFeatures.apply(a, QuantumKernel("sampled", seed=1), 3, 3).sum().backward()
    assert torch.equal(a.grad, torch.ones_like(a))


# ---------------------------------------------------------------- gradients


def test_gradient_audit_tiny_config():
    model = build_model(TINY, 4)
    tok = tokens(TINY, batch=2, seed=4)
    nxt = tokens(TINY, batch=2, seed=5)
    worst = finite_difference_audit(model, lambda: cross_entropy(model(tok), nxt))
    bad = {k: v for k, v in worst.items() if v > 1e-4}
    assert not bad, bad


def test_qk_gradient_is_matmul_jacobian(rng):
    Q = torch.as_tensor(rng.uniform(-1, 1, (2, 3, 4)), dtype=torch.float64).requires_grad_()
    K = torch.as_tensor(rng.uniform(-1, 1, (2, 3, 4)), dtype=torch.float64).requires_grad_()
    torch.autograd.gradcheck(lambda q, k: QKScores.apply(q, k, QuantumKernel()), (Q, K))


def test_sampled_gradient_centred_on_exact():
    model = build_model(TINY, 6)
    tok, nxt = tokens(TINY, seed=6), tokens(TINY, seed=7)
    head = model.blocks[0].heads[0]
    params = [head.angle_mlp[0].weight, head.w_q.weight]
    direction = [torch.randn(p.shape, generator=torch.Generator().manual_seed(i), dtype=torch.float64)
                 for i, p in enumerate(params)]

    def projected(kernel):
        model.zero_grad()
        cross_entropy(model(tok, kernel), nxt).backward()
        return sum(float((p.grad * d).sum()) for p, d in zip(params, direction))

    exact = projected(QuantumKernel())
    samples = np.array([projected(QuantumKernel("sampled", 1024, seed=s)) for s in range(100)])
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(samples.mean() - exact) <= 3 * se


def test_score_std_within_shot_budget(rng):
    d, M = 32, 1024
    Q = torch.as_tensor(rng.uniform(-1, 1, (1, 6, d)))
    K = torch.as_tensor(rng.uniform(-1, 1, (1, 6, d)))
    runs = np.stack([QKScores.apply(Q, K, QuantumKernel("sampled", M, seed=s)).numpy() for s in range(300)])
    assert runs.var(axis=0, ddof=1).mean() <= d * (1.0 / M)


# ---------------------------------------------------------------- perplexity, training, checkpoints


def test_perplexity_identities():
    V = 100
    assert quantum_perplexity(torch.zeros(2, 3, V), torch.zeros(2, 3, dtype=torch.long)) == pytest.approx(100)
    perfect = torch.full((1, 2, V), -1e4, dtype=torch.float64)
    perfect[0, 0, 5] = perfect[0, 1, 7] = 0
    assert quantum_perplexity(perfect, torch.tensor([[5, 7]])) == pytest.approx(1.0)
    logits = torch.randn(3, 4, V, dtype=torch.float64)
    tgt = torch.randint(0, V, (3, 4))
    assert quantum_perplexity(logits, tgt) == pytest.approx(math.exp(cross_entropy(logits, tgt)), rel=1e-12)
    with pytest.raises(ValueError):
        quantum_perplexity(logits, tgt[:, :2])


def test_untrained_loss_near_uniform_baseline():
    model = build_model(DEFAULT, 0)
    tok = tokens(DEFAULT, batch=5)
    with torch.no_grad():
        logits = model(tok[:, :-1].contiguous())
    assert torch.isfinite(logits).all()
    assert abs(float(cross_entropy(logits, tok[:, 1:])) - math.log(100)) < 0.5


def test_no_dropout_modules_at_rho_zero():
    model = build_model(DEFAULT, 0)
    assert not any(isinstance(m, torch.nn.Dropout) for m in model.modules())
    assert any(isinstance(m, torch.nn.Dropout) for m in build_model(DEFAULT.replace(dropout=0.1)).modules())


def test_windows():
    w = make_windows(np.arange(14), 6)
    assert w.tolist() == [list(range(7)), list(range(6, 13))]
    with pytest.raises(ValueError):
        make_windows(np.arange(5), 6)


def test_short_training_run(rng):
    cfg = TINY
    stream = np.tile(np.arange(10), 30)
    res = train(stream, cfg, epochs=8, seed=0)
    assert len(res.log) == 9
    assert res.losses[-1] < 0.6 * res.losses[0]
    for e in res.log:
        assert e.qpl == pytest.approx(math.exp(e.loss), rel=1e-12)
    again = train(stream, cfg, epochs=8, seed=0)
    assert again.losses == res.losses


def test_training_rejects_tiny_corpus():
    with pytest.raises(ValueError, match="fewer than one batch"):
        train(np.arange(10), TINY, epochs=1)


def test_nan_loss_aborts(monkeypatch):
    def nan_loss(logits, targets):
        return (logits * float("nan")).sum()

    monkeypatch.setattr(train_mod, "cross_entropy", nan_loss)
    with pytest.raises(NumericError, match="non-finite"):
        train(np.tile(np.arange(10), 10), TINY, epochs=1)


def test_checkpoint_round_trip(tmp_path):
    model = build_model(TINY.replace(attn_norm="scale_only"), 9)
    path = tmp_path / "m.npz"
    save_checkpoint(path, model)
    back = load_checkpoint(path)
    assert back.cfg == model.cfg
    tok = tokens(TINY)
    assert torch.equal(back(tok), model(tok))


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, __meta__=np.frombuffer(b'{"format": "other"}', dtype=np.uint8))
    with pytest.raises(ValueError):
        load_checkpoint(path)
