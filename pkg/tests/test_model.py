import json

import numpy as np
import pytest
import torch

from trajforge.errors import DataIOError, IndexMapMismatch
from trajforge.masking import MaskedTrajectory, mask_random
from trajforge.model import (ModelConfig, RotarySelfAttention, attention_block, build_model,
                             collate, count_parameters, decode, encode, gradients,
                             load_checkpoint, masked_loss, normalized_offsets, reconstruct,
                             reorder_merge, rope_rotate, save_checkpoint, tokenize)


@pytest.fixture
def samples(random_walk):
    return [mask_random(random_walk("a", 9, seed=1), 0.5, 1),
            mask_random(random_walk("b", 6, seed=2), 0.5, 2)]


def test_rope_preserves_norm_and_position_zero():
    v = torch.randn(5, 8, dtype=torch.float64)
    assert torch.allclose(rope_rotate(v, 0), v)
    rotated = rope_rotate(v, torch.arange(5))
    assert torch.allclose(rotated.norm(dim=-1), v.norm(dim=-1))


@pytest.mark.parametrize("shift", [1, 7, 31])
def test_rope_logits_depend_on_relative_offset(shift):
    torch.manual_seed(0)
    attention = RotarySelfAttention(8, 1).to(torch.float64)
    x = torch.randn(1, 1, 8, dtype=torch.float64).expand(1, 6, 8)
    base = torch.arange(6).unsqueeze(0)
    logits = attention.logits(x, base)[0, 0]
    shifted = attention.logits(x, base + shift)[0, 0]
    assert torch.allclose(logits, shifted, atol=1e-6)
    # content-identical tokens: logits constant along each diagonal
    for offset in range(-5, 6):
        diagonal = torch.diagonal(logits, offset)
        assert torch.allclose(diagonal, diagonal[0].expand_as(diagonal), atol=1e-6)


def test_collate_layout(samples, tiny_config):
    batch = collate(samples, tiny_config)
    assert batch.lengths == [9, 6]
    assert batch.target.shape == (2, 9, 2)
    assert batch.enc_coords.shape[1] == max(len(s.visible_indices) for s in samples)
    first = samples[0]
    assert batch.enc_pos[0, :len(first.visible_indices)].tolist() == first.visible_indices.tolist()
    assert batch.loss_mask[0].nonzero().flatten().tolist() == first.masked_indices.tolist()
    assert not batch.dec_valid[1, 6:].any()
    assert batch.enc_dt[0, 0] == 0.0
    expected = normalized_offsets(first.base, tiny_config.coord_scale)
    assert np.allclose(batch.target[0].numpy(), expected, atol=1e-5)


def test_collate_rejects_long_sequences(random_walk, tiny_config):
    too_long = mask_random(random_walk("long", 80, seed=0), 0.5, 0)
    with pytest.raises(IndexMapMismatch):
        collate([too_long], tiny_config)


def test_reorder_merge_places_outputs_and_mask_token(samples, tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    sample = samples[0]
    z_enc = encode(sample, model)
    merged = reorder_merge(z_enc, sample, model)
    assert merged.shape == (sample.n, tiny_config.d_model)
    for slot, index in enumerate(sample.visible_indices):
        assert torch.equal(merged[index], z_enc[slot])
    for index in sample.masked_indices:
        assert torch.equal(merged[index], model.mask_token)
    with pytest.raises(IndexMapMismatch):
        reorder_merge(z_enc[:-1], sample, model)


def test_single_trajectory_helpers_match_batched_forward(samples, tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    sample = samples[1]
    tokens = tokenize(sample.visible, model)
    assert tokens.vectors.shape == (len(sample.visible_indices), tiny_config.d_model)
    single = decode(reorder_merge(encode(sample, model), sample, model), model)
    batched = model(collate([sample], tiny_config, dtype=torch.float64))[0]
    assert torch.allclose(single, batched, atol=1e-12)


def test_padding_does_not_change_outputs(samples, tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    alone = model(collate([samples[1]], tiny_config, dtype=torch.float64))[0]
    padded = model(collate(samples, tiny_config, dtype=torch.float64))[1, :6]
    assert torch.allclose(alone, padded, atol=1e-10)


def test_masked_loss_ignores_visible_positions():
    pred = torch.zeros(1, 3, 2)
    target = torch.tensor([[[100.0, 100.0], [1.0, 2.0], [0.0, 3.0]]])
    mask = torch.tensor([[False, True, True]])
    # per-trajectory mean of squared norms: (5 + 9) / 2
    assert masked_loss(pred, target, mask).item() == pytest.approx(7.0)
    two = masked_loss(torch.zeros(2, 3, 2), target.repeat(2, 1, 1),
                      torch.tensor([[False, True, True], [False, False, True]]))
    assert two.item() == pytest.approx((7.0 + 9.0) / 2)


def test_gradients_match_finite_differences(samples):
    config = ModelConfig(d_model=8, encoder_blocks=1, decoder_blocks=1, heads=1, pad_len=16,
                         max_len=32, seed=3)
    model = build_model(config, dtype=torch.float64)
    batch = collate(samples, config, dtype=torch.float64)
    analytic = gradients(model, batch)
    eps = 1e-6
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.view(-1)
            numeric = torch.empty_like(flat)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + eps
                up = masked_loss(model(batch), batch.target, batch.loss_mask).item()
                flat[i] = original - eps
                down = masked_loss(model(batch), batch.target, batch.loss_mask).item()
                flat[i] = original
                numeric[i] = (up - down) / (2 * eps)
            exact = analytic[name].view(-1)
            tolerance = 1e-3 * torch.maximum(exact.abs(), numeric.abs()) + 1e-8
            assert torch.all((exact - numeric).abs() <= tolerance), name


def test_initialization_is_seeded(tiny_config):
    a, b = build_model(tiny_config), build_model(tiny_config)
    for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb), name
    assert count_parameters(a) == sum(p.numel() for p in a.parameters())


def test_reconstruct_returns_coordinates(samples, tiny_config):
    model = build_model(tiny_config)
    out = reconstruct(model, samples)
    assert [o.shape for o in out] == [(9, 2), (6, 2)]
    assert np.allclose(out[0][0], samples[0].base.data[0, :2], atol=0.05)


def test_checkpoint_round_trip(tmp_path, samples, tiny_config):
    model = build_model(tiny_config)
    path = tmp_path / "model.json"
    save_checkpoint(path, model, epoch=4, extra={"note": "x"})
    loaded, payload = load_checkpoint(path)
    assert payload["epoch"] == 4 and payload["note"] == "x"
    assert loaded.config == tiny_config
    for key, value in model.state_dict().items():
        assert torch.equal(value, loaded.state_dict()[key]), key
    batch = collate(samples, tiny_config)
    assert torch.equal(model.eval()(batch), loaded.eval()(batch))


def test_load_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.json"
    path.write_text(json.dumps({"hello": 1}), encoding="utf-8")
    with pytest.raises(DataIOError):
        load_checkpoint(path)
    with pytest.raises(DataIOError):
        load_checkpoint(tmp_path / "missing.json")


def test_full_scale_settings():
    config = ModelConfig.full_scale(epochs=3)
    assert (config.d_model, config.encoder_blocks, config.decoder_blocks, config.heads) == (128, 8, 4, 4)
    assert config.pad_len == 200 and config.epochs == 3
    assert config.head_dim == 32


def test_attention_weights_and_single_token():
    torch.manual_seed(1)
    attention = RotarySelfAttention(8, 2).to(torch.float64)
    x = torch.randn(1, 5, 8, dtype=torch.float64)
    valid = torch.tensor([[True, True, True, False, False]])
    _, weights = attention(x, torch.arange(5).unsqueeze(0), valid, return_weights=True)
    assert torch.allclose(weights.sum(-1), torch.ones(1, 2, 5, dtype=torch.float64))
    assert torch.all(weights[..., 3:] == 0)
    one = x[:, :1]
    out = attention(one, torch.tensor([[4]]), torch.tensor([[True]]))
    assert torch.allclose(out, attention.out(attention.value(one)))


def test_attention_block_on_visible_positions(samples, tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    sample = samples[0]
    h = tokenize(sample.visible, model)
    batch = collate([sample], tiny_config, dtype=torch.float64)
    assert torch.allclose(h.vectors, model.embed(batch)[0], atol=1e-12)
    out = attention_block(h, sample.visible_indices, model.encoder[0])
    expected = model.encoder[0](model.embed(batch), batch.enc_pos, batch.enc_valid)[0]
    assert torch.allclose(out.vectors, expected, atol=1e-12)
    assert out.vectors.shape == h.vectors.shape


def test_encoder_ignores_hidden_point_values(samples, tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    sample = samples[0]
    rng = np.random.default_rng(8)
    hidden = sample.hidden.copy()
    hidden[:, :2] += rng.uniform(-0.01, 0.01, (len(hidden), 2))
    perturbed = MaskedTrajectory(sample.merge(hidden), sample.masked_indices)
    assert not np.array_equal(perturbed.base.data, sample.base.data)
    assert torch.equal(encode(sample, model), encode(perturbed, model))


def test_small_step_against_gradient_lowers_loss(samples, tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    batch = collate(samples, tiny_config, dtype=torch.float64)
    grads = gradients(model, batch)
    with torch.no_grad():
        before = masked_loss(model(batch), batch.target, batch.loss_mask).item()
        for name, param in model.named_parameters():
            param -= 1e-4 * grads[name]
        after = masked_loss(model(batch), batch.target, batch.loss_mask).item()
    assert after < before


def test_tokenizer_separates_space_and_time(tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    coords = torch.randn(1, 5, 2, dtype=torch.float64)
    dt = torch.rand(1, 5, dtype=torch.float64) * 10
    valid = torch.ones(1, 5, dtype=torch.bool)
    tokenizer = model.tokenizer
    zero_coords, zero_dt = torch.zeros_like(coords), torch.zeros_like(dt)
    combined = tokenizer(coords, dt, valid)
    parts = (tokenizer(coords, zero_dt, valid) + tokenizer(zero_coords, dt, valid)
             - tokenizer(zero_coords, zero_dt, valid))
    assert torch.allclose(combined, parts, atol=1e-12)
    with torch.no_grad():
        for param in tokenizer.parameters():
            param.zero_()
    assert torch.equal(tokenizer(coords, dt, valid), torch.zeros(1, 5, tiny_config.d_model,
                                                                 dtype=torch.float64))


def test_decode_with_zero_head_weights_returns_bias(tiny_config):
    model = build_model(tiny_config, dtype=torch.float64)
    with torch.no_grad():
        model.head.weight.zero_()
        model.head.bias.copy_(torch.tensor([0.3, -0.2], dtype=torch.float64))
    out = decode(torch.randn(7, tiny_config.d_model, dtype=torch.float64), model)
    assert torch.equal(out, torch.tensor([[0.3, -0.2]], dtype=torch.float64).expand(7, 2))
