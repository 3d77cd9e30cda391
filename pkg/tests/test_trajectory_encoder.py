import numpy as np
import pytest

from handformer.encoder import (
    EncoderConfig,
    TrajectoryEncoder,
    encode_global_wrist,
    encode_joint_trajectories,
    tcn_output_len,
    trajectory_encoder_forward,
)
from handformer.errors import DataError
from handformer.numerics import DOUBLE, Tensor, finite_diff_check
from handformer.numerics import functional as F
from handformer.pose import build_verb_clip, derive_wrist_6d, VERB_FAMILY_NAMES


def make_encoder(joints=2, n_frames=4, d_t=8, d=8, attn_layers=1, seed=0,
                 joint_identity_embeddings=False, dtype=np.float64):
    cfg = EncoderConfig(joints=joints, n_frames=n_frames, d_t=d_t, d=d,
                        attn_layers=attn_layers,
                        joint_identity_embeddings=joint_identity_embeddings)
    return TrajectoryEncoder(cfg, np.random.default_rng(seed), dtype=dtype)


class TestLocalTokens:
    def test_token_count_21_joints(self):
        enc = make_encoder(joints=21, n_frames=15, d_t=8, d=8)
        block = np.random.default_rng(0).normal(size=(15, 2, 21, 3))
        tokens = encode_joint_trajectories(enc, block)
        assert tokens.shape == (42, tcn_output_len(15), 8)

    def test_shared_weights_permutation_equivariance(self):
        enc = make_encoder(joints=4, n_frames=15)
        rng = np.random.default_rng(1)
        block = rng.normal(size=(15, 2, 4, 3))
        tokens = encode_joint_trajectories(enc, block)

        perm = rng.permutation(8)
        permuted_block = block.reshape(15, 8, 3)[:, perm, :].reshape(15, 2, 4, 3)
        permuted_tokens = encode_joint_trajectories(enc, permuted_block)
        np.testing.assert_array_equal(permuted_tokens, tokens[perm])

    def test_zero_block_zero_biases_gives_zero_tokens(self):
        enc = make_encoder(joints=3, n_frames=7)
        for conv in enc.joint_tcn.convs:
            conv.bias.data[:] = 0.0
        tokens = encode_joint_trajectories(enc, np.zeros((7, 2, 3, 3)))
        np.testing.assert_array_equal(tokens, 0.0)

    def test_below_receptive_field_errors(self):
        with pytest.raises(DataError, match="receptive-field"):
            EncoderConfig(joints=2, n_frames=2)


class TestWristToken:
    def test_zero_input_zero_biases_zero_token(self):
        enc = make_encoder()
        for conv in enc.wrist_tcn.convs:
            conv.bias.data[:] = 0.0
        token = encode_global_wrist(enc, np.zeros((30, 2, 6)))
        np.testing.assert_array_equal(token, 0.0)
        assert token.shape == (enc.cfg.l_t, enc.cfg.d_t)

    def test_constant_input_independent_of_length(self):
        # static hands mean-center to zero, so the token matches the zero
        # token exactly at any segment length (given zero conv biases)
        enc = make_encoder()
        for conv in enc.wrist_tcn.convs:
            conv.bias.data[:] = 0.0
        wrist = np.tile(np.arange(12.0).reshape(1, 2, 6), (40, 1, 1))
        longer = np.tile(np.arange(12.0).reshape(1, 2, 6), (80, 1, 1))
        a = encode_global_wrist(enc, wrist)
        b = encode_global_wrist(enc, longer)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, 0.0)

    def test_screw_directions_distinguishable(self):
        enc = make_encoder(joints=6, n_frames=15, d_t=16, d=16, seed=4)
        cw = VERB_FAMILY_NAMES.index("screw_cw")
        ccw = VERB_FAMILY_NAMES.index("screw_ccw")
        rng = np.random.default_rng(0)
        clip_cw = build_verb_clip(cw, 0, 120, 6, 0.0, rng)
        clip_ccw = build_verb_clip(ccw, 0, 120, 6, 0.0, rng)
        t_cw = encode_global_wrist(enc, derive_wrist_6d(clip_cw))
        t_ccw = encode_global_wrist(enc, derive_wrist_6d(clip_ccw))
        assert np.max(np.abs(t_cw - t_ccw)) > 1e-3


class TestForward:
    def test_output_width_matches_config(self):
        enc = make_encoder(joints=6, n_frames=15, d_t=32, d=256)
        rng = np.random.default_rng(5)
        out = trajectory_encoder_forward(
            enc, rng.normal(size=(15, 2, 6, 3)), rng.normal(size=(120, 2, 6))
        )
        assert out.shape == (256,)

    def test_permutation_invariance_without_identity_embeddings(self):
        enc = make_encoder(joints=4, n_frames=15, seed=2)
        rng = np.random.default_rng(6)
        block = rng.normal(size=(15, 2, 4, 3))
        wrist = rng.normal(size=(60, 2, 6))
        base = trajectory_encoder_forward(enc, block, wrist)
        perm = rng.permutation(8)
        permuted = block.reshape(15, 8, 3)[:, perm, :].reshape(15, 2, 4, 3)
        out = trajectory_encoder_forward(enc, permuted, wrist)
        np.testing.assert_allclose(out, base, atol=1e-6)

    def test_identity_embeddings_break_invariance(self):
        enc = make_encoder(joints=4, n_frames=15, seed=2, joint_identity_embeddings=True)
        rng = np.random.default_rng(6)
        block = rng.normal(size=(15, 2, 4, 3))
        wrist = rng.normal(size=(60, 2, 6))
        base = trajectory_encoder_forward(enc, block, wrist)
        perm = np.roll(np.arange(8), 1)
        permuted = block.reshape(15, 8, 3)[:, perm, :].reshape(15, 2, 4, 3)
        out = trajectory_encoder_forward(enc, permuted, wrist)
        assert np.max(np.abs(out - base)) > 1e-6

    def test_translation_sensitivity(self):
        # without wrist-relative preprocessing, global translation must matter
        enc = make_encoder(joints=4, n_frames=15, seed=9)
        rng = np.random.default_rng(10)
        block = rng.normal(size=(15, 2, 4, 3))
        wrist = rng.normal(size=(60, 2, 6))
        base = trajectory_encoder_forward(enc, block, wrist)
        shifted = trajectory_encoder_forward(enc, block + 0.5, wrist)
        assert np.max(np.abs(shifted - base)) > 1e-6

    def test_gradients_pass_finite_difference(self):
        enc = make_encoder(joints=2, n_frames=4, d_t=8, d=8, attn_layers=1, dtype=DOUBLE)
        rng = np.random.default_rng(3)
        blocks = Tensor(rng.normal(size=(1, 2, 4, 2, 2, 3)))
        wrist = Tensor(rng.normal(size=(1, 12, 2, 6)))

        def loss():
            out = enc(blocks, wrist)
            return F.tsum(F.mul(out, out))

        report = finite_diff_check(loss, list(enc.named_parameters()), eps=1e-5, tol=1e-4)
        assert report.max_rel_err < 1e-4, report.worst()
