import numpy as np
import pytest

from cwsep.cirm import (
    NetworkOutput,
    apply_cirm,
    cirm_gradients,
    identity_output,
)
from cwsep.spectral import ComplexSpectrogram, MagPhase, to_magphase


def random_magphase(shape=(2, 6, 257), seed=0):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return to_magphase(ComplexSpectrogram(data, 512, 110, 512)), data


def constant_output(shape, mask=0.0, pr=1.0, pi=0.0, q=0.0):
    return NetworkOutput(
        mask_logits=np.full(shape, mask),
        phase_real=np.full(shape, pr),
        phase_imag=np.full(shape, pi),
        mag_residual=np.full(shape, q),
    )


class TestApply:
    def test_identity_reproduces_mixture(self):
        mp, data = random_magphase()
        rec = apply_cirm(mp, identity_output(mp.magnitude.shape))
        assert np.max(np.abs(rec.data - data)) <= 1e-6

    def test_null_mask_zeros(self):
        mp, _ = random_magphase(seed=1)
        rec = apply_cirm(mp, constant_output(mp.magnitude.shape, mask=-40.0))
        assert np.max(np.abs(rec.data)) <= 1e-12

    def test_relu_clips_negative_magnitude(self):
        # |X| = 2, M = 0, Q = -3: relu(2*0.5 - 3) = 0 regardless of phase
        mp = MagPhase(
            magnitude=np.full((1, 1, 1), 2.0),
            phase_cos=np.full((1, 1, 1), 0.6),
            phase_sin=np.full((1, 1, 1), 0.8),
            win_length=512, hop=110, fft_size=0,
        )
        rec = apply_cirm(mp, constant_output((1, 1, 1), mask=0.0, q=-3.0))
        assert np.all(rec.data == 0)

    def test_single_bin_hand_value(self):
        # |X|=1, angle 0, M=0, Q=0.5, (Pr,Pi)=(1/sqrt2, 1/sqrt2):
        # mag = relu(0.5 + 0.5) = 1, rotation 45 degrees
        mp = MagPhase(
            magnitude=np.ones((1, 1, 1)),
            phase_cos=np.ones((1, 1, 1)),
            phase_sin=np.zeros((1, 1, 1)),
            win_length=512, hop=110, fft_size=0,
        )
        s = 1 / np.sqrt(2)
        rec = apply_cirm(mp, constant_output((1, 1, 1), q=0.5, pr=s, pi=s))
        assert abs(rec.data[0, 0, 0].real - 0.7071) <= 1e-4
        assert abs(rec.data[0, 0, 0].imag - 0.7071) <= 1e-4

    def test_magnitude_nonnegative(self):
        mp, _ = random_magphase(seed=2)
        rng = np.random.default_rng(3)
        out = NetworkOutput(*[rng.standard_normal(mp.magnitude.shape) for _ in range(4)])
        rec = apply_cirm(mp, out)
        assert np.all(np.abs(rec.data) >= 0)

    def test_magnitude_independent_of_phase_tensors(self):
        mp, _ = random_magphase(seed=4)
        shape = mp.magnitude.shape
        rng = np.random.default_rng(5)
        base = apply_cirm(mp, constant_output(shape, mask=0.3, q=0.1))
        for seed in range(3):
            r = np.random.default_rng(seed + 10)
            # unit-or-larger phase vectors keep the eps stabilizer negligible
            theta = r.uniform(-np.pi, np.pi, shape)
            mag_v = r.uniform(1.0, 3.0, shape)
            out = NetworkOutput(
                mask_logits=np.full(shape, 0.3),
                phase_real=mag_v * np.cos(theta),
                phase_imag=mag_v * np.sin(theta),
                mag_residual=np.full(shape, 0.1),
            )
            rec = apply_cirm(mp, out)
            assert np.max(np.abs(np.abs(rec.data) - np.abs(base.data))) <= 1e-6

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 2.0, 10.0])
    def test_phase_scaling_invariance(self, alpha):
        mp, _ = random_magphase(seed=6)
        shape = mp.magnitude.shape
        rng = np.random.default_rng(7)
        theta = rng.uniform(-np.pi, np.pi, shape)
        mag_v = rng.uniform(2.0, 4.0, shape)
        pr, pi = mag_v * np.cos(theta), mag_v * np.sin(theta)
        a = apply_cirm(mp, NetworkOutput(np.zeros(shape), pr, pi, np.zeros(shape)))
        b = apply_cirm(mp, NetworkOutput(np.zeros(shape), alpha * pr, alpha * pi, np.zeros(shape)))
        assert np.max(np.abs(a.data - b.data)) <= 1e-6

    def test_shape_mismatch(self):
        mp, _ = random_magphase()
        with pytest.raises(ValueError):
            apply_cirm(mp, constant_output((1, 1, 1)))


class TestGradients:
    def test_residual_gradient_is_one_when_active(self):
        mp, _ = random_magphase(seed=8)
        shape = mp.magnitude.shape
        out = constant_output(shape, mask=40.0, q=0.5)  # pre-activation > 0 everywhere
        # upstream aligned with the output phase isolates d(mag)/dQ
        rec = apply_cirm(mp, out)
        mag = np.abs(rec.data)
        cos_o = np.where(mag > 0, rec.data.real / np.where(mag > 0, mag, 1), 1.0)
        sin_o = np.where(mag > 0, rec.data.imag / np.where(mag > 0, mag, 1), 0.0)
        g = cirm_gradients(mp, out, cos_o, sin_o)
        assert np.allclose(g.mag_residual, 1.0, atol=1e-9)

    def test_mask_gradient_hand_value(self):
        # d(mag)/dM = |X| * sigmoid'(0) = 2 * 0.25 = 0.5
        mp = MagPhase(
            magnitude=np.full((1, 1, 1), 2.0),
            phase_cos=np.ones((1, 1, 1)),
            phase_sin=np.zeros((1, 1, 1)),
            win_length=512, hop=110, fft_size=0,
        )
        out = constant_output((1, 1, 1), mask=0.0, q=0.5)
        g = cirm_gradients(mp, out, np.ones((1, 1, 1)), np.zeros((1, 1, 1)))
        # eps in the phase normalization perturbs cos(theta) by ~5e-9
        assert abs(g.mask_logits[0, 0, 0] - 0.5) <= 1e-8

    def test_against_finite_differences(self):
        rng = np.random.default_rng(9)
        n = 64
        shape = (1, 1, n)
        angle = rng.uniform(-np.pi, np.pi, shape)
        mp = MagPhase(
            magnitude=np.abs(rng.standard_normal(shape)) + 0.1,
            phase_cos=np.cos(angle),
            phase_sin=np.sin(angle),
            win_length=512, hop=110, fft_size=2 * (n - 1),
        )
        out = NetworkOutput(
            mask_logits=rng.standard_normal(shape),
            phase_real=rng.standard_normal(shape) * 2,
            phase_imag=rng.standard_normal(shape) * 2,
            mag_residual=rng.standard_normal(shape),
        )
        gre = rng.standard_normal(shape)
        gim = rng.standard_normal(shape)
        grads = cirm_gradients(mp, out, gre, gim)

        pre = mp.magnitude / (1 + np.exp(-out.mask_logits)) + out.mag_residual
        away_from_kink = np.abs(pre) > 1e-3

        h = 1e-4
        for name in ("mask_logits", "phase_real", "phase_imag", "mag_residual"):
            analytic = getattr(grads, name)
            fd = np.zeros(shape)
            for i in range(n):
                fields = {f: np.array(getattr(out, f)) for f in
                          ("mask_logits", "phase_real", "phase_imag", "mag_residual")}
                fields[name] = fields[name].copy()
                fields[name][0, 0, i] += h
                plus = apply_cirm(mp, NetworkOutput(**fields)).data
                fields[name][0, 0, i] -= 2 * h
                minus = apply_cirm(mp, NetworkOutput(**fields)).data
                d = (plus - minus) / (2 * h)
                fd[0, 0, i] = np.sum(gre * d.real + gim * d.imag)
            rel = np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-6)
            assert np.max(rel[away_from_kink]) <= 1e-5, name

    def test_shape_mismatch(self):
        mp, _ = random_magphase()
        with pytest.raises(ValueError):
            cirm_gradients(mp, constant_output((1, 1, 1)),
                           np.zeros((1, 1, 1)), np.zeros((1, 1, 1)))
