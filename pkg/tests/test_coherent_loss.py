import numpy as np
import pytest

from src.core import functional as F
from src.core.errors import ConfigurationError, DimensionError
from src.core.gradcheck import grad_check
from src.core.tensor import Tensor
from src.models.training import LossWeights, PgLoss
from src.models.transform_spec import TransformSpec
from src.transform.coherent_loss import coherent_loss
from src.transform.flip_pairs import flip_pairs_for
from src.transform.transforms import warp_heatmaps


def logits(rng, shape=(2, 5, 16, 16)):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_identity_transform_with_equal_branches_has_zero_pp(rng):
    h = rng.normal(size=(2, 5, 16, 16))
    gt = rng.uniform(size=h.shape)
    out = coherent_loss(Tensor(h), Tensor(h.copy()), gt, TransformSpec.identity(size=32), LossWeights())
    assert out.pp.item() == 0.0


def test_mse_loss_vanishes_at_ground_truth(rng):
    gt = rng.uniform(size=(1, 5, 16, 16))
    t = TransformSpec.from_params(flip=True, flip_pairs=flip_pairs_for(5), size=32)
    gt_trans = warp_heatmaps([t], Tensor(gt)).data
    out = coherent_loss(Tensor(gt), Tensor(gt_trans), gt, t,
                        LossWeights(lam=1.0, pg_loss=PgLoss.MSE), from_logits=False)
    assert out.total.item() == pytest.approx(0.0, abs=1e-12)


def test_zero_lambda_is_plain_supervision(rng):
    h1, h2 = logits(rng), logits(rng)
    gt = rng.uniform(size=h1.shape)
    t = TransformSpec.from_params(rotation_deg=20.0, size=32)
    out = coherent_loss(h1, h2, gt, t, LossWeights(lam=0.0))
    gt_trans = warp_heatmaps([t] * 2, Tensor(gt)).data
    expected = (F.sigmoid_cross_entropy_sum(h1, gt).item()
                + F.sigmoid_cross_entropy_sum(h2, gt_trans).item()) / (2 * 5)
    assert out.total.item() == pytest.approx(expected, rel=1e-12, abs=1e-12)
    assert out.pp.item() > 0


@pytest.mark.parametrize("pg_loss", list(PgLoss))
def test_gradient_matches_finite_differences(rng, pg_loss):
    h1 = Tensor(rng.normal(size=(1, 5, 8, 8)))
    h2 = Tensor(rng.normal(size=(1, 5, 8, 8)))
    gt = rng.uniform(size=h1.shape)
    t = TransformSpec.from_params(rotation_deg=17.0, scale=1.1, size=16)
    weights = LossWeights(lam=1.0, pg_loss=pg_loss)
    report = grad_check(lambda: coherent_loss(h1, h2, gt, t, weights).total,
                        {'h_orig': h1, 'h_trans': h2}, tolerance=1e-3)
    assert report.passed, report.to_dict()


def test_pp_is_unchanged_by_mirroring_both_branches(rng):
    pairs = flip_pairs_for(5)
    t = TransformSpec.from_params(flip=True, flip_pairs=pairs, size=32)
    h1, h2 = rng.normal(size=(2, 5, 16, 16)), rng.normal(size=(2, 5, 16, 16))
    gt = rng.uniform(size=h1.shape)

    def mirror(maps):
        return maps[:, pairs, :, ::-1].copy()

    plain = coherent_loss(Tensor(h1), Tensor(h2), gt, t, LossWeights())
    mirrored = coherent_loss(Tensor(mirror(h1)), Tensor(mirror(h2)), mirror(gt), t, LossWeights())
    assert plain.pp.item() > 0
    assert mirrored.pp.item() == pytest.approx(plain.pp.item(), rel=1e-12)


def test_pp_share_grows_with_lambda(rng):
    h1, h2 = logits(rng), logits(rng)
    gt = rng.uniform(size=h1.shape)
    t = TransformSpec.from_params(rotation_deg=-12.0, scale=0.9, size=32)
    shares = []
    for lam in (0.0, 1e-4, 1e-2, 0.1, 1.0, 10.0):
        out = coherent_loss(h1, h2, gt, t, LossWeights(lam=lam))
        shares.append(lam * out.pp.item() / out.total.item())
    assert shares[0] == 0.0
    assert all(a < b for a, b in zip(shares, shares[1:]))


def test_terms_are_averaged_over_batch_and_landmarks(rng):
    h = rng.normal(size=(1, 1, 16, 16))
    gt = rng.uniform(size=h.shape)
    single = coherent_loss(Tensor(h), Tensor(h), gt, TransformSpec.identity(32), LossWeights())
    tiled = np.tile(h, (3, 4, 1, 1))
    many = coherent_loss(Tensor(tiled), Tensor(tiled), np.tile(gt, (3, 4, 1, 1)),
                         TransformSpec.identity(32), LossWeights())
    assert many.pg1.item() == pytest.approx(single.pg1.item())


def test_gradient_reaches_both_branches(rng):
    h1, h2 = logits(rng), logits(rng)
    gt = rng.uniform(size=h1.shape)
    t = [TransformSpec.from_params(rotation_deg=a, size=32) for a in (10.0, -10.0)]
    coherent_loss(h1, h2, gt, t, LossWeights(lam=1.0)).total.backward()
    assert np.abs(h1.grad).sum() > 0 and np.abs(h2.grad).sum() > 0


def test_cross_entropy_needs_logits(rng):
    h = Tensor(rng.uniform(size=(1, 5, 16, 16)))
    with pytest.raises(ConfigurationError):
        coherent_loss(h, h, h.data, TransformSpec.identity(32), LossWeights(), from_logits=False)


def test_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        coherent_loss(logits(rng), logits(rng, (2, 5, 8, 8)), np.zeros((2, 5, 16, 16)),
                      TransformSpec.identity(32), LossWeights())


def test_values_names():
    h = Tensor(np.zeros((1, 1, 16, 16)))
    values = coherent_loss(h, h, np.zeros(h.shape), TransformSpec.identity(32), LossWeights()).values()
    assert set(values) == {'loss', 'L_pp', 'L_pg1', 'L_pg2'}
