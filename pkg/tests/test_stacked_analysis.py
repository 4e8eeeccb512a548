import numpy as np
import pytest

from src.core import functional as F
from src.core.errors import ConfigurationError, DimensionError
from src.core.tensor import Tensor
from src.models.network_spec import BlockKind, TopologyKind
from src.network.analysis import (ABLATION_ROWS, ablation_table, count_params, estimate_flops,
                                  estimate_size_mb, full_model_gradcheck, measure_latency, summarize)
from src.network.stacked import build_model, stack, toy_spec
from src.network.topology import build_topology


def size_of(kind, down_steps=4, block=BlockKind.CAB, n_stacks=2):
    spec = toy_spec(kind, n_landmarks=68, width=64, n_stacks=n_stacks, down_steps=down_steps,
                    with_deformable=False, block=block)
    return count_params(build_model(spec))


def test_two_stacks_double_the_size():
    one = size_of(TopologyKind.HOURGLASS, block=BlockKind.RESNET, n_stacks=1)
    two = size_of(TopologyKind.HOURGLASS, block=BlockKind.RESNET, n_stacks=2)
    assert 1.9 <= two / one <= 2.1


def test_topology_size_ordering():
    sizes = [size_of(kind) for kind in (TopologyKind.UNET, TopologyKind.HOURGLASS,
                                        TopologyKind.DLA, TopologyKind.SAT1)]
    assert sizes == sorted(sizes) and len(set(sizes)) == 4


def test_sat3_is_hourglass_sized():
    sat3 = size_of(TopologyKind.SAT3, down_steps=3)
    hourglass = size_of(TopologyKind.HOURGLASS, down_steps=3)
    assert 0.75 <= sat3 / hourglass <= 1.25


def test_fewer_down_steps_shrink_hourglass():
    assert size_of(TopologyKind.HOURGLASS, down_steps=3) < size_of(TopologyKind.HOURGLASS, down_steps=4)


def test_every_stack_emits_full_resolution_heatmaps(rng):
    model = build_model(toy_spec(TopologyKind.SAT3))
    outputs = model(Tensor(rng.uniform(size=(2, 3, 128, 128)).astype(np.float32)))
    assert [o.shape for o in outputs] == [(2, 5, 64, 64)] * 2


def test_gradient_reaches_every_stack(rng):
    model = build_model(toy_spec(TopologyKind.UNET, n_stacks=3, input_resolution=16))
    outputs = model(Tensor(rng.uniform(size=(1, 3, 32, 32)).astype(np.float32)))
    F.weighted_sum(outputs[-1], rng.normal(size=outputs[-1].shape)).backward()
    for cell in model.stacks:
        assert any(p.grad is not None and np.abs(p.grad).sum() > 0 for p in cell.dag.parameters())
    for cell in model.stacks[:-1]:
        assert np.abs(cell.head.conv.weight.grad).sum() > 0


def test_single_stack_without_deformable_has_one_output(rng):
    model = build_model(toy_spec(TopologyKind.UNET, n_stacks=1, with_deformable=False, input_resolution=16))
    cell = model.stacks[0]
    assert cell.deform is None and cell.remap is None
    outputs = model(Tensor(rng.uniform(size=(1, 3, 32, 32)).astype(np.float32)))
    assert len(outputs) == 1


def test_model_rejects_wrong_channel_count(rng):
    model = build_model(toy_spec(TopologyKind.UNET, input_resolution=16))
    with pytest.raises(DimensionError):
        model(Tensor(rng.uniform(size=(1, 1, 32, 32))))


def test_stack_needs_one_graph_per_stack():
    dag = build_topology(toy_spec(TopologyKind.UNET).topology)
    with pytest.raises(ConfigurationError):
        stack([dag], n_stacks=2, with_deformable=False)


def test_flops_scale_with_batch():
    model = build_model(toy_spec(TopologyKind.HOURGLASS, input_resolution=16))
    single = estimate_flops(model, (1, 3, 32, 32))
    assert single > 0
    assert estimate_flops(model, (3, 3, 32, 32)) == 3 * single
    assert estimate_size_mb(model) == pytest.approx(count_params(model) * 4 / 2 ** 20)
    assert set(summarize(model, (1, 3, 32, 32))) == {'params', 'size_mb', 'flops'}


def test_latency_is_measured_in_inference_mode():
    model = build_model(toy_spec(TopologyKind.UNET, input_resolution=16))
    assert measure_latency(model, (1, 3, 32, 32), repeats=2) > 0
    assert model.training


def test_ablation_rows_report_structure():
    rows = ablation_table(width=16, n_landmarks=5, input_resolution=16, rows=ABLATION_ROWS[:2])
    assert [r['label'] for r in rows] == ["Hourglass^1-ResNet", "Hourglass^2-ResNet"]
    assert rows[1]['params'] > rows[0]['params']
    assert 'edge_mask' not in rows[0] and 'latency_ms' not in rows[0]


@pytest.mark.slow
def test_whole_network_gradients():
    report = full_model_gradcheck()
    assert report.passed, report.to_dict()
