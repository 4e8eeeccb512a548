import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.core.errors import ConfigurationError
from src.core.layers import SeparableUnit
from src.core.tensor import Tensor
from src.models.network_spec import BlockKind, BlockSpec
from src.network.blocks import block_param_count, build_block, channel_profile, dense_chain_param_count


ALL_KINDS = list(BlockKind)


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("width", [16, 64])
def test_closed_form_count_matches_built_block(kind, width):
    spec = BlockSpec(kind=kind, channels_in=width, channels_out=width)
    assert build_block(spec).param_count() == block_param_count(spec)


@pytest.mark.parametrize("kind", [BlockKind.RESNET, BlockKind.INCEPTION_RESNET, BlockKind.HPM])
def test_width_change_adds_projection(kind):
    same = BlockSpec(kind=kind, channels_in=32, channels_out=32)
    wider = BlockSpec(kind=kind, channels_in=16, channels_out=32)
    block = build_block(wider)
    assert 'skip' in block.units
    assert block.param_count() == block_param_count(wider)
    assert 'skip' not in build_block(same).units


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_blocks_preserve_resolution(kind, rng):
    block = build_block(BlockSpec(kind=kind, channels_in=16, channels_out=16), rng)
    out = block(Tensor(rng.normal(size=(2, 16, 8, 8)).astype(np.float32)))
    assert out.shape == (2, 16, 8, 8)


def test_cab_is_much_smaller_than_a_dense_unit():
    cab = block_param_count(BlockSpec(kind=BlockKind.CAB, channels_in=64, channels_out=64))
    assert cab == 5376
    assert 5 * cab < dense_chain_param_count(64, 1)


def test_cab_profile_compresses_then_expands():
    profile = channel_profile(BlockSpec(kind=BlockKind.CAB, channels_in=64, channels_out=64, cab_levels=2))
    assert profile == [64, 32, 16, 32, 64]
    assert profile == profile[::-1]


def test_cab_needs_divisible_width():
    with pytest.raises(ConfigurationError):
        build_block(BlockSpec(kind=BlockKind.CAB, channels_in=18, channels_out=18, cab_levels=2))


def test_cab_cannot_change_width():
    errors = BlockSpec(kind=BlockKind.CAB, channels_in=16, channels_out=32).validate()
    assert errors


def test_hpm_needs_multiple_of_four():
    assert BlockSpec(kind=BlockKind.HPM, channels_in=18, channels_out=18).validate()


def test_dot_lists_every_node():
    block = build_block(BlockSpec(kind=BlockKind.CAB, channels_in=16, channels_out=16))
    dot = block.to_dot()
    assert dot.startswith('digraph')
    for node in block.nodes:
        assert f'"{node.name}"' in dot


def test_resnet_bottleneck_at_256_channels():
    spec = BlockSpec(kind=BlockKind.RESNET, channels_in=256, channels_out=256, ratio=4)
    block = build_block(spec)
    weights = sum(p.size for _, p in block.named_parameters() if p.ndim == 4)
    assert weights == 256 * 64 + 64 * 64 * 9 + 64 * 256 == 69632
    # BN gamma/beta of every unit plus conv biases
    assert block_param_count(spec) == 69632 + (2 * 256 + 64) + (2 * 64 + 64) + (2 * 64 + 256)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_doubling_width_more_than_doubles_count(kind):
    narrow = block_param_count(BlockSpec(kind=kind, channels_in=64, channels_out=64))
    wide = block_param_count(BlockSpec(kind=kind, channels_in=128, channels_out=128))
    assert wide > 2 * narrow


def _zero_branch(block):
    for name, unit in block.units.items():
        if name == 'skip':
            continue
        for p in unit.parameters():
            p.data[...] = 0.0


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_zero_branch_weights_pass_input_through(kind, rng):
    block = build_block(BlockSpec(kind=kind, channels_in=16, channels_out=16), rng)
    _zero_branch(block)
    x = Tensor(rng.normal(size=(2, 16, 8, 8)).astype(np.float32))
    np.testing.assert_array_equal(block(x).data, x.data)


@pytest.mark.parametrize("kind", [BlockKind.RESNET, BlockKind.INCEPTION_RESNET, BlockKind.HPM])
def test_zero_branch_weights_give_projected_input(kind, rng):
    block = build_block(BlockSpec(kind=kind, channels_in=8, channels_out=16), rng)
    _zero_branch(block)
    x = Tensor(rng.normal(size=(1, 8, 6, 6)).astype(np.float32))
    np.testing.assert_array_equal(block(x).data, block.units['skip'](x).data)


def test_cab_without_levels_is_a_separable_residual(rng):
    spec = BlockSpec(kind=BlockKind.CAB, channels_in=12, channels_out=12, cab_levels=0)
    block = build_block(spec, rng)
    assert [n.name for n in block.nodes] == ['bottom0', 'output']
    assert isinstance(block.units['bottom0'], SeparableUnit)
    assert block.nodes[-1].inputs == ['bottom0', 'input']
    assert block_param_count(spec) == SeparableUnit(12, 12, rng).param_count()
    x = Tensor(rng.normal(size=(1, 12, 5, 5)).astype(np.float32))
    assert block(x).shape == x.shape


@st.composite
def block_specs(draw):
    kind = draw(st.sampled_from(ALL_KINDS))
    if kind == BlockKind.CAB:
        levels = draw(st.integers(0, 3))
        width = draw(st.integers(1, 8)) * 2 ** levels
        return BlockSpec(kind=kind, channels_in=width, channels_out=width, cab_levels=levels)
    channels_in = draw(st.integers(1, 16)) * 4
    channels_out = draw(st.integers(1, 16)) * 4
    return BlockSpec(kind=kind, channels_in=channels_in, channels_out=channels_out)


@settings(max_examples=60, deadline=None)
@given(block_specs())
def test_closed_form_count_matches_enumeration_for_random_specs(spec):
    assert build_block(spec).param_count() == block_param_count(spec)
