"""Chain construction, tensor contracts, and torch execution semantics."""

import numpy as np
import pytest
import torch

from dpwn_trainer import ChainNet, ExportError, chain_for, expected_tensors


def test_tiny_chain_layout():
    chain = chain_for("tiny_conv", (3, 32, 32), 10)
    names = [l["name"] for l in chain]
    assert names == ["conv1", "conv1_relu", "maxpl1",
                     "conv2", "conv2_relu", "maxpl2",
                     "conv3", "conv3_relu", "maxpl3",
                     "conv4", "conv4_relu", "maxpl4",
                     "flatten", "logits"]
    want = expected_tensors(chain)
    assert want["conv1/weight"] == (16, 3, 3, 3)
    assert want["conv4/weight"] == (64, 32, 3, 3)
    # 32 -> 16 -> 8 -> 4 -> 2 under four ceil pools
    assert want["logits/weight"] == (10, 64 * 2 * 2)
    assert len(want) == 10


def test_reference_chain_layout():
    chain = chain_for("reference_vgg16", (3, 32, 32), 10)
    convs = [l["name"] for l in chain if l["kind"] == "conv"]
    pools = [l["name"] for l in chain if l["kind"] == "maxpool"]
    assert len(convs) == 13 and len(pools) == 5
    assert convs[0] == "conv1_1" and convs[-1] == "conv5_3"
    assert pools == [f"maxpl{i}" for i in range(1, 6)]
    want = expected_tensors(chain)
    assert want["conv1_1/weight"] == (64, 3, 3, 3)
    assert want["conv5_3/weight"] == (512, 512, 3, 3)
    # 32 halves five times to 1
    assert want["fc1/weight"] == (256, 512)
    assert want["logits/weight"] == (10, 256)


def test_unknown_arch_and_kind():
    with pytest.raises(ExportError):
        chain_for("resnet50", (3, 32, 32), 10)
    with pytest.raises(ExportError):
        expected_tensors([{"name": "x", "kind": "dropout", "params": {}}])
    with pytest.raises(ExportError):
        ChainNet([{"name": "x", "kind": "dropout", "params": {}}])


def test_state_dict_keys_map_to_contract():
    chain = chain_for("tiny_conv", (1, 28, 28), 10)
    net = ChainNet(chain)
    got = {k.replace(".", "/"): tuple(v.shape)
           for k, v in net.state_dict().items()}
    assert got == expected_tensors(chain)


def test_forward_shapes_and_ceil_pooling():
    chain = chain_for("tiny_conv", (1, 28, 28), 10)
    net = ChainNet(chain)
    out = net(torch.zeros(5, 1, 28, 28))
    assert out.shape == (5, 10)

    # odd spatial sizes pool over the leftover strip instead of dropping it
    x = torch.arange(49, dtype=torch.float32).reshape(1, 1, 7, 7)
    pooled = torch.nn.functional.max_pool2d(x, 2, 2, ceil_mode=True)
    assert pooled.shape == (1, 1, 4, 4)
    assert pooled[0, 0, 3, 3] == 48.0


def test_forward_matches_manual_conv():
    torch.manual_seed(2)
    chain = [{"name": "conv1", "kind": "conv",
              "params": {"cout": 2, "cin": 1, "k": 3, "pad": 1}},
             {"name": "flatten", "kind": "flatten", "params": {}},
             {"name": "logits", "kind": "linear",
              "params": {"out": 3, "in": 2 * 16}}]
    net = ChainNet(chain)
    x = torch.randn(1, 1, 4, 4)
    with torch.no_grad():
        got = net(x).numpy()
        want = net.logits(torch.conv2d(
            x, net.conv1.weight, net.conv1.bias, padding=1).flatten(1)).numpy()
    assert np.allclose(got, want, atol=0, rtol=0)


def test_flatten_is_row_major():
    chain = [{"name": "flatten", "kind": "flatten", "params": {}},
             {"name": "logits", "kind": "linear",
              "params": {"out": 1, "in": 8}}]
    net = ChainNet(chain)
    with torch.no_grad():
        net.logits.weight[:] = torch.arange(8, dtype=torch.float32)
        net.logits.bias[:] = 0.0
        x = torch.arange(8, dtype=torch.float32).reshape(1, 2, 2, 2)
        got = float(net(x))
    # channel-major, then rows, then columns
    assert got == float(sum(i * i for i in range(8)))
