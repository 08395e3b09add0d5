"""Classification-head variants and the reference DeskNet backbone.

Head versions 0..8: version 0 is the plain softmax classifier; odd versions
1/3/5/7 stack 1..4 hidden dense layers with widths taken as prefixes of
(256, 128, 64, 32); even versions add one Dropout(0.3) after the last
hidden dense layer. Hidden denses use ReLU, the output dense is linear and
feeds a softmax.
"""

from __future__ import annotations

from ..errors import UnknownVersion
from .layers import conv2d, dense, dropout, flatten, maxpool, relu, softmax
from .network import Network

HIDDEN_WIDTHS = (256, 128, 64, 32)
HEAD_DROPOUT_RATE = 0.3
NUM_HEAD_VERSIONS = 9  # 0 = original plain classifier, 1..8 = variants


def build_head(version: int, num_classes: int) -> list:
    if not isinstance(version, int) or not 0 <= version <= 8:
        raise UnknownVersion(f"head version must be 0..8, got {version!r}")
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    layers = []
    if version > 0:
        n_hidden = (version + 1) // 2
        for i, width in enumerate(HIDDEN_WIDTHS[:n_hidden]):
            layers.append(dense(width, activation="relu", name=f"head_dense_{i}"))
        if version % 2 == 0:
            layers.append(dropout(HEAD_DROPOUT_RATE, name="head_dropout"))
    layers.append(dense(num_classes, activation="linear", name="classifier"))
    layers.append(softmax(name="softmax"))
    return layers


def build_desknet(input_shape=(3, 32, 32), num_classes: int = 4,
                  head_version: int = 0, seed: int = 0,
                  freeze_backbone: bool = False) -> Network:
    """Two conv blocks and a head: the smallest network with a meaningful
    last convolution layer for activation mapping."""
    layers = [
        conv2d(8, kernel=3, stride=1, pad="same", name="conv1"),
        relu(name="relu1"),
        maxpool(name="pool1"),
        conv2d(16, kernel=3, stride=1, pad="same", name="conv2"),
        relu(name="relu2"),
        maxpool(name="pool2"),
        flatten(name="flatten"),
    ] + build_head(head_version, num_classes)
    net = Network(layers, input_shape, seed=seed)
    if freeze_backbone:
        net.set_frozen("conv1", True)
        net.set_frozen("conv2", True)
    return net
