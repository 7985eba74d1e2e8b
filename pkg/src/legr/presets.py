"""Architecture text for the desk-scale CNN used by the experiments."""

from __future__ import annotations



def desk_cnn(widths=(16, 32, 64), classes: int = 4, size: int = 32, name: str = "desk_cnn") -> str:
    """Eight 3x3 convolutions in three stages with one residual block.

    The first convolution is strided for inputs of 32 pixels or more, so every
    size ends in a 4x4 (or 2x2) map before global pooling.
    """
    w1, w2, w3 = widths
    first_stride = 2 if size >= 32 else 1
    plan = [(1, first_stride, w1), (2, 2, w1), (3, 1, w2), (4, 1, w2), (5, 1, w2),
            (6, 2, w3), (7, 1, w3), (8, 1, w3)]
    lines = ["format: legr-arch/1", f"name: {name}", f"input: 1x{size}x{size}", ""]
    for i, stride, width in plan:
        inputs = " inputs=input" if i == 1 else ""
        lines.append(f"layer conv{i} kind=conv k=3 stride={stride} pad=1 out_channels={width}{inputs}")
        lines.append(f"layer ss{i} kind=scale_shift")
        if i == 5:
            lines.append("layer add1 kind=add inputs=ss5,relu3")
            lines.append("layer relu5 kind=relu")
        else:
            lines.append(f"layer relu{i} kind=relu")
    lines += ["layer gap kind=gap", f"layer fc kind=dense out_channels={classes} bias=1",
              "layer loss kind=softmax_ce"]
    return "\n".join(lines) + "\n"
