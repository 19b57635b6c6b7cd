#!/usr/bin/env python3
"""Export torchvision ImageNet backbones as radscan pretrained weight files.

Writes `<out>/<backbone>.safetensors` holding every backbone tensor under its
torchvision name. Classifier and auxiliary-head tensors are dropped since
radscan trains its own single-logit head.

    python3 scripts/export_torchvision_weights.py --out weights densenet121 resnet34

`--random SEED` skips the download and exports randomly initialised models
(with randomised batch-norm statistics) instead. `--probe SIZE` additionally
writes `<backbone>.probe.safetensors` with a fixed input batch and the
torchvision feature maps for it, which the parity test compares against.
"""

import argparse
import pathlib
import sys

import torch
import torchvision
from safetensors.torch import save_file

MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)

# radscan id -> (torchvision constructor, weights enum)
BACKBONES = {
    "densenet121": ("densenet121", "DenseNet121_Weights"),
    "densenet161": ("densenet161", "DenseNet161_Weights"),
    "densenet169": ("densenet169", "DenseNet169_Weights"),
    "densenet201": ("densenet201", "DenseNet201_Weights"),
    "inception_v3": ("inception_v3", "Inception_V3_Weights"),
    "mobilenet_v2": ("mobilenet_v2", "MobileNet_V2_Weights"),
    "resnet34": ("resnet34", "ResNet34_Weights"),
    "resnet50": ("resnet50", "ResNet50_Weights"),
    "resnet101": ("resnet101", "ResNet101_Weights"),
    "resnet152": ("resnet152", "ResNet152_Weights"),
    "resnext50": ("resnext50_32x4d", "ResNeXt50_32X4D_Weights"),
    # torchvision publishes no 32x4d ImageNet weights; random mode only
    "resnext101": (None, None),
    "vgg16": ("vgg16", "VGG16_Weights"),
    "vgg19": ("vgg19", "VGG19_Weights"),
    "vgg11_bn": ("vgg11_bn", "VGG11_BN_Weights"),
    "vgg13_bn": ("vgg13_bn", "VGG13_BN_Weights"),
    "vgg16_bn": ("vgg16_bn", "VGG16_BN_Weights"),
    "vgg19_bn": ("vgg19_bn", "VGG19_BN_Weights"),
}

HEAD_PREFIXES = ("fc.", "classifier.", "AuxLogits.")


def build(backbone, random_seed):
    ctor, weights = BACKBONES[backbone]
    kwargs = {}
    if backbone == "inception_v3":
        # the ImageNet weights expect inputs rescaled to [-1, 1]; keep that
        # rescaling on so it can be folded into the stem below
        kwargs = {"aux_logits": True, "transform_input": True, "init_weights": True}
    if random_seed is None:
        if weights is None:
            sys.exit(f"{backbone}: torchvision has no matching ImageNet weights")
        kwargs["weights"] = getattr(torchvision.models, weights).IMAGENET1K_V1
    else:
        torch.manual_seed(random_seed)
    if ctor is None:
        from torchvision.models.resnet import Bottleneck, ResNet

        model = ResNet(Bottleneck, [3, 4, 23, 3], groups=32, width_per_group=4)
    else:
        model = getattr(torchvision.models, ctor)(**kwargs)
    if random_seed is not None:
        randomize_batch_norm(model)
    return model.eval()


def randomize_batch_norm(model):
    # fresh batch norms are the identity in eval mode, which would hide
    # wiring mistakes in a parity check
    for m in model.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.uniform_(0.5, 1.5)
                m.bias.normal_(0.0, 0.1)
                m.running_mean.normal_(0.0, 0.1)
                m.running_var.uniform_(0.5, 1.5)


def fold_input_transform(state):
    """Fold the inception input rescaling into the first conv and batch norm.

    The rescaling is per-channel affine, x' = a*x + b, and the first conv has
    no padding, so conv(x') = conv_{W*a}(x) + sum(W*b) exactly. The constant
    moves into the batch norm running mean.
    """
    a = torch.tensor([s / 0.5 for s in STD])
    b = torch.tensor([(m - 0.5) / 0.5 for m in MEAN])
    w = state["Conv2d_1a_3x3.conv.weight"]
    state["Conv2d_1a_3x3.conv.weight"] = w * a.view(1, 3, 1, 1)
    shift = (w * b.view(1, 3, 1, 1)).sum(dim=(1, 2, 3))
    state["Conv2d_1a_3x3.bn.running_mean"] = state["Conv2d_1a_3x3.bn.running_mean"] - shift


def backbone_state(backbone, model):
    state = {
        k: v.detach().float().contiguous()
        for k, v in model.state_dict().items()
        if not k.startswith(HEAD_PREFIXES) and not k.endswith("num_batches_tracked")
    }
    if backbone == "inception_v3":
        fold_input_transform(state)
    return state


def features(backbone, model, x):
    """Last convolutional feature maps, as radscan's backbones produce them."""
    if backbone.startswith("densenet"):
        return torch.relu(model.features(x))
    if backbone.startswith("vgg"):
        # radscan drops the trailing max pool to keep a larger activation map
        return model.features[:-1](x)
    if backbone == "mobilenet_v2":
        return model.features(x)
    if backbone == "inception_v3":
        model.fc = torch.nn.Identity()
        model.avgpool = torch.nn.Identity()
        model.dropout = torch.nn.Identity()
        captured = {}
        model.Mixed_7c.register_forward_hook(lambda _m, _i, out: captured.setdefault("x", out))
        model(x)
        return captured["x"]
    body = torch.nn.Sequential(*list(model.children())[:-2])
    return body(x)


def probe(backbone, model, size, seed):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(2, 3, size, size, generator=g)
    with torch.no_grad():
        y = features(backbone, model, x)
    return {"input": x.contiguous(), "features": y.contiguous()}


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("backbones", nargs="*", help="radscan backbone ids (default: all)")
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("weights"))
    parser.add_argument("--random", type=int, metavar="SEED", help="random weights instead of ImageNet")
    parser.add_argument("--probe", type=int, metavar="SIZE", help="also write reference feature maps")
    args = parser.parse_args()

    unknown = [b for b in args.backbones if b not in BACKBONES]
    if unknown:
        sys.exit(f"unknown backbone(s): {', '.join(unknown)}; choose from {', '.join(BACKBONES)}")
    args.out.mkdir(parents=True, exist_ok=True)
    torch.set_grad_enabled(False)
    for backbone in args.backbones or list(BACKBONES):
        model = build(backbone, args.random)
        path = args.out / f"{backbone}.safetensors"
        save_file(backbone_state(backbone, model), str(path), metadata={"source": "torchvision " + torchvision.__version__})
        print(path)
        if args.probe:
            probe_path = args.out / f"{backbone}.probe.safetensors"
            save_file(probe(backbone, model, args.probe, args.random or 0), str(probe_path))
            print(probe_path)


if __name__ == "__main__":
    main()
