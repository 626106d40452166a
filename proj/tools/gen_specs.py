#!/usr/bin/env python3
# Copyright 2026 The Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the network spec files shipped under specs/.

Usage: tools/gen_specs.py [OUT_DIR]
"""

import json
import os
import sys


class Builder:
    def __init__(self, name, input_shape, num_classes, bounds, width_divisor=1):
        self.doc = {
            "name": name,
            "input_shape": list(input_shape),
            "num_classes": num_classes,
            "bounds": bounds,
            "width_divisor": width_divisor,
            "layers": [],
            "edges": [],
            "residual_ties": [],
        }
        self.last = None

    def add(self, layer, inputs=None):
        self.doc["layers"].append(layer)
        if inputs is None:
            inputs = [self.last] if self.last else []
        for src in inputs:
            self.doc["edges"].append([src, layer["id"]])
        self.last = layer["id"]
        return layer["id"]

    def conv(self, lid, cout, k, s, cset, **extra):
        layer = {"id": lid, "kind": "conv", "kernel": k, "stride": s,
                 "base_channels": cout, "channel_set": cset}
        layer.update(extra)
        return self.add(layer)

    def dwconv(self, lid, k, s):
        return self.add({"id": lid, "kind": "dwconv", "kernel": k, "stride": s})

    def simple(self, lid, kind, inputs=None):
        return self.add({"id": lid, "kind": kind}, inputs)

    def conv_bn(self, lid, cout, k, s, cset, relu=True, **extra):
        self.conv(lid, cout, k, s, cset, **extra)
        self.simple(lid + "_bn", "bn")
        if relu:
            self.simple(lid + "_relu", "relu")
        return self.last

    def head(self, num_classes):
        self.simple("pool", "avgpool_global")
        self.add({"id": "classifier", "kind": "fc", "base_channels": num_classes,
                  "channel_set": "logits", "slimmable": False})
        self.simple("loss", "softmax_xent")

    def write(self, path):
        with open(path, "w") as f:
            f.write("{\n")
            keys = ["name", "input_shape", "num_classes", "bounds", "width_divisor"]
            for key in keys:
                f.write(f'  "{key}": {json.dumps(self.doc[key])},\n')
            f.write('  "layers": [\n')
            f.write(",\n".join("    " + json.dumps(l) for l in self.doc["layers"]))
            f.write("\n  ],\n")
            f.write('  "edges": [\n')
            f.write(",\n".join("    " + json.dumps(e) for e in self.doc["edges"]))
            f.write("\n  ],\n")
            f.write('  "residual_ties": [\n')
            f.write(",\n".join("    " + json.dumps(t) for t in self.doc["residual_ties"]))
            f.write("\n  ]\n}\n")


def inverted_residual_net(name, input_shape, num_classes, bounds, stem, stages,
                          head_channels, stem_stride, divisor):
    b = Builder(name, input_shape, num_classes, bounds, divisor)
    b.conv_bn("stem", stem, 3, stem_stride, "stem")
    cur_set, cur_ch, block = "stem", stem, 0
    for si, (t, c, n, s) in enumerate(stages, start=1):
        out_set = f"s{si}"
        tie = []
        for i in range(n):
            block += 1
            p = f"b{block}"
            stride = s if i == 0 else 1
            residual_in = b.last
            if t != 1:
                b.conv_bn(p + "_exp", cur_ch * t, 1, 1, p + "_exp", expand_ratio=t)
            b.dwconv(p + "_dw", 3, stride)
            b.simple(p + "_dw_bn", "bn")
            b.simple(p + "_dw_relu", "relu")
            b.conv_bn(p + "_proj", c, 1, 1, out_set, relu=False)
            tie.append(p + "_proj")
            if stride == 1 and cur_set == out_set:
                b.simple(p + "_add", "add", [residual_in, p + "_proj_bn"])
            cur_set, cur_ch = out_set, c
        if len(tie) > 1:
            b.doc["residual_ties"].append(tie)
    b.conv_bn("last", head_channels, 1, 1, "last", reference_fixed=True)
    b.head(num_classes)
    return b


MOBILENET_V2_STAGES = [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2),
                       (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]
MOBILE_BOUNDS = {"lower": 0.15, "upper": 1.5, "groups": 12}


def mobilenet_v2():
    return inverted_residual_net("mobilenet_v2", (3, 224, 224), 1000, MOBILE_BOUNDS,
                                 32, MOBILENET_V2_STAGES, 1280, 2, 8)


def mobilenet_v2_cifar():
    stages = list(MOBILENET_V2_STAGES)
    stages[1] = (6, 24, 2, 1)
    return inverted_residual_net("mobilenet_v2_cifar", (3, 32, 32), 10, MOBILE_BOUNDS,
                                 32, stages, 1280, 1, 8)


def mobilenet_v2_cifar_reduced():
    stages = [(1, 16, 1, 1), (6, 32, 2, 2), (6, 64, 2, 2)]
    return inverted_residual_net("mobilenet_v2_cifar_reduced", (3, 32, 32), 10,
                                 {"lower": 0.15, "upper": 1.5, "groups": 8},
                                 16, stages, 256, 1, 8)


def mobilenet_v1():
    b = Builder("mobilenet_v1", (3, 224, 224), 1000, MOBILE_BOUNDS, 8)
    b.conv_bn("stem", 32, 3, 2, "stem")
    plan = [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2), (512, 1),
            (512, 1), (512, 1), (512, 1), (512, 1), (1024, 2), (1024, 1)]
    for i, (c, s) in enumerate(plan, start=1):
        b.dwconv(f"dw{i}", 3, s)
        b.simple(f"dw{i}_bn", "bn")
        b.simple(f"dw{i}_relu", "relu")
        b.conv_bn(f"pw{i}", c, 1, 1, f"pw{i}")
    b.head(1000)
    return b


def resnet50():
    # The stem stride folds in the 3x3/2 max-pool, which is not a supported kind.
    b = Builder("resnet50", (3, 224, 224), 1000, MOBILE_BOUNDS, 8)
    b.conv_bn("stem", 64, 7, 4, "stem")
    block = 0
    for si, (n, mid, out, s) in enumerate(
            [(3, 64, 256, 1), (4, 128, 512, 2), (6, 256, 1024, 2), (3, 512, 2048, 2)],
            start=1):
        out_set = f"stage{si}"
        tie = []
        for i in range(n):
            block += 1
            p = f"b{block}"
            stride = s if i == 0 else 1
            block_in = b.last
            b.conv_bn(p + "_a", mid, 1, 1, p + "_a")
            b.conv_bn(p + "_b", mid, 3, stride, p + "_b")
            b.conv_bn(p + "_c", out, 1, 1, out_set, relu=False)
            tie.append(p + "_c")
            shortcut = block_in
            if i == 0:
                b.last = block_in
                b.conv_bn(p + "_down", out, 1, stride, out_set, relu=False)
                tie.append(p + "_down")
                shortcut = p + "_down_bn"
            b.simple(p + "_add", "add", [shortcut, p + "_c_bn"])
            b.simple(p + "_relu", "relu")
        b.doc["residual_ties"].append(tie)
    b.head(1000)
    return b


def toy_cnn():
    b = Builder("toy_cnn", (1, 28, 28), 10, {"lower": 0.15, "upper": 1.5, "groups": 8})
    b.conv_bn("conv1", 16, 3, 2, "c1")
    b.conv_bn("conv2", 32, 3, 2, "c2")
    trunk = b.last
    b.conv_bn("conv3", 32, 3, 1, "c2", relu=False)
    b.simple("add", "add", [trunk, "conv3_bn"])
    b.simple("add_relu", "relu")
    b.doc["residual_ties"].append(["conv2", "conv3"])
    b.head(10)
    return b


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(os.path.abspath(__file__)), "..", "specs")
    os.makedirs(out, exist_ok=True)
    for fn in (toy_cnn, mobilenet_v1, mobilenet_v2, mobilenet_v2_cifar,
               mobilenet_v2_cifar_reduced, resnet50):
        b = fn()
        b.write(os.path.join(out, b.doc["name"] + ".json"))


if __name__ == "__main__":
    main()
