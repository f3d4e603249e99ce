/**
 * Frozen CNN backbones producing the feature vectors consumed by the
 * distance-estimation package: DenseNet-121 (d=1024), VGG19 (d=512), and
 * ResNet-50 (d=2048). Features are tapped at the end of the convolutional
 * trunk (after the final conv block for DenseNet/ResNet, after the last
 * pooling of the conv stacks for VGG19) and flattened by global max
 * pooling over the spatial dimensions.
 *
 * Pretrained ImageNet weights are loaded from a flat binary file when
 * supplied (--weights); without one, weights come from a seeded
 * deterministic initializer so runs are reproducible end to end.
 */

import * as tf from '@tensorflow/tfjs'
import * as fs from 'fs'

export type BackboneName = 'densenet121' | 'vgg19' | 'resnet50'

export const FEATURE_DIMS: Record<BackboneName, number> = {
  densenet121: 1024,
  vgg19: 512,
  resnet50: 2048,
}

export const INPUT_SIZE = 64

let seedCounter = 0
function glorot() {
  seedCounter += 1
  return tf.initializers.glorotUniform({ seed: seedCounter })
}

function conv(
  x: tf.SymbolicTensor,
  filters: number,
  kernel: number,
  stride: number,
  opts: { useBias?: boolean; padding?: 'same' | 'valid' } = {},
): tf.SymbolicTensor {
  return tf.layers
    .conv2d({
      filters,
      kernelSize: kernel,
      strides: stride,
      padding: opts.padding ?? 'same',
      useBias: opts.useBias ?? false,
      kernelInitializer: glorot(),
    })
    .apply(x) as tf.SymbolicTensor
}

function bnRelu(x: tf.SymbolicTensor, relu = true): tf.SymbolicTensor {
  let y = tf.layers.batchNormalization({ epsilon: 1.001e-5 }).apply(x) as tf.SymbolicTensor
  if (relu) y = tf.layers.reLU().apply(y) as tf.SymbolicTensor
  return y
}

function buildDensenet121(input: tf.SymbolicTensor): tf.SymbolicTensor {
  const growth = 32
  let x = conv(input, 64, 7, 2)
  x = bnRelu(x)
  x = tf.layers.maxPooling2d({ poolSize: 3, strides: 2, padding: 'same' }).apply(x) as tf.SymbolicTensor
  const blocks = [6, 12, 24, 16]
  let channels = 64
  blocks.forEach((layers, bi) => {
    for (let i = 0; i < layers; i++) {
      let y = bnRelu(x)
      y = conv(y, 4 * growth, 1, 1)
      y = bnRelu(y)
      y = conv(y, growth, 3, 1)
      x = tf.layers.concatenate().apply([x, y]) as tf.SymbolicTensor
      channels += growth
    }
    if (bi < blocks.length - 1) {
      x = bnRelu(x)
      channels = Math.floor(channels / 2)
      x = conv(x, channels, 1, 1)
      x = tf.layers.averagePooling2d({ poolSize: 2, strides: 2 }).apply(x) as tf.SymbolicTensor
    }
  })
  return bnRelu(x) // 1024 channels
}

function buildVgg19(input: tf.SymbolicTensor): tf.SymbolicTensor {
  const stacks: Array<[number, number]> = [
    [2, 64],
    [2, 128],
    [4, 256],
    [4, 512],
    [4, 512],
  ]
  let x = input
  for (const [count, filters] of stacks) {
    for (let i = 0; i < count; i++) {
      x = conv(x, filters, 3, 1, { useBias: true })
      x = tf.layers.reLU().apply(x) as tf.SymbolicTensor
    }
    x = tf.layers.maxPooling2d({ poolSize: 2, strides: 2 }).apply(x) as tf.SymbolicTensor
  }
  return x // 512 channels
}

function buildResnet50(input: tf.SymbolicTensor): tf.SymbolicTensor {
  let x = conv(input, 64, 7, 2, { useBias: true })
  x = bnRelu(x)
  x = tf.layers.maxPooling2d({ poolSize: 3, strides: 2, padding: 'same' }).apply(x) as tf.SymbolicTensor

  const bottleneck = (
    inp: tf.SymbolicTensor,
    filters: number,
    stride: number,
    project: boolean,
  ): tf.SymbolicTensor => {
    let shortcut = inp
    if (project) {
      shortcut = conv(inp, 4 * filters, 1, stride, { useBias: true })
      shortcut = tf.layers.batchNormalization({ epsilon: 1.001e-5 }).apply(shortcut) as tf.SymbolicTensor
    }
    let y = conv(inp, filters, 1, stride, { useBias: true })
    y = bnRelu(y)
    y = conv(y, filters, 3, 1, { useBias: true })
    y = bnRelu(y)
    y = conv(y, 4 * filters, 1, 1, { useBias: true })
    y = tf.layers.batchNormalization({ epsilon: 1.001e-5 }).apply(y) as tf.SymbolicTensor
    y = tf.layers.add().apply([shortcut, y]) as tf.SymbolicTensor
    return tf.layers.reLU().apply(y) as tf.SymbolicTensor
  }

  const stages: Array<[number, number, number]> = [
    [64, 3, 1],
    [128, 4, 2],
    [256, 6, 2],
    [512, 3, 2],
  ]
  for (const [filters, count, stride] of stages) {
    x = bottleneck(x, filters, stride, true)
    for (let i = 1; i < count; i++) x = bottleneck(x, filters, 1, false)
  }
  return x // 2048 channels
}

export function buildBackbone(name: BackboneName): tf.LayersModel {
  seedCounter = 0
  const input = tf.input({ shape: [INPUT_SIZE, INPUT_SIZE, 3] })
  let trunk: tf.SymbolicTensor
  if (name === 'densenet121') trunk = buildDensenet121(input)
  else if (name === 'vgg19') trunk = buildVgg19(input)
  else if (name === 'resnet50') trunk = buildResnet50(input)
  else throw new Error(`unknown backbone ${name}`)
  const pooled = tf.layers.globalMaxPooling2d({}).apply(trunk) as tf.SymbolicTensor
  return tf.model({ inputs: input, outputs: pooled })
}

/**
 * Load weights from a flat little-endian float32 blob laid out in
 * model.getWeights() order. Returns the number of scalars consumed.
 */
export function loadFlatWeights(model: tf.LayersModel, weightsPath: string): number {
  const buf = fs.readFileSync(weightsPath)
  const vals = new Float32Array(buf.buffer, buf.byteOffset, Math.floor(buf.length / 4))
  const current = model.getWeights()
  const next: tf.Tensor[] = []
  let off = 0
  for (const w of current) {
    const size = w.size
    if (off + size > vals.length) {
      throw new Error(`weights file too short: need ${off + size} scalars, have ${vals.length}`)
    }
    next.push(tf.tensor(vals.slice(off, off + size), w.shape as number[]))
    off += size
  }
  model.setWeights(next)
  for (const t of next) t.dispose()
  return off
}

/** Per-backbone input normalization (see README for the conventions). */
export function preprocess(name: BackboneName, pixels: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => {
    if (name === 'densenet121') {
      const scaled = pixels.div(255.0)
      const mean = tf.tensor1d([0.485, 0.456, 0.406])
      const std = tf.tensor1d([0.229, 0.224, 0.225])
      return scaled.sub(mean).div(std) as tf.Tensor4D
    }
    // caffe convention: RGB -> BGR, mean subtraction
    const bgr = tf.reverse(pixels, -1)
    const mean = tf.tensor1d([103.939, 116.779, 123.68])
    return bgr.sub(mean) as tf.Tensor4D
  })
}
