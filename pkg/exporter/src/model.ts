/**
 * Feature-extractor model handling on plain Node (no native tf bindings):
 * models are stored as `model.json` + `weights.bin` in a directory and moved
 * through tfjs custom IO handlers.
 */

import * as fs from 'fs/promises'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

const WEIGHTS_FILE = 'weights.bin'
const MODEL_FILE = 'model.json'

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  await fs.mkdir(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = artifacts.weightData as ArrayBuffer
      await fs.writeFile(path.join(dir, WEIGHTS_FILE), Buffer.from(weightData))
      const topology = {
        modelTopology: artifacts.modelTopology,
        weightsManifest: [
          { paths: [WEIGHTS_FILE], weights: artifacts.weightSpecs },
        ],
      }
      await fs.writeFile(path.join(dir, MODEL_FILE), JSON.stringify(topology))
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  const modelPath = path.join(dir, MODEL_FILE)
  let topology: {
    modelTopology: object
    weightsManifest: { paths: string[]; weights: tf.io.WeightsManifestEntry[] }[]
  }
  try {
    topology = JSON.parse(await fs.readFile(modelPath, 'utf-8'))
  } catch (err) {
    throw new Error(`cannot load model from ${dir}: ${(err as Error).message}`)
  }
  const weightSpecs = topology.weightsManifest.flatMap((group) => group.weights)
  const buffers: Buffer[] = []
  for (const group of topology.weightsManifest) {
    for (const p of group.paths) {
      buffers.push(await fs.readFile(path.join(dir, p)))
    }
  }
  const weightBuffer = Buffer.concat(buffers)
  const weightData = weightBuffer.buffer.slice(
    weightBuffer.byteOffset,
    weightBuffer.byteOffset + weightBuffer.byteLength,
  )
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: topology.modelTopology,
      weightSpecs,
      weightData,
    }),
  )
}

/**
 * Small ReLU-terminated convolutional extractor for tests and smoke runs:
 * conv/pool stacks ending in ReLU, then global average pooling, so every
 * emitted feature is nonnegative. Deterministic given the seed.
 */
export function buildToyExtractor(
  inputSize = 84,
  featureDim = 16,
  seed = 1,
): tf.LayersModel {
  const model = tf.sequential()
  model.add(
    tf.layers.conv2d({
      inputShape: [inputSize, inputSize, 3],
      filters: 8,
      kernelSize: 5,
      strides: 2,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
    }),
  )
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }))
  model.add(
    tf.layers.conv2d({
      filters: featureDim,
      kernelSize: 3,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
    }),
  )
  model.add(tf.layers.globalAveragePooling2d({ dataFormat: 'channelsLast' }))
  return model
}

/** Like the toy extractor but ending in a plain linear layer: emits negative
 * values, which the exporter must reject. */
export function buildBadExtractor(inputSize = 84, featureDim = 8, seed = 1): tf.LayersModel {
  const model = tf.sequential()
  model.add(
    tf.layers.conv2d({
      inputShape: [inputSize, inputSize, 3],
      filters: featureDim,
      kernelSize: 5,
      strides: 4,
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
    }),
  )
  model.add(tf.layers.globalAveragePooling2d({ dataFormat: 'channelsLast' }))
  return model
}
