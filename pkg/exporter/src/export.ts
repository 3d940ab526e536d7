/**
 * Export penultimate-layer features from an image-folder dataset into FSF1.
 *
 * The exporter never normalizes feature rows: L2 normalization belongs to the
 * consumer so there is a single source of truth for that step. It does
 * validate that every emitted value is finite and nonnegative; a negative
 * value means the hooked layer is not ReLU-terminated and aborts the export.
 */

import * as path from 'path'
import * as tf from '@tensorflow/tfjs'
import { FeatureTable, writeFsf1 } from './fsf1'
import { decodePng, listImageFolder } from './images'
import { loadModel } from './model'

export interface ExportJob {
  /** directory holding model.json + weights.bin */
  modelDir: string
  /** class-per-folder image directory */
  imageDir: string
  /** output FSF1 path */
  outPath: string
  /** images are resized to resize x resize before inference */
  resize?: number
  batchSize?: number
  datasetName?: string
  splitName?: string
}

export interface ExportResult {
  rows: number
  dim: number
  classNames: string[]
  skipped: number
}

async function loadBatch(
  files: string[],
  resize: number,
): Promise<{ tensor: tf.Tensor4D; ok: number[] }> {
  const decoded: { index: number; tensor: tf.Tensor3D }[] = []
  for (let i = 0; i < files.length; i++) {
    try {
      const img = await decodePng(files[i])
      const t = tf.tensor3d(img.data, [img.height, img.width, 3])
      decoded.push({ index: i, tensor: t })
    } catch (err) {
      console.warn(`skipping unreadable image ${files[i]}: ${(err as Error).message}`)
    }
  }
  const batch = tf.tidy(() => {
    const resized = decoded.map(({ tensor }) =>
      tensor.shape[0] === resize && tensor.shape[1] === resize
        ? tensor.clone()
        : tf.image.resizeBilinear(tensor, [resize, resize]),
    )
    return tf.stack(resized) as tf.Tensor4D
  })
  decoded.forEach(({ tensor }) => tensor.dispose())
  return { tensor: batch, ok: decoded.map(({ index }) => index) }
}

export async function exportFeatures(job: ExportJob): Promise<ExportResult> {
  const resize = job.resize ?? 84
  const batchSize = job.batchSize ?? 16
  const model = await loadModel(job.modelDir)
  const { classNames, images } = await listImageFolder(job.imageDir)
  const classIndex = new Map(classNames.map((name, i) => [name, i]))

  const rows: Float32Array[] = []
  const labels: number[] = []
  let skipped = 0
  let dim = -1

  for (let start = 0; start < images.length; start += batchSize) {
    const slice = images.slice(start, start + batchSize)
    const { tensor, ok } = await loadBatch(
      slice.map((img) => img.file),
      resize,
    )
    skipped += slice.length - ok.length
    if (ok.length === 0) {
      tensor.dispose()
      continue
    }
    const features = tf.tidy(() => model.predict(tensor) as tf.Tensor2D)
    tensor.dispose()
    const [n, d] = features.shape
    if (dim === -1) {
      dim = d
    }
    const values = await features.data()
    features.dispose()
    for (let i = 0; i < n; i++) {
      const row = new Float32Array(values.subarray(i * d, (i + 1) * d))
      for (const v of row) {
        if (!Number.isFinite(v)) {
          throw new Error(`non-finite feature value in ${slice[ok[i]].file}`)
        }
        if (v < 0) {
          throw new Error(
            `negative feature value in ${slice[ok[i]].file}: the hooked layer ` +
              'is not ReLU-terminated; export aborted',
          )
        }
      }
      rows.push(row)
      labels.push(classIndex.get(slice[ok[i]].className)!)
    }
  }

  if (rows.length === 0) {
    throw new Error('no readable images; nothing to export')
  }
  const seen = new Set(labels)
  for (const [name, index] of classIndex) {
    if (!seen.has(index)) {
      throw new Error(`class ${name}: every image was unreadable`)
    }
  }

  const flat = new Float32Array(rows.length * dim)
  rows.forEach((row, i) => flat.set(row, i * dim))
  const table: FeatureTable = {
    features: flat,
    labels: Uint32Array.from(labels),
    classNames,
    dim,
  }
  await writeFsf1(
    job.outPath,
    table,
    job.datasetName ?? path.basename(job.imageDir),
    job.splitName ?? 'export',
    { model: job.modelDir, resize, skipped },
  )
  if (skipped > 0) {
    console.warn(`skipped ${skipped} unreadable image(s)`)
  }
  return { rows: rows.length, dim, classNames, skipped }
}
