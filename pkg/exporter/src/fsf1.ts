/**
 * FSF1 feature-file writer/reader plus its JSON manifest sidecar.
 *
 * Layout: magic bytes `FSF1`, u32 row count, u32 dim, rows*dim little-endian
 * f32 values in row-major order, then rows u32 0-based class labels. The
 * manifest (`<file>.manifest.json`) carries the class names: row labels index
 * into its ordered per_class_counts list.
 */

import * as fs from 'fs/promises'

export const FSF1_MAGIC = 'FSF1'

export interface Manifest {
  dataset_name: string
  split_name: string
  per_class_counts: [string, number][]
  dtype: 'f32'
  storage_order: 'row-major'
  num_rows: number
  dim: number
  extra: Record<string, unknown>
}

export interface FeatureTable {
  /** row-major rows*dim values */
  features: Float32Array
  labels: Uint32Array
  classNames: string[]
  dim: number
}

export function manifestPath(dataPath: string): string {
  return `${dataPath}.manifest.json`
}

export function encodeFsf1(table: FeatureTable): Buffer {
  const rows = table.labels.length
  if (rows === 0) {
    throw new Error('refusing to write an empty feature set')
  }
  if (table.features.length !== rows * table.dim) {
    throw new Error(
      `feature buffer holds ${table.features.length} values, expected ${rows * table.dim}`,
    )
  }
  const out = Buffer.alloc(12 + 4 * rows * table.dim + 4 * rows)
  out.write(FSF1_MAGIC, 0, 'ascii')
  out.writeUInt32LE(rows, 4)
  out.writeUInt32LE(table.dim, 8)
  for (let i = 0; i < table.features.length; i++) {
    out.writeFloatLE(table.features[i], 12 + 4 * i)
  }
  const labelBase = 12 + 4 * rows * table.dim
  for (let i = 0; i < rows; i++) {
    out.writeUInt32LE(table.labels[i], labelBase + 4 * i)
  }
  return out
}

export function buildManifest(
  table: FeatureTable,
  datasetName: string,
  splitName: string,
  extra: Record<string, unknown> = {},
): Manifest {
  const counts = new Array<number>(table.classNames.length).fill(0)
  for (const label of table.labels) {
    if (label >= table.classNames.length) {
      throw new Error(`label ${label} out of range of ${table.classNames.length} classes`)
    }
    counts[label] += 1
  }
  counts.forEach((count, i) => {
    if (count === 0) {
      throw new Error(`class ${table.classNames[i]} has no rows`)
    }
  })
  return {
    dataset_name: datasetName,
    split_name: splitName,
    per_class_counts: table.classNames.map((name, i) => [name, counts[i]]),
    dtype: 'f32',
    storage_order: 'row-major',
    num_rows: table.labels.length,
    dim: table.dim,
    extra,
  }
}

export async function writeFsf1(
  path: string,
  table: FeatureTable,
  datasetName: string,
  splitName: string,
  extra: Record<string, unknown> = {},
): Promise<void> {
  const manifest = buildManifest(table, datasetName, splitName, extra)
  await fs.writeFile(path, encodeFsf1(table))
  await fs.writeFile(manifestPath(path), JSON.stringify(manifest, null, 2) + '\n')
}

/** Read back an FSF1 file; used by the round-trip tests. */
export async function readFsf1(path: string): Promise<FeatureTable> {
  const raw = await fs.readFile(path)
  if (raw.length < 12 || raw.toString('ascii', 0, 4) !== FSF1_MAGIC) {
    throw new Error(`${path}: not an FSF1 file`)
  }
  const rows = raw.readUInt32LE(4)
  const dim = raw.readUInt32LE(8)
  const expected = 12 + 4 * rows * dim + 4 * rows
  if (raw.length !== expected) {
    throw new Error(`${path}: size ${raw.length} does not match header (${expected})`)
  }
  const features = new Float32Array(rows * dim)
  for (let i = 0; i < features.length; i++) {
    features[i] = raw.readFloatLE(12 + 4 * i)
  }
  const labels = new Uint32Array(rows)
  const labelBase = 12 + 4 * rows * dim
  for (let i = 0; i < rows; i++) {
    labels[i] = raw.readUInt32LE(labelBase + 4 * i)
  }
  const manifest = JSON.parse(
    await fs.readFile(manifestPath(path), 'utf-8'),
  ) as Manifest
  return {
    features,
    labels,
    classNames: manifest.per_class_counts.map(([name]) => name),
    dim,
  }
}
