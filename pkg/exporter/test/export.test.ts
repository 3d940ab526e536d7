import { execFile } from 'child_process'
import * as fs from 'fs/promises'
import * as os from 'os'
import * as path from 'path'
import { promisify } from 'util'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'
import { exportFeatures } from '../src/export'
import { readFsf1, manifestPath } from '../src/fsf1'
import { encodePng } from '../src/images'
import { buildBadExtractor, buildToyExtractor, loadModel, saveModel } from '../src/model'

const run = promisify(execFile)

let tmpDir: string
let modelDir: string
let imageDir: string

/** deterministic noise */
function mulberry32(seed: number) {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function noisyImage(rand: () => number, base: [number, number, number], h: number, w: number) {
  const rgb = new Uint8Array(h * w * 3)
  for (let i = 0; i < h * w; i++) {
    for (let c = 0; c < 3; c++) {
      const v = base[c] + (rand() - 0.5) * 80
      rgb[3 * i + c] = Math.max(0, Math.min(255, Math.round(v)))
    }
  }
  return encodePng(rgb, h, w)
}

const CLASS_COLORS: [string, [number, number, number]][] = [
  ['amber', [220, 160, 30]],
  ['cobalt', [30, 70, 200]],
  ['jade', [20, 180, 90]],
  ['plum', [150, 40, 160]],
  ['rust', [180, 70, 40]],
]

beforeAll(async () => {
  tmpDir = await fs.mkdtemp(path.join(os.tmpdir(), 'export-'))
  modelDir = path.join(tmpDir, 'model')
  await saveModel(buildToyExtractor(84, 16, 1), modelDir)

  imageDir = path.join(tmpDir, 'images')
  const rand = mulberry32(7)
  for (const [name, color] of CLASS_COLORS) {
    const dir = path.join(imageDir, name)
    await fs.mkdir(dir, { recursive: true })
    for (let i = 0; i < 10; i++) {
      // a couple of odd-sized images per class exercise the resize path
      const [h, w] = i % 5 === 4 ? [100, 60] : [84, 84]
      await fs.writeFile(path.join(dir, `img_${i}.png`), noisyImage(rand, color, h, w))
    }
  }
}, 120_000)

afterAll(async () => {
  await fs.rm(tmpDir, { recursive: true, force: true })
})

describe('model persistence', () => {
  it('save/load round trip keeps predictions', async () => {
    const tf = await import('@tensorflow/tfjs')
    const model = buildToyExtractor(84, 16, 3)
    const dir = path.join(tmpDir, 'model-rt')
    await saveModel(model, dir)
    const loaded = await loadModel(dir)
    const input = tf.randomUniform([2, 84, 84, 3], 0, 1, 'float32', 5)
    const a = (model.predict(input) as any).arraySync()
    const b = (loaded.predict(input) as any).arraySync()
    expect(b).toEqual(a)
    input.dispose()
  }, 60_000)

  it('missing model directory errors', async () => {
    await expect(loadModel(path.join(tmpDir, 'nope'))).rejects.toThrow(/cannot load/)
  })
})

describe('exportFeatures', () => {
  it('exports a 5-class toy folder into valid FSF1', async () => {
    const outPath = path.join(tmpDir, 'toy.fsf1')
    const result = await exportFeatures({
      modelDir,
      imageDir,
      outPath,
      resize: 84,
      batchSize: 8,
    })
    expect(result.rows).toBe(50)
    expect(result.dim).toBe(16)
    expect(result.skipped).toBe(0)
    expect(result.classNames).toEqual(CLASS_COLORS.map(([n]) => n))

    const table = await readFsf1(outPath)
    expect(table.labels.length).toBe(50)
    let nonzeroRows = 0
    for (let i = 0; i < 50; i++) {
      let norm = 0
      for (let j = 0; j < table.dim; j++) {
        const v = table.features[i * table.dim + j]
        expect(Number.isFinite(v)).toBe(true)
        expect(v).toBeGreaterThanOrEqual(0)
        norm += v * v
      }
      if (norm > 0) nonzeroRows += 1
    }
    expect(nonzeroRows).toBe(50)

    const manifest = JSON.parse(await fs.readFile(manifestPath(outPath), 'utf-8'))
    expect(manifest.per_class_counts.map(([, c]: [string, number]) => c)).toEqual([
      10, 10, 10, 10, 10,
    ])
  }, 120_000)

  it('primary gauge command runs end-to-end on the export', async () => {
    const outPath = path.join(tmpDir, 'toy.fsf1')
    const gaugeOut = path.join(tmpDir, 'gauge-run')
    const { stdout } = await run('python3', [
      '-m', 'fewgauge.cli', 'gauge',
      '--features', outPath,
      '--setting', 'semi',
      '--way', '5', '--shot', '1', '--query', '5', '--test', '0',
      '--n-tasks', '5', '--seed', '3',
      '--out', gaugeOut,
    ])
    expect(stdout).toContain('gauge: wrote')
    const reports = await fs.readFile(path.join(gaugeOut, 'reports.csv'), 'utf-8')
    const lines = reports.trim().split('\n')
    expect(lines[0]).toContain('episode_id,setting,N,K,Q')
    expect(lines.length).toBe(6)
  }, 120_000)

  it('skips unreadable images with a count', async () => {
    const brokenDir = path.join(tmpDir, 'broken')
    const rand = mulberry32(9)
    for (const name of ['a', 'b']) {
      const dir = path.join(brokenDir, name)
      await fs.mkdir(dir, { recursive: true })
      for (let i = 0; i < 3; i++) {
        await fs.writeFile(path.join(dir, `ok_${i}.png`), noisyImage(rand, [90, 90, 200], 84, 84))
      }
    }
    await fs.writeFile(path.join(brokenDir, 'a', 'junk.png'), Buffer.from('not a png'))
    const result = await exportFeatures({
      modelDir,
      imageDir: brokenDir,
      outPath: path.join(tmpDir, 'broken.fsf1'),
    })
    expect(result.skipped).toBe(1)
    expect(result.rows).toBe(6)
  }, 120_000)

  it('aborts on a non-ReLU-terminated model', async () => {
    const badDir = path.join(tmpDir, 'bad-model')
    await saveModel(buildBadExtractor(84, 8, 2), badDir)
    await expect(
      exportFeatures({
        modelDir: badDir,
        imageDir,
        outPath: path.join(tmpDir, 'bad.fsf1'),
      }),
    ).rejects.toThrow(/ReLU/)
  }, 120_000)
})
