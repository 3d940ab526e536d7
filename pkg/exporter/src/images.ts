/** PNG decoding and class-per-folder dataset listing. */

import * as fs from 'fs/promises'
import * as path from 'path'
import { PNG } from 'pngjs'

export interface LabeledImage {
  file: string
  className: string
}

/**
 * List a class-per-folder image directory: every subdirectory is a class and
 * every regular file inside it is one sample. Class names sort
 * alphabetically and define the label indices.
 */
export async function listImageFolder(root: string): Promise<{
  classNames: string[]
  images: LabeledImage[]
}> {
  const entries = await fs.readdir(root, { withFileTypes: true })
  const classNames = entries
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort()
  if (classNames.length === 0) {
    throw new Error(`no class folders under ${root}`)
  }
  const images: LabeledImage[] = []
  for (const className of classNames) {
    const dir = path.join(root, className)
    const files = (await fs.readdir(dir, { withFileTypes: true }))
      .filter((e) => e.isFile())
      .map((e) => e.name)
      .sort()
    for (const file of files) {
      images.push({ file: path.join(dir, file), className })
    }
  }
  if (images.length === 0) {
    throw new Error(`no images under ${root}`)
  }
  return { classNames, images }
}

export interface DecodedImage {
  /** HWC, RGB in [0, 1] */
  data: Float32Array
  height: number
  width: number
}

export async function decodePng(file: string): Promise<DecodedImage> {
  const raw = await fs.readFile(file)
  const png = PNG.sync.read(raw)
  const pixels = new Float32Array(png.height * png.width * 3)
  for (let i = 0; i < png.height * png.width; i++) {
    pixels[3 * i] = png.data[4 * i] / 255
    pixels[3 * i + 1] = png.data[4 * i + 1] / 255
    pixels[3 * i + 2] = png.data[4 * i + 2] / 255
  }
  return { data: pixels, height: png.height, width: png.width }
}

/** Encode an RGB byte image as PNG (test fixtures). */
export function encodePng(rgb: Uint8Array, height: number, width: number): Buffer {
  const png = new PNG({ width, height })
  for (let i = 0; i < height * width; i++) {
    png.data[4 * i] = rgb[3 * i]
    png.data[4 * i + 1] = rgb[3 * i + 1]
    png.data[4 * i + 2] = rgb[3 * i + 2]
    png.data[4 * i + 3] = 255
  }
  return PNG.sync.write(png)
}
