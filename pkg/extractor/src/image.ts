/**
 * Image decoding (PNG/JPEG), box cropping, and bilinear resize to the
 * backbone input size. Pixels are float32 RGB in [0, 255].
 */

import * as fs from 'fs'
import { PNG } from 'pngjs'
import * as jpeg from 'jpeg-js'

export interface RgbImage {
  width: number
  height: number
  data: Float32Array // H x W x 3, row-major
}

export function decodeImage(filePath: string): RgbImage {
  const buf = fs.readFileSync(filePath)
  let width: number
  let height: number
  let rgba: Uint8Array
  if (buf.length >= 8 && buf[0] === 0x89 && buf[1] === 0x50) {
    const png = PNG.sync.read(buf)
    width = png.width
    height = png.height
    rgba = png.data
  } else {
    const img = jpeg.decode(buf, { useTArray: true, maxMemoryUsageInMB: 512 })
    width = img.width
    height = img.height
    rgba = img.data
  }
  const data = new Float32Array(width * height * 3)
  for (let i = 0, j = 0; i < width * height; i++, j += 4) {
    data[3 * i] = rgba[j]
    data[3 * i + 1] = rgba[j + 1]
    data[3 * i + 2] = rgba[j + 2]
  }
  return { width, height, data }
}

export function cropBox(img: RgbImage, x1: number, y1: number, x2: number, y2: number): RgbImage {
  const left = Math.max(0, Math.floor(Math.min(x1, x2)))
  const top = Math.max(0, Math.floor(Math.min(y1, y2)))
  const right = Math.min(img.width, Math.ceil(Math.max(x1, x2)))
  const bottom = Math.min(img.height, Math.ceil(Math.max(y1, y2)))
  const w = right - left
  const h = bottom - top
  if (w <= 0 || h <= 0) {
    throw new Error(`degenerate box [${x1},${y1},${x2},${y2}]`)
  }
  const data = new Float32Array(w * h * 3)
  for (let r = 0; r < h; r++) {
    const src = ((top + r) * img.width + left) * 3
    data.set(img.data.subarray(src, src + w * 3), r * w * 3)
  }
  return { width: w, height: h, data }
}

export function resizeBilinear(img: RgbImage, size: number): RgbImage {
  const out = new Float32Array(size * size * 3)
  const sx = img.width / size
  const sy = img.height / size
  for (let r = 0; r < size; r++) {
    const fy = Math.min((r + 0.5) * sy - 0.5, img.height - 1)
    const y0 = Math.max(0, Math.floor(fy))
    const y1 = Math.min(img.height - 1, y0 + 1)
    const wy = Math.max(0, fy - y0)
    for (let c = 0; c < size; c++) {
      const fx = Math.min((c + 0.5) * sx - 0.5, img.width - 1)
      const x0 = Math.max(0, Math.floor(fx))
      const x1 = Math.min(img.width - 1, x0 + 1)
      const wx = Math.max(0, fx - x0)
      for (let ch = 0; ch < 3; ch++) {
        const p00 = img.data[(y0 * img.width + x0) * 3 + ch]
        const p01 = img.data[(y0 * img.width + x1) * 3 + ch]
        const p10 = img.data[(y1 * img.width + x0) * 3 + ch]
        const p11 = img.data[(y1 * img.width + x1) * 3 + ch]
        const top = p00 + (p01 - p00) * wx
        const bot = p10 + (p11 - p10) * wx
        out[(r * size + c) * 3 + ch] = top + (bot - top) * wy
      }
    }
  }
  return { width: size, height: size, data: out }
}
