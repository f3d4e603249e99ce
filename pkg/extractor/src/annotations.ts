/**
 * Object annotations: bounding boxes with ground-truth distances.
 *
 * Two layouts are accepted:
 *  - simple CSV: image, x1, y1, x2, y2, distance_m (header optional)
 *  - KITTI label files: one <frame>.txt per image, space-separated
 *    "type truncated occluded alpha x1 y1 x2 y2 h w l x y z ry";
 *    z (camera-frame depth) is the distance, DontCare rows are skipped.
 */

import * as fs from 'fs'
import * as path from 'path'

export interface Annotation {
  image: string
  x1: number
  y1: number
  x2: number
  y2: number
  distanceM: number
}

export function parseCsvAnnotations(text: string): Annotation[] {
  const out: Annotation[] = []
  for (const raw of text.split(/\r?\n/)) {
    const line = raw.trim()
    if (!line || line.startsWith('#')) continue
    const cells = line.split(',').map(c => c.trim())
    if (cells.length < 6) continue
    if (isNaN(Number(cells[1]))) continue // header row
    out.push({
      image: cells[0],
      x1: Number(cells[1]),
      y1: Number(cells[2]),
      x2: Number(cells[3]),
      y2: Number(cells[4]),
      distanceM: Number(cells[5]),
    })
  }
  return out
}

export function parseKittiLabel(text: string, image: string): Annotation[] {
  const out: Annotation[] = []
  for (const raw of text.split(/\r?\n/)) {
    const line = raw.trim()
    if (!line) continue
    const f = line.split(/\s+/)
    if (f.length < 15 || f[0] === 'DontCare') continue
    out.push({
      image,
      x1: Number(f[4]),
      y1: Number(f[5]),
      x2: Number(f[6]),
      y2: Number(f[7]),
      distanceM: Number(f[13]),
    })
  }
  return out
}

export function loadAnnotations(annPath: string, format: 'csv' | 'kitti', imageDir: string): Annotation[] {
  if (format === 'csv') {
    return parseCsvAnnotations(fs.readFileSync(annPath, 'utf-8'))
  }
  // KITTI: annPath is a directory of <frame>.txt files; images are
  // <frame>.png (or .jpg) in imageDir
  const out: Annotation[] = []
  for (const entry of fs.readdirSync(annPath).sort()) {
    if (!entry.endsWith('.txt')) continue
    const frame = entry.slice(0, -4)
    let image = ''
    for (const ext of ['.png', '.jpg', '.jpeg']) {
      if (fs.existsSync(path.join(imageDir, frame + ext))) {
        image = frame + ext
        break
      }
    }
    if (!image) continue
    out.push(...parseKittiLabel(fs.readFileSync(path.join(annPath, entry), 'utf-8'), image))
  }
  return out
}
