/**
 * RBF1 feature-file writer/reader (little-endian):
 *   "RBF1" | u32 version=1 | u32 d | u64 record count | 32-byte tag
 *   | records of [f32 features[d] | f64 distance_m | u32 id_len | id bytes]
 */

import * as fs from 'fs'

export const MAGIC = 'RBF1'
export const VERSION = 1
const TAG_BYTES = 32

export interface FeatureRecord {
  features: Float32Array
  distanceM: number
  sourceId: string
}

export interface FeatureFile {
  d: number
  backboneTag: string
  records: FeatureRecord[]
}

export function encodeRbf1(file: FeatureFile): Buffer {
  const chunks: Buffer[] = []
  const header = Buffer.alloc(4 + 4 + 4 + 8 + TAG_BYTES)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(VERSION, 4)
  header.writeUInt32LE(file.d, 8)
  header.writeBigUInt64LE(BigInt(file.records.length), 12)
  header.write(file.backboneTag.slice(0, TAG_BYTES), 20, 'utf-8')
  chunks.push(header)
  for (const rec of file.records) {
    if (rec.features.length !== file.d) {
      throw new Error(`record ${rec.sourceId}: feature length ${rec.features.length} != d=${file.d}`)
    }
    const feat = Buffer.alloc(4 * file.d)
    for (let i = 0; i < file.d; i++) feat.writeFloatLE(rec.features[i], 4 * i)
    const id = Buffer.from(rec.sourceId, 'utf-8')
    const tail = Buffer.alloc(8 + 4)
    tail.writeDoubleLE(rec.distanceM, 0)
    tail.writeUInt32LE(id.length, 8)
    chunks.push(feat, tail, id)
  }
  return Buffer.concat(chunks)
}

export function writeRbf1(path: string, file: FeatureFile): void {
  fs.writeFileSync(path, encodeRbf1(file))
}

export function readRbf1(path: string): FeatureFile {
  const buf = fs.readFileSync(path)
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`)
  const d = buf.readUInt32LE(8)
  const count = Number(buf.readBigUInt64LE(12))
  let tagEnd = 20
  while (tagEnd < 20 + TAG_BYTES && buf[tagEnd] !== 0) tagEnd++
  const backboneTag = buf.toString('utf-8', 20, tagEnd)
  const records: FeatureRecord[] = []
  let off = 20 + TAG_BYTES
  for (let i = 0; i < count; i++) {
    const features = new Float32Array(d)
    for (let j = 0; j < d; j++) features[j] = buf.readFloatLE(off + 4 * j)
    off += 4 * d
    const distanceM = buf.readDoubleLE(off)
    const idLen = buf.readUInt32LE(off + 8)
    off += 12
    const sourceId = buf.toString('utf-8', off, off + idLen)
    off += idLen
    records.push({ features, distanceM, sourceId })
  }
  if (off !== buf.length) throw new Error(`${path}: trailing bytes`)
  return { d, backboneTag, records }
}
