import { describe, expect, it } from 'vitest'
import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { encodeRbf1, readRbf1, writeRbf1, FeatureFile } from '../src/rbf1'

function tmpFile(name: string): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'rbf1-'))
  return path.join(dir, name)
}

describe('rbf1', () => {
  it('round trips records', () => {
    const file: FeatureFile = {
      d: 3,
      backboneTag: 'vgg19',
      records: [
        { features: Float32Array.from([1, 2.5, -3]), distanceM: 12.25, sourceId: 'frame0:0' },
        { features: Float32Array.from([0.125, 0, 9]), distanceM: 3.5, sourceId: 'frame0:1' },
      ],
    }
    const p = tmpFile('a.rbf')
    writeRbf1(p, file)
    const back = readRbf1(p)
    expect(back.d).toBe(3)
    expect(back.backboneTag).toBe('vgg19')
    expect(back.records.length).toBe(2)
    expect(Array.from(back.records[0].features)).toEqual([1, 2.5, -3])
    expect(back.records[1].distanceM).toBe(3.5)
    expect(back.records[1].sourceId).toBe('frame0:1')
  })

  it('writes the documented header layout', () => {
    const buf = encodeRbf1({ d: 2, backboneTag: 'x', records: [] })
    expect(buf.toString('ascii', 0, 4)).toBe('RBF1')
    expect(buf.readUInt32LE(4)).toBe(1)
    expect(buf.readUInt32LE(8)).toBe(2)
    expect(Number(buf.readBigUInt64LE(12))).toBe(0)
    expect(buf.length).toBe(4 + 4 + 4 + 8 + 32)
  })

  it('rejects bad magic', () => {
    const p = tmpFile('bad.rbf')
    fs.writeFileSync(p, Buffer.from('NOPE' + '\0'.repeat(60)))
    expect(() => readRbf1(p)).toThrow(/magic/)
  })

  it('rejects mismatched feature length', () => {
    expect(() =>
      encodeRbf1({
        d: 4,
        backboneTag: 't',
        records: [{ features: Float32Array.from([1]), distanceM: 1, sourceId: 'a' }],
      }),
    ).toThrow(/length/)
  })
})
