import { beforeAll, describe, expect, it } from 'vitest'
import { execFileSync } from 'child_process'
import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { PNG } from 'pngjs'
import { parseCsvAnnotations } from '../src/annotations'
import { FEATURE_DIMS, BackboneName, buildBackbone } from '../src/backbones'
import { cropBox, decodeImage, resizeBilinear } from '../src/image'
import { runExtraction } from '../src/extract'
import { encodeRbf1, writeRbf1 } from '../src/rbf1'
import { setupBackend } from '../src/tfbackend'

const WORK = fs.mkdtempSync(path.join(os.tmpdir(), 'extract-'))
const N_IMAGES = 10

function makeImages(): string {
  for (let k = 0; k < N_IMAGES; k++) {
    const png = new PNG({ width: 96, height: 72 })
    for (let y = 0; y < 72; y++) {
      for (let x = 0; x < 96; x++) {
        const i = (y * 96 + x) << 2
        png.data[i] = (x * 2 + k * 13) % 256
        png.data[i + 1] = (y * 3 + k * 29) % 256
        png.data[i + 2] = (x + y + k * 7) % 256
        png.data[i + 3] = 255
      }
    }
    fs.writeFileSync(path.join(WORK, `frame${k}.png`), PNG.sync.write(png))
  }
  let csv = 'image,x1,y1,x2,y2,distance_m\n'
  for (let k = 0; k < N_IMAGES; k++) {
    csv += `frame${k}.png,${4 + k},3,${70 + k},${50 + k},${2.5 + 5.1 * k}\n`
  }
  const annPath = path.join(WORK, 'ann.csv')
  fs.writeFileSync(annPath, csv)
  return annPath
}

let annotationsPath = ''

beforeAll(async () => {
  annotationsPath = makeImages()
  await setupBackend()
})

describe('image ops', () => {
  it('decodes, crops and resizes', () => {
    const img = decodeImage(path.join(WORK, 'frame0.png'))
    expect(img.width).toBe(96)
    expect(img.height).toBe(72)
    const crop = cropBox(img, 10, 5, 42, 37)
    expect(crop.width).toBe(32)
    expect(crop.height).toBe(32)
    const small = resizeBilinear(crop, 64)
    expect(small.width).toBe(64)
    expect(small.data.length).toBe(64 * 64 * 3)
  })

  it('preserves constant images under resize', () => {
    const flat = { width: 9, height: 7, data: new Float32Array(9 * 7 * 3).fill(17) }
    const out = resizeBilinear(flat, 64)
    for (const v of out.data) expect(v).toBeCloseTo(17, 5)
  })

  it('rejects degenerate boxes', () => {
    const img = decodeImage(path.join(WORK, 'frame0.png'))
    expect(() => cropBox(img, 5, 5, 5, 40)).toThrow(/degenerate/)
  })
})

describe('extraction', () => {
  const backbones: BackboneName[] = ['densenet121', 'vgg19', 'resnet50']

  for (const backbone of backbones) {
    it(`produces d=${FEATURE_DIMS[backbone]} features with ${backbone}`, async () => {
      const annotations = parseCsvAnnotations(fs.readFileSync(annotationsPath, 'utf-8'))
      const { file, skipped } = await runExtraction({
        imageDir: WORK,
        annotations,
        backbone,
      })
      expect(skipped).toBe(0)
      expect(file.d).toBe(FEATURE_DIMS[backbone])
      expect(file.records.length).toBe(N_IMAGES)
      expect(file.records[0].sourceId).toBe('frame0:0')
      expect(file.records[3].distanceM).toBeCloseTo(2.5 + 5.1 * 3)
      for (const rec of file.records) {
        expect(rec.features.length).toBe(FEATURE_DIMS[backbone])
        expect(Array.from(rec.features).every(Number.isFinite)).toBe(true)
      }
      writeRbf1(path.join(WORK, `${backbone}.rbf`), file)
    }, 120_000)
  }

  it('skips bad objects and keeps going', async () => {
    const annotations = parseCsvAnnotations(
      [
        'frame0.png,4,3,70,50,10.0',
        'frame1.png,8,8,8,40,12.0', // zero-width box
        'missing.png,1,1,20,20,9.0', // missing image
        'frame2.png,4,3,70,50,-1.0', // bad distance
        'frame3.png,4,3,70,50,30.0',
      ].join('\n'),
    )
    const { file, skipped } = await runExtraction({
      imageDir: WORK,
      annotations,
      backbone: 'vgg19',
    })
    expect(skipped).toBe(3)
    expect(file.records.map(r => r.sourceId)).toEqual(['frame0:0', 'frame3:0'])
  }, 120_000)

  it('is deterministic across runs', async () => {
    const annotations = parseCsvAnnotations(fs.readFileSync(annotationsPath, 'utf-8')).slice(0, 3)
    const a = await runExtraction({ imageDir: WORK, annotations, backbone: 'vgg19' })
    const b = await runExtraction({ imageDir: WORK, annotations, backbone: 'vgg19' })
    expect(encodeRbf1(a.file).equals(encodeRbf1(b.file))).toBe(true)
  }, 120_000)

  it('loads flat weight blobs deterministically', async () => {
    const { loadFlatWeights } = await import('../src/backbones')
    const model = buildBackbone('vgg19')
    const count = model.getWeights().reduce((acc, w) => acc + w.size, 0)
    const blob = Buffer.alloc(4 * count)
    for (let i = 0; i < count; i++) blob.writeFloatLE(((i * 2654435761) % 1000) / 1e6, 4 * i)
    const wpath = path.join(WORK, 'w.bin')
    fs.writeFileSync(wpath, blob)
    expect(loadFlatWeights(model, wpath)).toBe(count)
    model.dispose()
    const short = path.join(WORK, 'short.bin')
    fs.writeFileSync(short, blob.subarray(0, 400))
    const model2 = buildBackbone('vgg19')
    expect(() => loadFlatWeights(model2, short)).toThrow(/too short/)
    model2.dispose()
  }, 120_000)
})

describe('cross-component round trip', () => {
  it('parses under the primary package dataio', () => {
    const rbf = path.join(WORK, 'vgg19.rbf')
    if (!fs.existsSync(rbf)) return
    let cli = 'rbreg'
    try {
      execFileSync(cli, ['--version'], { stdio: 'pipe' })
    } catch {
      console.warn('primary CLI not installed; skipping round trip')
      return
    }
    const out = path.join(WORK, 'vgg19.csv')
    const stdout = execFileSync(cli, ['convert', rbf, out], { encoding: 'utf-8' })
    expect(stdout).toMatch(/10 records, d=512/)
    const lines = fs.readFileSync(out, 'utf-8').trim().split('\n')
    expect(lines[0]).toBe('# backbone=vgg19')
    expect(lines.length).toBe(2 + N_IMAGES)
  })
})
