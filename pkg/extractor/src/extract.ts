/**
 * Extraction pipeline: crop each annotated object, resize to the backbone
 * input size, run the frozen backbone, global-max-pool, and collect RBF1
 * records in input order. Per-object failures are logged and skipped.
 */

import * as path from 'path'
import * as tf from '@tensorflow/tfjs'
import { Annotation } from './annotations'
import { BackboneName, FEATURE_DIMS, INPUT_SIZE, buildBackbone, loadFlatWeights, preprocess } from './backbones'
import { RgbImage, cropBox, decodeImage, resizeBilinear } from './image'
import { FeatureFile, FeatureRecord } from './rbf1'

export interface ExtractionJob {
  imageDir: string
  annotations: Annotation[]
  backbone: BackboneName
  weightsPath?: string
  batchSize?: number
  log?: (msg: string) => void
}

export interface ExtractionResult {
  file: FeatureFile
  skipped: number
}

export async function runExtraction(job: ExtractionJob): Promise<ExtractionResult> {
  const log = job.log ?? (() => undefined)
  const model = buildBackbone(job.backbone)
  if (job.weightsPath) {
    const used = loadFlatWeights(model, job.weightsPath)
    log(`loaded ${used} weight scalars from ${job.weightsPath}`)
  }

  // group annotations by image, preserving overall input order via indices
  const crops: Array<{ index: number; sourceId: string; distanceM: number; pixels: RgbImage }> = []
  let skipped = 0
  const byImage = new Map<string, Array<{ ann: Annotation; index: number; obj: number }>>()
  const perImageCounter = new Map<string, number>()
  job.annotations.forEach((ann, index) => {
    const obj = perImageCounter.get(ann.image) ?? 0
    perImageCounter.set(ann.image, obj + 1)
    const list = byImage.get(ann.image) ?? []
    list.push({ ann, index, obj })
    byImage.set(ann.image, list)
  })

  for (const [image, anns] of byImage) {
    let decoded: RgbImage
    try {
      decoded = decodeImage(path.join(job.imageDir, image))
    } catch (err) {
      skipped += anns.length
      log(`skip ${image}: ${(err as Error).message}`)
      continue
    }
    for (const { ann, index, obj } of anns) {
      try {
        if (!(ann.distanceM > 0)) throw new Error(`non-positive distance ${ann.distanceM}`)
        const crop = cropBox(decoded, ann.x1, ann.y1, ann.x2, ann.y2)
        crops.push({
          index,
          sourceId: `${stripExt(image)}:${obj}`,
          distanceM: ann.distanceM,
          pixels: resizeBilinear(crop, INPUT_SIZE),
        })
      } catch (err) {
        skipped += 1
        log(`skip ${image} object ${obj}: ${(err as Error).message}`)
      }
    }
  }
  crops.sort((a, b) => a.index - b.index)

  const d = FEATURE_DIMS[job.backbone]
  const records: FeatureRecord[] = []
  const batch = job.batchSize ?? 10
  for (let start = 0; start < crops.length; start += batch) {
    const slice = crops.slice(start, start + batch)
    const data = new Float32Array(slice.length * INPUT_SIZE * INPUT_SIZE * 3)
    slice.forEach((c, i) => data.set(c.pixels.data, i * INPUT_SIZE * INPUT_SIZE * 3))
    const features = tf.tidy(() => {
      const pixels = tf.tensor4d(data, [slice.length, INPUT_SIZE, INPUT_SIZE, 3])
      const prepped = preprocess(job.backbone, pixels)
      return model.predict(prepped) as tf.Tensor2D
    })
    const values = (await features.array()) as number[][]
    features.dispose()
    slice.forEach((c, i) => {
      records.push({
        features: Float32Array.from(values[i]),
        distanceM: c.distanceM,
        sourceId: c.sourceId,
      })
    })
  }
  model.dispose()
  if (skipped > 0) log(`skipped ${skipped} object(s)`)
  return { file: { d, backboneTag: job.backbone, records }, skipped }
}

function stripExt(name: string): string {
  const dot = name.lastIndexOf('.')
  return dot > 0 ? name.slice(0, dot) : name
}
