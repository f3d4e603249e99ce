#!/usr/bin/env node
/**
 * Command-line entry:
 *   rbf-extract --images <dir> --annotations <file|dir> --backbone <name> --out <file>
 *               [--format csv|kitti] [--weights <bin>] [--batch N]
 */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'
import { loadAnnotations } from './annotations'
import { BackboneName } from './backbones'
import { runExtraction } from './extract'
import { writeRbf1 } from './rbf1'
import { setupBackend } from './tfbackend'

async function main(): Promise<void> {
  const argv = await yargs(hideBin(process.argv))
    .option('images', { type: 'string', demandOption: true, describe: 'Image directory' })
    .option('annotations', { type: 'string', demandOption: true, describe: 'CSV file or KITTI label directory' })
    .option('backbone', {
      type: 'string',
      demandOption: true,
      choices: ['densenet121', 'vgg19', 'resnet50'] as const,
    })
    .option('out', { type: 'string', demandOption: true, describe: 'Output RBF1 path' })
    .option('format', { type: 'string', choices: ['csv', 'kitti'] as const, default: 'csv' })
    .option('weights', { type: 'string', describe: 'Flat f32 weight blob (model.getWeights order)' })
    .option('batch', { type: 'number', default: 10 })
    .strict()
    .parse()

  await setupBackend(msg => console.error(msg))
  const annotations = loadAnnotations(argv.annotations, argv.format as 'csv' | 'kitti', argv.images)
  if (annotations.length === 0) {
    console.error('no annotations found')
    process.exit(3)
  }
  const { file, skipped } = await runExtraction({
    imageDir: argv.images,
    annotations,
    backbone: argv.backbone as BackboneName,
    weightsPath: argv.weights,
    batchSize: argv.batch,
    log: msg => console.error(msg),
  })
  writeRbf1(argv.out, file)
  console.log(`wrote ${argv.out}: ${file.records.length} records, d=${file.d} (${skipped} skipped)`)
}

main().catch(err => {
  console.error(err)
  process.exit(1)
})
