/** Command-line wrapper: export an image folder through a saved model. */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'
import { exportFeatures } from './export'

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .scriptName('fewgauge-export')
    .option('model', { type: 'string', demandOption: true, describe: 'model directory (model.json + weights.bin)' })
    .option('images', { type: 'string', demandOption: true, describe: 'class-per-folder image directory' })
    .option('out', { type: 'string', demandOption: true, describe: 'output FSF1 path' })
    .option('resize', { type: 'number', default: 84, describe: 'square resize applied before inference' })
    .option('batch-size', { type: 'number', default: 16 })
    .option('name', { type: 'string', default: '', describe: 'dataset name recorded in the manifest' })
    .strict()
    .parse()

  try {
    const result = await exportFeatures({
      modelDir: args.model,
      imageDir: args.images,
      outPath: args.out,
      resize: args.resize,
      batchSize: args['batch-size'],
      datasetName: args.name || undefined,
    })
    console.log(
      `exported ${result.rows} rows (dim ${result.dim}, ` +
        `${result.classNames.length} classes, ${result.skipped} skipped) -> ${args.out}`,
    )
    return 0
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 1
  }
}

if (require.main === module) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code
  })
}
