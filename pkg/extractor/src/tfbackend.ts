/**
 * Backend selection: try the WASM backend (much faster convolutions in
 * node), fall back to the pure-JS CPU backend.
 */

import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

export async function setupBackend(log: (msg: string) => void = () => undefined): Promise<string> {
  try {
    const wasm = require('@tensorflow/tfjs-backend-wasm')
    const wasmDir = path.dirname(require.resolve('@tensorflow/tfjs-backend-wasm/dist/tfjs-backend-wasm.wasm'))
    wasm.setWasmPaths(wasmDir + path.sep)
    const ok = await tf.setBackend('wasm')
    if (ok) {
      await tf.ready()
      log('using wasm backend')
      return 'wasm'
    }
  } catch (err) {
    log(`wasm backend unavailable (${(err as Error).message})`)
  }
  await tf.setBackend('cpu')
  await tf.ready()
  log('using cpu backend')
  return 'cpu'
}
