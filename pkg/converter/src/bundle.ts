/**
 * Writer/reader for the engine's tensor-bundle format: a UTF-8 manifest.json
 * and a raw little-endian float32 data.bin with 64-byte-aligned sections.
 * Byte layout here is the bit-exact contract with the Python engine.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

export const FORMAT_VERSION = 1;
export const ALIGNMENT = 64;

export interface EngineConfig {
  vocab_size: number;
  d_model: number;
  n_layers: number;
  d_state: number;
  head_dim: number;
  expand: number;
  n_groups: number;
  conv_kernel: number;
  chunk_size: number;
  norm_eps: number;
  /** null encodes an unbounded limit (Infinity is not valid JSON) */
  dt_limits: [number | null, number | null];
}

export interface ManifestEntry {
  name: string;
  dtype: 'f32';
  shape: number[];
  offset: number;
  length: number;
}

export interface Manifest {
  format_version: number;
  config: EngineConfig;
  tensors: ManifestEntry[];
}

export interface NamedTensor {
  name: string;
  shape: number[];
  values: Float32Array;
}

/** Canonical parameter names in payload order; must match the engine. */
export function tensorNames(cfg: EngineConfig): string[] {
  const names = ['embedding'];
  for (let i = 0; i < cfg.n_layers; i++) {
    names.push(
      `layers.${i}.in_proj.weight`,
      `layers.${i}.conv1d.weight`,
      `layers.${i}.conv1d.bias`,
      `layers.${i}.dt_bias`,
      `layers.${i}.A_log`,
      `layers.${i}.D`,
      `layers.${i}.norm.weight`,
      `layers.${i}.out_proj.weight`,
    );
  }
  names.push('final_norm.weight');
  return names;
}

export function expectedShape(name: string, cfg: EngineConfig): number[] {
  const dInner = cfg.expand * cfg.d_model;
  const nHeads = dInner / cfg.head_dim;
  const convDim = dInner + 2 * cfg.n_groups * cfg.d_state;
  const dInProj = 2 * dInner + 2 * cfg.n_groups * cfg.d_state + nHeads;
  if (name === 'embedding') return [cfg.vocab_size, cfg.d_model];
  if (name === 'final_norm.weight') return [cfg.d_model];
  const leaf = name.split('.').slice(2).join('.');
  switch (leaf) {
    case 'in_proj.weight':
      return [cfg.d_model, dInProj];
    case 'conv1d.weight':
      return [convDim, cfg.conv_kernel];
    case 'conv1d.bias':
      return [convDim];
    case 'dt_bias':
    case 'A_log':
    case 'D':
      return [nHeads];
    case 'norm.weight':
      return [dInner];
    case 'out_proj.weight':
      return [dInner, cfg.d_model];
    default:
      throw new Error(`unknown canonical tensor name ${name}`);
  }
}

function shapesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export function writeBundle(tensors: NamedTensor[], cfg: EngineConfig, outDir: string): void {
  mkdirSync(outDir, { recursive: true });
  const byName = new Map(tensors.map((t) => [t.name, t]));
  const entries: ManifestEntry[] = [];
  const chunks: Buffer[] = [];
  let offset = 0;

  for (const name of tensorNames(cfg)) {
    const tensor = byName.get(name);
    if (!tensor) throw new Error(`missing canonical tensor ${name}`);
    const want = expectedShape(name, cfg);
    if (!shapesEqual(tensor.shape, want)) {
      throw new Error(`${name}: shape [${tensor.shape}] != expected [${want}]`);
    }
    const padding = (ALIGNMENT - (offset % ALIGNMENT)) % ALIGNMENT;
    if (padding > 0) {
      chunks.push(Buffer.alloc(padding));
      offset += padding;
    }
    const blob = Buffer.alloc(4 * tensor.values.length);
    for (let i = 0; i < tensor.values.length; i++) blob.writeFloatLE(tensor.values[i], 4 * i);
    entries.push({ name, dtype: 'f32', shape: tensor.shape, offset, length: blob.length });
    chunks.push(blob);
    offset += blob.length;
  }

  const manifest: Manifest = { format_version: FORMAT_VERSION, config: cfg, tensors: entries };
  writeFileSync(join(outDir, 'manifest.json'), JSON.stringify(manifest, null, 2) + '\n', 'utf-8');
  writeFileSync(join(outDir, 'data.bin'), Buffer.concat(chunks));
}

export function readBundle(dir: string): { manifest: Manifest; payload: Buffer } {
  const manifest = JSON.parse(readFileSync(join(dir, 'manifest.json'), 'utf-8')) as Manifest;
  const payload = readFileSync(join(dir, 'data.bin'));
  return { manifest, payload };
}

export function readBundleTensor(
  bundle: { manifest: Manifest; payload: Buffer },
  name: string,
): Float32Array {
  const entry = bundle.manifest.tensors.find((t) => t.name === name);
  if (!entry) throw new Error(`bundle has no tensor ${name}`);
  const n = entry.length / 4;
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = bundle.payload.readFloatLE(entry.offset + 4 * i);
  return out;
}
