/**
 * Synthetic HuggingFace-style checkpoint builder for tests: a config.json and
 * a model.safetensors with the upstream tensor names, shapes, and dtypes,
 * filled with deterministic values so transforms are checkable element-wise.
 */

import { mkdirSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { writeSafetensors } from '../src/safetensors.js';

export interface TinyDims {
  vocab: number;
  dModel: number;
  nLayers: number;
  dState: number;
  headDim: number;
  expand: number;
  nGroups: number;
  convKernel: number;
}

export const TINY: TinyDims = {
  vocab: 16,
  dModel: 8,
  nLayers: 2,
  dState: 4,
  headDim: 4,
  expand: 2,
  nGroups: 1,
  convKernel: 4,
};

export function derived(dims: TinyDims) {
  const dInner = dims.expand * dims.dModel;
  const nHeads = dInner / dims.headDim;
  const convDim = dInner + 2 * dims.nGroups * dims.dState;
  const dInProj = 2 * dInner + 2 * dims.nGroups * dims.dState + nHeads;
  return { dInner, nHeads, convDim, dInProj };
}

/** value = base + 0.001 * index: unique, exactly representable, easy to trace */
export function ramp(n: number, base: number): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.fround(base + 0.001 * i);
  return out;
}

export function writeTinyCheckpoint(
  dir: string,
  dims: TinyDims = TINY,
  opts: { bf16?: boolean } = {},
): void {
  const { dInner, nHeads, convDim, dInProj } = derived(dims);
  mkdirSync(dir, { recursive: true });

  const config = {
    architectures: ['Mamba2ForCausalLM'],
    vocab_size: dims.vocab,
    hidden_size: dims.dModel,
    num_hidden_layers: dims.nLayers,
    state_size: dims.dState,
    head_dim: dims.headDim,
    expand: dims.expand,
    n_groups: dims.nGroups,
    conv_kernel: dims.convKernel,
    chunk_size: 16,
    layer_norm_epsilon: 1e-5,
    time_step_limit: [0.0, 'inf'],
  };
  writeFileSync(join(dir, 'config.json'), JSON.stringify(config, null, 2), 'utf-8');

  const dtype = opts.bf16 ? ('BF16' as const) : ('F32' as const);
  const entries = [
    {
      name: 'backbone.embeddings.weight',
      dtype,
      shape: [dims.vocab, dims.dModel],
      values: ramp(dims.vocab * dims.dModel, 0.0),
    },
  ];
  for (let i = 0; i < dims.nLayers; i++) {
    const base = 0.1 * (i + 1);
    entries.push(
      {
        name: `backbone.layers.${i}.norm.weight`, // pre-norm: no engine slot
        dtype,
        shape: [dims.dModel],
        values: ramp(dims.dModel, base + 0.5),
      },
      {
        name: `backbone.layers.${i}.mixer.in_proj.weight`,
        dtype,
        shape: [dInProj, dims.dModel], // torch Linear: (out, in)
        values: ramp(dInProj * dims.dModel, base + 1),
      },
      {
        name: `backbone.layers.${i}.mixer.conv1d.weight`,
        dtype,
        shape: [convDim, 1, dims.convKernel],
        values: ramp(convDim * dims.convKernel, base + 2),
      },
      {
        name: `backbone.layers.${i}.mixer.conv1d.bias`,
        dtype,
        shape: [convDim],
        values: ramp(convDim, base + 3),
      },
      {
        name: `backbone.layers.${i}.mixer.dt_bias`,
        dtype,
        shape: [nHeads],
        values: ramp(nHeads, base + 4),
      },
      {
        name: `backbone.layers.${i}.mixer.A_log`,
        dtype,
        shape: [nHeads],
        values: ramp(nHeads, base + 5),
      },
      {
        name: `backbone.layers.${i}.mixer.D`,
        dtype,
        shape: [nHeads],
        values: ramp(nHeads, base + 6),
      },
      {
        name: `backbone.layers.${i}.mixer.norm.weight`,
        dtype,
        shape: [dInner],
        values: ramp(dInner, base + 7),
      },
      {
        name: `backbone.layers.${i}.mixer.out_proj.weight`,
        dtype,
        shape: [dims.dModel, dInner], // torch Linear: (out, in)
        values: ramp(dims.dModel * dInner, base + 8),
      },
    );
  }
  entries.push({
    name: 'backbone.norm_f.weight',
    dtype,
    shape: [dims.dModel],
    values: ramp(dims.dModel, 0.99),
  });

  writeFileSync(join(dir, 'model.safetensors'), writeSafetensors(entries, { format: 'pt' }));
}
