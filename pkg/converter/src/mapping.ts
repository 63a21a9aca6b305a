/**
 * Mapping table between HuggingFace Mamba-2 checkpoints and canonical bundle
 * names. The table itself is data (mapping.json, versioned in the repo) so
 * upstream renames are a data edit, not a code change.
 */

import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import type { EngineConfig } from './bundle.js';

export type Transform = 'none' | 'transpose2d' | 'squeeze_mid';

export interface MappingRule {
  source: string;
  target: string;
  transform: Transform;
}

export interface MappingTable {
  version: number;
  config_fields: Record<string, string>;
  tensors: MappingRule[];
  known_unmapped: string[];
}

export function loadMappingTable(path?: string): MappingTable {
  const tablePath =
    path ?? join(dirname(fileURLToPath(import.meta.url)), '..', 'mapping.json');
  return JSON.parse(readFileSync(tablePath, 'utf-8')) as MappingTable;
}

/** Expand {i} rules over the layer count into concrete source -> rule pairs. */
export function expandRules(table: MappingTable, nLayers: number): Map<string, MappingRule> {
  const out = new Map<string, MappingRule>();
  for (const rule of table.tensors) {
    if (rule.source.includes('{i}')) {
      for (let i = 0; i < nLayers; i++) {
        out.set(rule.source.replaceAll('{i}', String(i)), {
          source: rule.source.replaceAll('{i}', String(i)),
          target: rule.target.replaceAll('{i}', String(i)),
          transform: rule.transform,
        });
      }
    } else {
      out.set(rule.source, rule);
    }
  }
  return out;
}

export function expandKnownUnmapped(table: MappingTable, nLayers: number): Set<string> {
  const out = new Set<string>();
  for (const pattern of table.known_unmapped) {
    if (pattern.includes('{i}')) {
      for (let i = 0; i < nLayers; i++) out.add(pattern.replaceAll('{i}', String(i)));
    } else {
      out.add(pattern);
    }
  }
  return out;
}

export function applyTransform(
  values: Float32Array,
  shape: number[],
  transform: Transform,
): { values: Float32Array; shape: number[] } {
  if (transform === 'none') {
    return { values, shape };
  }
  if (transform === 'squeeze_mid') {
    if (shape.length !== 3 || shape[1] !== 1) {
      throw new Error(`squeeze_mid expects (C, 1, k), got [${shape}]`);
    }
    return { values, shape: [shape[0], shape[2]] };
  }
  if (transform === 'transpose2d') {
    if (shape.length !== 2) {
      throw new Error(`transpose2d expects a matrix, got [${shape}]`);
    }
    const [rows, cols] = shape;
    const out = new Float32Array(values.length);
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < cols; c++) {
        out[c * rows + r] = values[r * cols + c];
      }
    }
    return { values: out, shape: [cols, rows] };
  }
  throw new Error(`unknown transform ${transform}`);
}

/** Translate a HuggingFace config.json object into the engine config. */
export function translateConfig(raw: Record<string, unknown>, table: MappingTable): EngineConfig {
  const cfg: Record<string, unknown> = {};
  for (const [src, dst] of Object.entries(table.config_fields)) {
    if (!(src in raw)) {
      throw new Error(`config.json is missing required field '${src}'`);
    }
    cfg[dst] = raw[src];
  }
  const limits = cfg['dt_limits'] as unknown[];
  cfg['dt_limits'] = [
    normalizeLimit(limits?.[0], 0),
    normalizeLimit(limits?.[1], null),
  ];
  return cfg as unknown as EngineConfig;
}

function normalizeLimit(value: unknown, fallback: number | null): number | null {
  if (value === undefined || value === null) return fallback;
  if (typeof value === 'number') return Number.isFinite(value) ? value : null;
  if (typeof value === 'string') {
    // HF serializes infinity as a string in some configs
    const parsed = Number(value);
    return Number.isFinite(parsed) ? parsed : null;
  }
  throw new Error(`cannot interpret dt limit ${String(value)}`);
}
