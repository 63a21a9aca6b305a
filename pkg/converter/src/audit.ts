/**
 * Post-conversion audit: re-derives every mapped tensor from the source
 * checkpoint, compares shape and a SHA-256 digest against the bundle payload,
 * and lists source tensors without an engine slot plus bundle tensors with no
 * source. Report-only; the caller decides what a mismatch means.
 */

import { createHash } from 'node:crypto';

import { readBundle, readBundleTensor } from './bundle.js';
import {
  applyTransform,
  expandKnownUnmapped,
  expandRules,
  loadMappingTable,
  translateConfig,
  type MappingTable,
} from './mapping.js';
import { loadCheckpoint } from './convert.js';
import { readTensorF32 } from './safetensors.js';

export interface AuditEntry {
  name: string;
  kind: 'checksum' | 'shape' | 'missing';
  detail: string;
}

export interface AuditReport {
  compared: number;
  mismatches: AuditEntry[];
  unmappedSource: string[];
  extraBundle: string[];
}

function digest(values: Float32Array): string {
  const buf = Buffer.alloc(4 * values.length);
  for (let i = 0; i < values.length; i++) buf.writeFloatLE(values[i], 4 * i);
  return createHash('sha256').update(buf).digest('hex');
}

export function audit(
  sourceDir: string,
  bundleDir: string,
  table: MappingTable = loadMappingTable(),
): AuditReport {
  const { files, config } = loadCheckpoint(sourceDir);
  const engineConfig = translateConfig(config, table);
  const rules = expandRules(table, engineConfig.n_layers);
  const knownUnmapped = expandKnownUnmapped(table, engineConfig.n_layers);
  const bundle = readBundle(bundleDir);
  const manifestByName = new Map(bundle.manifest.tensors.map((t) => [t.name, t]));

  const mismatches: AuditEntry[] = [];
  const unmappedSource: string[] = [];
  const coveredTargets = new Set<string>();
  let compared = 0;

  for (const file of files) {
    for (const sourceName of file.tensors.keys()) {
      const rule = rules.get(sourceName);
      if (!rule) {
        if (!knownUnmapped.has(sourceName)) unmappedSource.push(sourceName);
        continue;
      }
      coveredTargets.add(rule.target);
      const info = file.tensors.get(sourceName)!;
      // re-derive post-transform values exactly as convert() does
      const expected = applyTransform(readTensorF32(file, sourceName), info.shape, rule.transform);
      const entry = manifestByName.get(rule.target);
      if (!entry) {
        mismatches.push({ name: rule.target, kind: 'missing', detail: 'absent from bundle' });
        continue;
      }
      compared += 1;
      if (!shapesEqual(entry.shape, expected.shape)) {
        mismatches.push({
          name: rule.target,
          kind: 'shape',
          detail: `bundle [${entry.shape}] vs source-derived [${expected.shape}]`,
        });
        continue;
      }
      const bundleValues = readBundleTensor(bundle, rule.target);
      if (digest(bundleValues) !== digest(expected.values)) {
        mismatches.push({ name: rule.target, kind: 'checksum', detail: 'sha256 differs' });
      }
    }
  }

  const extraBundle = bundle.manifest.tensors
    .map((t) => t.name)
    .filter((name) => !coveredTargets.has(name));
  return { compared, mismatches, unmappedSource, extraBundle };
}

function shapesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export function formatAuditReport(report: AuditReport): string {
  const lines = [
    `audit: compared ${report.compared} tensors, ${report.mismatches.length} mismatches`,
  ];
  for (const m of report.mismatches) lines.push(`  MISMATCH ${m.kind} ${m.name}: ${m.detail}`);
  for (const name of report.unmappedSource) lines.push(`  unmapped source tensor: ${name}`);
  for (const name of report.extraBundle) lines.push(`  bundle tensor with no source: ${name}`);
  return lines.join('\n');
}
