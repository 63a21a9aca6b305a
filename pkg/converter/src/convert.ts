/**
 * One-shot checkpoint converter.
 *
 * Usage:
 *   convert --source <dir> --out <dir> [--audit] [--mapping <table.json>]
 *
 * The source directory must hold a HuggingFace Mamba-2 checkpoint: one or
 * more *.safetensors files plus config.json. Output is the engine's bundle
 * (manifest.json + data.bin), all tensors cast to float32. Conversion is
 * deterministic: payload bytes depend only on source values and the mapping
 * table.
 */

import { existsSync, readFileSync, readdirSync } from 'node:fs';
import { join } from 'node:path';

import { audit, formatAuditReport } from './audit.js';
import { writeBundle, type EngineConfig, type NamedTensor } from './bundle.js';
import {
  applyTransform,
  expandKnownUnmapped,
  expandRules,
  loadMappingTable,
  translateConfig,
  type MappingTable,
} from './mapping.js';
import { loadSafetensors, readTensorF32, type SafetensorsFile } from './safetensors.js';

export interface ConversionResult {
  config: EngineConfig;
  converted: string[];
  unmapped: string[];
}

export function loadCheckpoint(sourceDir: string): {
  files: SafetensorsFile[];
  config: Record<string, unknown>;
} {
  if (!existsSync(sourceDir)) {
    throw new Error(
      `source ${sourceDir} does not exist (remote repo ids are not fetched; pass a local checkout)`,
    );
  }
  const configPath = join(sourceDir, 'config.json');
  if (!existsSync(configPath)) {
    throw new Error(`missing config.json under ${sourceDir}`);
  }
  const config = JSON.parse(readFileSync(configPath, 'utf-8')) as Record<string, unknown>;
  const stFiles = readdirSync(sourceDir).filter((f) => f.endsWith('.safetensors')).sort();
  if (stFiles.length === 0) {
    throw new Error(`no .safetensors files under ${sourceDir}`);
  }
  return { files: stFiles.map((f) => loadSafetensors(join(sourceDir, f))), config };
}

export function convert(
  sourceDir: string,
  outDir: string,
  table: MappingTable = loadMappingTable(),
): ConversionResult {
  const { files, config } = loadCheckpoint(sourceDir);
  const engineConfig = translateConfig(config, table);
  const rules = expandRules(table, engineConfig.n_layers);
  const knownUnmapped = expandKnownUnmapped(table, engineConfig.n_layers);

  const produced = new Map<string, NamedTensor>();
  const unmapped: string[] = [];
  for (const file of files) {
    for (const sourceName of file.tensors.keys()) {
      const rule = rules.get(sourceName);
      if (!rule) {
        if (!knownUnmapped.has(sourceName)) {
          unmapped.push(sourceName);
        } else {
          unmapped.push(`${sourceName} (expected, no engine slot)`);
        }
        continue;
      }
      if (produced.has(rule.target)) {
        throw new Error(`duplicate production of canonical tensor ${rule.target}`);
      }
      const info = file.tensors.get(sourceName)!;
      const raw = readTensorF32(file, sourceName);
      const { values, shape } = applyTransform(raw, info.shape, rule.transform);
      produced.set(rule.target, { name: rule.target, shape, values });
    }
  }

  writeBundle([...produced.values()], engineConfig, outDir);
  return {
    config: engineConfig,
    converted: [...produced.keys()],
    unmapped,
  };
}

function parseArgs(argv: string[]): {
  source?: string;
  out?: string;
  audit: boolean;
  mapping?: string;
} {
  const args = { audit: false } as { source?: string; out?: string; audit: boolean; mapping?: string };
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--source':
        args.source = argv[++i];
        break;
      case '--out':
        args.out = argv[++i];
        break;
      case '--mapping':
        args.mapping = argv[++i];
        break;
      case '--audit':
        args.audit = true;
        break;
      case '--help':
      case '-h':
        console.log('usage: convert --source <dir> --out <dir> [--audit] [--mapping <table.json>]');
        process.exit(0);
        break;
      default:
        console.error(`unknown argument ${argv[i]}`);
        process.exit(2);
    }
  }
  return args;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  if (!args.source || !args.out) {
    console.error('usage: convert --source <dir> --out <dir> [--audit] [--mapping <table.json>]');
    return 2;
  }
  const table = loadMappingTable(args.mapping);
  const result = convert(args.source, args.out, table);
  console.log(
    `converted ${result.converted.length} tensors ` +
      `(${result.config.n_layers} layers, d_model=${result.config.d_model}) -> ${args.out}`,
  );
  for (const name of result.unmapped) {
    console.log(`  unmapped: ${name}`);
  }
  if (args.audit) {
    const report = audit(args.source, args.out, table);
    console.log(formatAuditReport(report));
    if (report.mismatches.length > 0) return 1;
  }
  return 0;
}

const isDirectRun =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
