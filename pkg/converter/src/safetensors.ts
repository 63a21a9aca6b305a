/**
 * Minimal safetensors reader: 8-byte little-endian header length, JSON header
 * mapping tensor names to {dtype, shape, data_offsets}, then the raw data
 * section. Values are decoded to Float32Array regardless of storage dtype.
 */

import { readFileSync } from 'node:fs';

export interface TensorInfo {
  dtype: string;
  shape: number[];
  /** offsets into the data section, [start, end) */
  dataOffsets: [number, number];
}

export interface SafetensorsFile {
  tensors: Map<string, TensorInfo>;
  metadata: Record<string, string>;
  data: Buffer;
}

export function parseSafetensors(buffer: Buffer): SafetensorsFile {
  if (buffer.length < 8) {
    throw new Error('safetensors file too short for header length');
  }
  const headerLen = Number(buffer.readBigUInt64LE(0));
  if (8 + headerLen > buffer.length) {
    throw new Error(`header length ${headerLen} exceeds file size ${buffer.length}`);
  }
  const header = JSON.parse(buffer.subarray(8, 8 + headerLen).toString('utf-8'));
  const data = buffer.subarray(8 + headerLen);

  const tensors = new Map<string, TensorInfo>();
  let metadata: Record<string, string> = {};
  for (const [name, value] of Object.entries(header)) {
    if (name === '__metadata__') {
      metadata = value as Record<string, string>;
      continue;
    }
    const info = value as { dtype: string; shape: number[]; data_offsets: [number, number] };
    tensors.set(name, {
      dtype: info.dtype,
      shape: info.shape,
      dataOffsets: info.data_offsets,
    });
  }
  return { tensors, metadata, data };
}

export function loadSafetensors(path: string): SafetensorsFile {
  return parseSafetensors(readFileSync(path));
}

function numElements(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

function bf16ToF32(bits: number): number {
  const buf = new DataView(new ArrayBuffer(4));
  buf.setUint32(0, bits << 16, true);
  return buf.getFloat32(0, true);
}

function f16ToF32(bits: number): number {
  const sign = (bits & 0x8000) >> 15;
  const exp = (bits & 0x7c00) >> 10;
  const frac = bits & 0x03ff;
  let value: number;
  if (exp === 0) {
    value = frac * 2 ** -24; // subnormal
  } else if (exp === 0x1f) {
    value = frac ? NaN : Infinity;
  } else {
    value = (1 + frac / 1024) * 2 ** (exp - 15);
  }
  return sign ? -value : value;
}

/** Decode one tensor to float32, casting from F32, BF16, or F16 storage. */
export function readTensorF32(file: SafetensorsFile, name: string): Float32Array {
  const info = file.tensors.get(name);
  if (!info) {
    throw new Error(`tensor ${name} not present in safetensors file`);
  }
  const [start, end] = info.dataOffsets;
  const slice = file.data.subarray(start, end);
  const n = numElements(info.shape);
  const out = new Float32Array(n);

  if (info.dtype === 'F32') {
    if (slice.length !== 4 * n) throw new Error(`${name}: F32 byte length mismatch`);
    for (let i = 0; i < n; i++) out[i] = slice.readFloatLE(4 * i);
  } else if (info.dtype === 'BF16') {
    if (slice.length !== 2 * n) throw new Error(`${name}: BF16 byte length mismatch`);
    for (let i = 0; i < n; i++) out[i] = bf16ToF32(slice.readUInt16LE(2 * i));
  } else if (info.dtype === 'F16') {
    if (slice.length !== 2 * n) throw new Error(`${name}: F16 byte length mismatch`);
    for (let i = 0; i < n; i++) out[i] = f16ToF32(slice.readUInt16LE(2 * i));
  } else if (info.dtype === 'F64') {
    if (slice.length !== 8 * n) throw new Error(`${name}: F64 byte length mismatch`);
    for (let i = 0; i < n; i++) out[i] = Math.fround(slice.readDoubleLE(8 * i));
  } else {
    throw new Error(`${name}: unsupported dtype ${info.dtype}`);
  }
  return out;
}

/** Serialize tensors into a safetensors buffer (test fixtures use this). */
export function writeSafetensors(
  entries: { name: string; dtype: 'F32' | 'BF16'; shape: number[]; values: Float32Array }[],
  metadata?: Record<string, string>,
): Buffer {
  const header: Record<string, unknown> = {};
  if (metadata) header['__metadata__'] = metadata;
  const blobs: Buffer[] = [];
  let offset = 0;
  for (const entry of entries) {
    const n = numElements(entry.shape);
    if (entry.values.length !== n) {
      throw new Error(`${entry.name}: ${entry.values.length} values for shape ${entry.shape}`);
    }
    let blob: Buffer;
    if (entry.dtype === 'F32') {
      blob = Buffer.alloc(4 * n);
      for (let i = 0; i < n; i++) blob.writeFloatLE(entry.values[i], 4 * i);
    } else {
      blob = Buffer.alloc(2 * n);
      const view = new DataView(new ArrayBuffer(4));
      for (let i = 0; i < n; i++) {
        view.setFloat32(0, entry.values[i], true);
        blob.writeUInt16LE(view.getUint32(0, true) >>> 16, 2 * i); // truncate to bf16
      }
    }
    header[entry.name] = {
      dtype: entry.dtype,
      shape: entry.shape,
      data_offsets: [offset, offset + blob.length],
    };
    blobs.push(blob);
    offset += blob.length;
  }
  const headerJson = Buffer.from(JSON.stringify(header), 'utf-8');
  const lenBuf = Buffer.alloc(8);
  lenBuf.writeBigUInt64LE(BigInt(headerJson.length), 0);
  return Buffer.concat([lenBuf, headerJson, ...blobs]);
}
