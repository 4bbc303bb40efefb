/** DVEC embedding files: the engine's binary import format.
 *
 * Layout (little-endian): magic "DVEC", u32 version=1, u32 dtype=1 (f32),
 * u64 row count, u32 dim, length-prefixed UTF-8 id table, then the
 * row-major f32 matrix.
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = Buffer.from("DVEC", "ascii");
const VERSION = 1;
const DTYPE_F32 = 1;

export interface DvecData {
  ids: string[];
  dim: number;
  matrix: Float32Array; // rows * dim, row-major
}

export function writeDvec(path: string, data: DvecData): void {
  const { ids, dim, matrix } = data;
  if (matrix.length !== ids.length * dim) {
    throw new Error("matrix size does not match ids * dim");
  }
  for (const value of matrix) {
    if (!Number.isFinite(value)) throw new Error("non-finite embedding value");
  }
  const idBuffers: Buffer[] = [];
  for (const id of ids) {
    const bytes = Buffer.from(id, "utf-8");
    const prefix = Buffer.alloc(4);
    prefix.writeUInt32LE(bytes.length, 0);
    idBuffers.push(prefix, bytes);
  }
  const header = Buffer.alloc(4 + 4 + 4 + 8 + 4);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(DTYPE_F32, 8);
  header.writeBigUInt64LE(BigInt(ids.length), 12);
  header.writeUInt32LE(dim, 20);
  const body = Buffer.from(matrix.buffer, matrix.byteOffset, matrix.byteLength);
  writeFileSync(path, Buffer.concat([header, ...idBuffers, body]));
}

export function readDvec(path: string): DvecData {
  const buf = readFileSync(path);
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${path}: not a DVEC file`);
  }
  const version = buf.readUInt32LE(4);
  const dtype = buf.readUInt32LE(8);
  if (version !== VERSION || dtype !== DTYPE_F32) {
    throw new Error(`${path}: unsupported version or dtype`);
  }
  const rows = Number(buf.readBigUInt64LE(12));
  const dim = buf.readUInt32LE(20);
  let pos = 24;
  const ids: string[] = [];
  for (let i = 0; i < rows; i++) {
    const length = buf.readUInt32LE(pos);
    pos += 4;
    ids.push(buf.subarray(pos, pos + length).toString("utf-8"));
    pos += length;
  }
  const expected = rows * dim * 4;
  if (buf.length - pos !== expected) {
    throw new Error(`${path}: matrix size mismatch`);
  }
  const matrix = new Float32Array(rows * dim);
  for (let i = 0; i < matrix.length; i++) {
    matrix[i] = buf.readFloatLE(pos + i * 4);
  }
  return { ids, dim, matrix };
}
