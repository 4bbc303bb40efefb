/** Deterministic random sources; no global state. */

const MASK64 = (1n << 64n) - 1n;
const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;

/** 64-bit FNV-1a over the UTF-8 bytes of a string. */
export function fnv1a64(s: string): bigint {
  let h = FNV_OFFSET;
  for (const byte of Buffer.from(s, "utf-8")) {
    h ^= BigInt(byte);
    h = (h * FNV_PRIME) & MASK64;
  }
  return h;
}

/** 64-bit mix with good avalanche, used to derive values from hashes. */
export function splitmix64(x: bigint): bigint {
  x = (x + 0x9e3779b97f4a7c15n) & MASK64;
  let z = x;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return (z ^ (z >> 31n)) & MASK64;
}

/** Uniform [0, 1) derived from a 64-bit value. */
export function toUnit(x: bigint): number {
  return Number(x >> 11n) / 2 ** 53;
}

export type Rand = () => number;

/** Small fast PRNG; identical sequences for identical seeds. */
export function mulberry32(seed: number): Rand {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Seed a stream from a run seed plus a name (e.g. a response id). */
export function seededRand(seed: number, name: string): Rand {
  const h = splitmix64(fnv1a64(name) ^ BigInt(seed >>> 0));
  return mulberry32(Number(h & 0xffffffffn));
}
