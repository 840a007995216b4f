/** Binary trace container codec.
 *
 * Layout: 8-byte magic "T2ITRACE", 1 version byte (1), 8-byte little-endian
 * metadata length, UTF-8 JSON metadata, then row-major little-endian
 * float32 map data. Raw traces store T*L maps of D*D; time-averaged traces
 * store L maps and carry T = null.
 */

export const MAGIC = "T2ITRACE";
export const VERSION = 1;

export interface TraceLabel {
  kind: "benign" | "backdoor";
  trigger_index: number | null;
}

export interface TraceMetadata {
  prompt_id: string;
  tokens: string[];
  L: number;
  D: number;
  T: number | null;
  normalized: boolean;
  label: TraceLabel | null;
  /** Extraction provenance (model, layers, head averaging, seed). Optional;
   * readers that do not know about it ignore it. */
  provenance?: Record<string, unknown>;
}

export interface DecodedTrace {
  metadata: TraceMetadata;
  /** Flat map data, length (T ?? 1) * L * D * D, row-major. */
  maps: Float64Array;
}

export function encodeTrace(metadata: TraceMetadata, maps: ArrayLike<number>): Buffer {
  const expected = (metadata.T ?? 1) * metadata.L * metadata.D * metadata.D;
  if (maps.length !== expected) {
    throw new Error(`map data has ${maps.length} values, metadata promises ${expected}`);
  }
  if (metadata.tokens.length !== metadata.L) {
    throw new Error(`metadata L=${metadata.L} disagrees with ${metadata.tokens.length} tokens`);
  }
  const metaBytes = Buffer.from(JSON.stringify(metadata), "utf-8");
  const header = Buffer.alloc(MAGIC.length + 1 + 8);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt8(VERSION, MAGIC.length);
  header.writeBigUInt64LE(BigInt(metaBytes.length), MAGIC.length + 1);
  const payload = Buffer.alloc(4 * maps.length);
  for (let i = 0; i < maps.length; i++) {
    payload.writeFloatLE(Math.fround(maps[i]), 4 * i);
  }
  return Buffer.concat([header, metaBytes, payload]);
}

export function decodeTrace(data: Buffer): DecodedTrace {
  if (data.length < MAGIC.length || data.toString("ascii", 0, MAGIC.length) !== MAGIC) {
    throw new Error("bad magic bytes at offset 0");
  }
  let pos = MAGIC.length;
  if (data.length < pos + 1) throw new Error(`missing version byte at offset ${pos}`);
  const version = data.readUInt8(pos);
  if (version !== VERSION) throw new Error(`unsupported version ${version} at offset ${pos}`);
  pos += 1;
  if (data.length < pos + 8) throw new Error(`missing metadata length at offset ${pos}`);
  const metaLen = Number(data.readBigUInt64LE(pos));
  pos += 8;
  if (data.length < pos + metaLen) throw new Error(`truncated metadata at offset ${pos}`);
  const metadata = JSON.parse(data.toString("utf-8", pos, pos + metaLen)) as TraceMetadata;
  pos += metaLen;

  const count = (metadata.T ?? 1) * metadata.L * metadata.D * metadata.D;
  if (data.length - pos !== 4 * count) {
    throw new Error(
      `payload has ${data.length - pos} bytes at offset ${pos}, expected ${4 * count}`,
    );
  }
  const maps = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    maps[i] = data.readFloatLE(pos + 4 * i);
  }
  return { metadata, maps };
}
