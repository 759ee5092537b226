// Wire protocol over the bridge: the exact JSON payloads of the framed
// protocol, as websocket text messages (no length prefix).

export const MSG_TYPES = [
  "JOIN", "SNAPSHOT", "PHANTOM_UPDATE", "LOCK_REQ", "LOCK_GRANT",
  "LOCK_DENY", "VALIDATE", "ROBOT_CMD", "ROBOT_STATE", "FRAME",
  "SUBSCRIBE", "PING", "PONG", "MODULE_SIGNAL", "STATE_REPORT", "ERROR",
] as const;

export type MsgType = (typeof MSG_TYPES)[number];

export const PROTOCOL_VERSION = 1;

export interface Envelope {
  version: number;
  seq: number;
  msg_type: MsgType;
  sender: string;
  ts_ms: number;
  body: Record<string, unknown>;
}

function sortedDeep(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortedDeep);
  if (value !== null && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as object).sort()) {
      out[key] = sortedDeep((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

/** Serialize with the fixed top-level key order and sorted body keys,
 * matching the canonical form byte for byte for JSON-safe values. */
export function encodePayload(env: Envelope): string {
  const ordered = {
    version: env.version,
    seq: env.seq,
    msg_type: env.msg_type,
    sender: env.sender,
    ts_ms: env.ts_ms,
    body: sortedDeep(env.body),
  };
  return JSON.stringify(ordered);
}

export class ProtocolError extends Error {}

const TOP_KEYS = ["version", "seq", "msg_type", "sender", "ts_ms", "body"];

export function decodePayload(text: string): Envelope {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (err) {
    throw new ProtocolError(`malformed JSON payload: ${err}`);
  }
  if (obj === null || typeof obj !== "object" || Array.isArray(obj)) {
    throw new ProtocolError("payload is not a JSON object");
  }
  const record = obj as Record<string, unknown>;
  for (const key of TOP_KEYS) {
    if (!(key in record)) throw new ProtocolError(`missing field '${key}'`);
  }
  for (const key of Object.keys(record)) {
    if (!TOP_KEYS.includes(key)) {
      throw new ProtocolError(`unknown field '${key}'`);
    }
  }
  if (typeof record.version !== "number" || record.version < 1) {
    throw new ProtocolError("field 'version' must be a positive integer");
  }
  if (record.version > PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported version ${record.version}`);
  }
  if (typeof record.msg_type !== "string"
      || !(MSG_TYPES as readonly string[]).includes(record.msg_type)) {
    throw new ProtocolError(`unknown msg_type ${record.msg_type}`);
  }
  if (typeof record.seq !== "number" || typeof record.ts_ms !== "number") {
    throw new ProtocolError("seq and ts_ms must be numbers");
  }
  if (typeof record.sender !== "string" || record.sender.length === 0) {
    throw new ProtocolError("sender must be a non-empty string");
  }
  if (record.body === null || typeof record.body !== "object"
      || Array.isArray(record.body)) {
    throw new ProtocolError("body must be an object");
  }
  return record as unknown as Envelope;
}

/** Per-connection outbound sequence: strictly increasing from 1. */
export class SeqStamper {
  private seq = 0;
  next(): number {
    this.seq += 1;
    return this.seq;
  }
}
