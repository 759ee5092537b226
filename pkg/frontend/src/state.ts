// Console state: the operator's mirror of the shared world plus local,
// not-yet-committed jog input. The committed phantom always equals the last
// server-acknowledged value; jog state is a separate overlay until acked.

import { Envelope } from "./protocol.js";

export interface ObjectRecord {
  objectId: string;
  kind: "SCENE_OBJECT" | "PHANTOM_ROBOT";
  owner: string | null;
  worldSeq: number;
  pose?: { position: number[]; orientation: number[] };
  q?: number[];
}

export interface ModuleStatus {
  status: string;          // OK | DEGRADED | FAILED
  active: number;
  requested: number;
  mode: string;            // CLASSIC_MODE | SAFE_MODE
  detail: string;
}

export interface RobotSample {
  tsMs: number;
  q: number[];
  executing: string | null;
}

export interface FrameInfo {
  sourceId: string;
  frameSeq: number;
  tsMs: number;
  bytes: number;
}

export interface Notice {
  kind: string;
  text: string;
}

export interface ConsoleState {
  userId: string;
  platform: string;
  sessionId: string | null;
  phantomId: string | null;
  connected: boolean;
  stale: boolean;
  worldSeq: number;
  objects: Map<string, ObjectRecord>;
  users: Array<[string, string]>;
  committedPhantom: number[];
  jogPhantom: number[] | null;
  robotSamples: RobotSample[];
  frames: Map<string, FrameInfo>;
  board: Map<string, ModuleStatus>;
  notices: Notice[];
  lastValidate: { status: string; commandId: string | null } | null;
  worldUpdates: number;     // counter of applied world mutations
}

const ROBOT_RING = 256;

export function initialState(userId: string, platform: string): ConsoleState {
  return {
    userId, platform,
    sessionId: null, phantomId: null,
    connected: false, stale: false,
    worldSeq: 0,
    objects: new Map(),
    users: [],
    committedPhantom: [0, 0, 0, 0, 0, 0],
    jogPhantom: null,
    robotSamples: [],
    frames: new Map(),
    board: new Map(),
    notices: [],
    lastValidate: null,
    worldUpdates: 0,
  };
}

function objectFromWire(raw: Record<string, unknown>): ObjectRecord {
  return {
    objectId: raw.object_id as string,
    kind: raw.kind as ObjectRecord["kind"],
    owner: (raw.owner as string | null) ?? null,
    worldSeq: raw.world_seq as number,
    pose: raw.pose as ObjectRecord["pose"],
    q: raw.q as number[] | undefined,
  };
}

function pushNotice(state: ConsoleState, kind: string, text: string): void {
  state.notices.push({ kind, text });
  if (state.notices.length > 50) state.notices.shift();
}

/** Apply one inbound envelope; mutates and returns the state. */
export function applyEnvelope(state: ConsoleState, env: Envelope
                              ): ConsoleState {
  const body = env.body as Record<string, any>;
  switch (env.msg_type) {
    case "SNAPSHOT": {
      state.objects = new Map();
      for (const raw of body.objects as Record<string, unknown>[]) {
        const record = objectFromWire(raw);
        state.objects.set(record.objectId, record);
      }
      state.worldSeq = body.world_seq;
      state.users = (body.connected_users as { user_id: string;
        platform: string }[]).map((u) => [u.user_id, u.platform]);
      if (body.session_id) state.sessionId = body.session_id;
      if (body.phantom_id) state.phantomId = body.phantom_id;
      const own = state.phantomId ? state.objects.get(state.phantomId) : null;
      if (own?.q) state.committedPhantom = [...own.q];
      state.worldUpdates += 1;
      break;
    }
    case "PHANTOM_UPDATE": {
      const objectId = `phantom:${body.user_id}`;
      const existing = state.objects.get(objectId);
      const record: ObjectRecord = existing ?? {
        objectId, kind: "PHANTOM_ROBOT", owner: null, worldSeq: 0,
      };
      record.q = [...(body.q as number[])];
      record.worldSeq = body.world_seq;
      state.objects.set(objectId, record);
      state.worldSeq = Math.max(state.worldSeq, body.world_seq);
      if (body.user_id === state.userId) {
        state.committedPhantom = [...(body.q as number[])];
      }
      state.worldUpdates += 1;
      break;
    }
    case "LOCK_GRANT": {
      const record = state.objects.get(body.object_id);
      if (record) {
        record.owner = body.owner ?? null;
        record.worldSeq = body.world_seq;
      }
      state.worldSeq = Math.max(state.worldSeq, body.world_seq);
      state.worldUpdates += 1;
      break;
    }
    case "LOCK_DENY":
      pushNotice(state, "lock_denied",
                 `lock on ${body.object_id} denied: held by ${body.owner}`);
      break;
    case "JOIN":
      state.users.push([body.user_id, body.platform]);
      break;
    case "VALIDATE": {
      state.lastValidate = { status: body.status,
                             commandId: body.command_id ?? null };
      if (body.status === "BUSY") {
        pushNotice(state, "busy",
                   `robot busy executing ${body.command_id}`);
      }
      break;
    }
    case "ROBOT_STATE": {
      state.robotSamples.push({
        tsMs: env.ts_ms,
        q: [...(body.q as number[])],
        executing: body.executing ?? null,
      });
      if (state.robotSamples.length > ROBOT_RING) state.robotSamples.shift();
      break;
    }
    case "FRAME": {
      state.frames.set(body.source_id, {
        sourceId: body.source_id,
        frameSeq: body.frame_seq,
        tsMs: body.ts_ms,
        bytes: Math.floor((body.payload_b64 as string).length * 3 / 4),
      });
      break;
    }
    case "STATE_REPORT": {
      state.board.set(body.module, {
        status: body.status,
        active: body.active_units,
        requested: body.requested_units ?? body.active_units,
        mode: body.mode ?? "CLASSIC_MODE",
        detail: body.detail ?? "",
      });
      break;
    }
    case "ERROR":
      pushNotice(state, body.code ?? "error", body.detail ?? "server error");
      break;
    default:
      break;
  }
  return state;
}

/** Overlay pairing rule: the latest robot sample at or before the frame. */
export function overlayForFrame(state: ConsoleState, frameTsMs: number
                                ): RobotSample | null {
  let best: RobotSample | null = null;
  for (const sample of state.robotSamples) {
    if (sample.tsMs <= frameTsMs
        && (best === null || sample.tsMs >= best.tsMs)) {
      best = sample;
    }
  }
  return best;
}

export function latestRobot(state: ConsoleState): RobotSample | null {
  return state.robotSamples.length > 0
    ? state.robotSamples[state.robotSamples.length - 1] : null;
}

export function phantoms(state: ConsoleState): ObjectRecord[] {
  return [...state.objects.values()]
    .filter((o) => o.kind === "PHANTOM_ROBOT");
}

export function sceneObjects(state: ConsoleState): ObjectRecord[] {
  return [...state.objects.values()]
    .filter((o) => o.kind === "SCENE_OBJECT");
}
