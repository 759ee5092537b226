// The operator console app: two websocket connections through the bridge
// (session world + relay streams), a state mirror, and the control surface.
// Every world mutation this user causes goes out as a wire message recorded
// in sentLog; the console itself never fabricates state.

import { Envelope, MsgType, PROTOCOL_VERSION, SeqStamper, decodePayload,
         encodePayload } from "./protocol.js";
import { ConsoleState, applyEnvelope, initialState } from "./state.js";
import { Throttle } from "./throttle.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConsoleConfig {
  serverUrl: string;          // ws endpoint of the bridge (session path)
  relayUrl?: string;          // ws endpoint of the bridge relay path
  userId: string;
  platform: string;           // WEB covers browser and mobile-browser use
  jogRateHz?: number;
  streams?: string[];
  reconnectMs?: number;
}

export class OperatorConsole {
  state: ConsoleState;
  sentLog: Envelope[] = [];
  onUpdate: ((state: ConsoleState) => void) | null = null;

  private session: SocketLike | null = null;
  private relay: SocketLike | null = null;
  private seq = new SeqStamper();
  private relaySeq = new SeqStamper();
  private jogThrottle: Throttle<number[]>;
  private closed = false;

  constructor(private readonly config: ConsoleConfig,
              private readonly makeSocket: SocketFactory) {
    this.state = initialState(config.userId, config.platform);
    this.jogThrottle = new Throttle(config.jogRateHz ?? 30,
                                    (q) => this.sendPhantom(q));
  }

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.makeSocket(this.config.serverUrl);
      this.session = socket;
      socket.onopen = () => {
        this.state.connected = true;
        this.state.stale = false;
        this.send("JOIN", { user_id: this.config.userId,
                            platform: this.config.platform });
      };
      socket.onerror = (err) => reject(err);
      socket.onclose = () => this.handleDisconnect();
      socket.onmessage = (ev) => {
        const env = decodePayload(String(ev.data));
        applyEnvelope(this.state, env);
        if (env.msg_type === "SNAPSHOT" && this.state.sessionId) {
          resolve();
        }
        this.onUpdate?.(this.state);
      };
    });
  }

  connectRelay(): void {
    if (!this.config.relayUrl) return;
    const socket = this.makeSocket(this.config.relayUrl);
    this.relay = socket;
    socket.onopen = () => {
      for (const sourceId of this.config.streams ?? []) {
        this.sendRelay("SUBSCRIBE", { source_id: sourceId,
                                      mode: "UNICAST" });
      }
    };
    socket.onmessage = (ev) => {
      const env = decodePayload(String(ev.data));
      if (env.msg_type === "PING") {
        this.sendRelay("PONG", { ...env.body });   // latency probe reply
        return;
      }
      applyEnvelope(this.state, env);
      this.onUpdate?.(this.state);
    };
    socket.onclose = () => { this.relay = null; };
    socket.onerror = () => { /* relay is best-effort for display */ };
  }

  private handleDisconnect(): void {
    this.state.connected = false;
    this.state.stale = true;           // panes freeze with the stale marker
    this.onUpdate?.(this.state);
    if (!this.closed) {
      setTimeout(() => {
        if (!this.closed) this.connect().catch(() => undefined);
      }, this.config.reconnectMs ?? 1000);
    }
  }

  private send(msgType: MsgType, body: Record<string, unknown>): void {
    if (!this.session) throw new Error("not connected");
    const env: Envelope = {
      version: PROTOCOL_VERSION, seq: this.seq.next(), msg_type: msgType,
      sender: this.config.userId, ts_ms: Date.now(), body,
    };
    this.sentLog.push(env);
    this.session.send(encodePayload(env));
  }

  private sendRelay(msgType: MsgType, body: Record<string, unknown>): void {
    if (!this.relay) return;
    const env: Envelope = {
      version: PROTOCOL_VERSION, seq: this.relaySeq.next(),
      msg_type: msgType, sender: this.config.userId, ts_ms: Date.now(), body,
    };
    this.relay.send(encodePayload(env));
  }

  private sendPhantom(q: number[]): void {
    this.send("PHANTOM_UPDATE", { q });
  }

  /** Jog one axis; sends throttled PHANTOM_UPDATEs (<= jogRateHz). */
  jog(axis: number, value: number): void {
    const base = this.state.jogPhantom ?? [...this.state.committedPhantom];
    const q = [...base];
    q[axis] = value;
    this.state.jogPhantom = q;
    this.jogThrottle.push(q);
    this.onUpdate?.(this.state);
  }

  jogAll(q: number[]): void {
    this.state.jogPhantom = [...q];
    this.jogThrottle.push([...q]);
    this.onUpdate?.(this.state);
  }

  flushJog(): void {
    this.jogThrottle.flush();
  }

  lock(objectId: string): void {
    this.send("LOCK_REQ", { object_id: objectId });
  }

  release(objectId: string): void {
    this.send("LOCK_REQ", { object_id: objectId, release: true });
  }

  validate(): void {
    this.send("VALIDATE", {});
  }

  trajectory(waypoints: number[][]): void {
    this.send("ROBOT_CMD", {
      command_id: `console-${this.seq.next()}`,
      kind: "trajectory",
      waypoints,
    });
  }

  close(): void {
    this.closed = true;
    this.jogThrottle.dispose();
    this.session?.close();
    this.relay?.close();
  }
}
