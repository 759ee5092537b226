// Static console configuration: where the bridge lives and who we are.

import { ConsoleConfig } from "./console.js";

export const DEFAULT_CONFIG: ConsoleConfig = {
  serverUrl: "ws://127.0.0.1:7865/",
  relayUrl: "ws://127.0.0.1:7865/relay",
  userId: "operator",
  platform: "WEB",
  jogRateHz: 30,
  streams: ["cam0", "cam1", "cam2", "cam3", "cam4"],
  reconnectMs: 1000,
};

export function parseConfig(text: string): ConsoleConfig {
  const raw = JSON.parse(text) as Partial<ConsoleConfig>;
  if (!raw.serverUrl) throw new Error("config requires serverUrl");
  if (!raw.userId) throw new Error("config requires userId");
  const platform = raw.platform ?? "WEB";
  if (!["WEB", "VR", "MOBILE"].includes(platform)) {
    throw new Error(`unknown platform tag ${platform}`);
  }
  return { ...DEFAULT_CONFIG, ...raw, platform } as ConsoleConfig;
}
