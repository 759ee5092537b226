// Four-pane renderer. Drawing goes through the Draw interface so tests can
// record operations and the browser can adapt a canvas 2D context.
//
// Pane 1: live stream with the real robot wireframe superposed (paired to the
// frame timestamp). Panes 2 and 3: orthogonal virtual views showing the real
// robot and every phantom, committed vs uncommitted jog drawn distinctly.
// Pane 4: session info, lock owners, module status board, notices, controls.

import { DhParams, DEFAULT_DH, jointOrigins } from "./kinematics.js";
import { evaluateFixtures, FixtureView } from "./fixtures.js";
import { ConsoleState, latestRobot, overlayForFrame, phantoms,
         sceneObjects } from "./state.js";

export interface Draw {
  rect(x: number, y: number, w: number, h: number, style: string): void;
  line(x1: number, y1: number, x2: number, y2: number, style: string): void;
  circle(cx: number, cy: number, r: number, style: string): void;
  text(x: number, y: number, text: string, style: string): void;
}

export interface Pane {
  name: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

type Project = (p: number[]) => [number, number];

function projector(pane: Pane, axes: [number, number], flipY: boolean
                   ): Project {
  const scale = Math.min(pane.w, pane.h) / 1.6;
  const cx = pane.x + pane.w / 2;
  const cy = pane.y + pane.h * (flipY ? 0.78 : 0.5);
  return (p) => [
    cx + p[axes[0]] * scale,
    flipY ? cy - p[axes[1]] * scale : cy + p[axes[1]] * scale,
  ];
}

function drawArm(draw: Draw, project: Project, q: number[], style: string,
                 dh: DhParams): void {
  const points = jointOrigins(q, dh).map(project);
  for (let i = 0; i + 1 < points.length; i++) {
    draw.line(points[i][0], points[i][1],
              points[i + 1][0], points[i + 1][1], style);
  }
  const tool = points[points.length - 1];
  draw.circle(tool[0], tool[1], 3, style);
}

function drawWorld(draw: Draw, state: ConsoleState, pane: Pane,
                   axes: [number, number], flipY: boolean, dh: DhParams,
                   fixtures: FixtureView[]): void {
  const project = projector(pane, axes, flipY);
  for (const obj of sceneObjects(state)) {
    const [px, py] = project(obj.pose!.position);
    draw.circle(px, py, 4, "scene-object");
    if (obj.owner) {
      draw.text(px + 6, py, `lock:${obj.owner}`, "lock-owner");
    }
  }
  for (const fixture of fixtures) {
    if (fixture.active) {
      const [px, py] = project(fixture.center);
      const scale = Math.min(pane.w, pane.h) / 1.6;
      draw.circle(px, py, fixture.rOn * scale, "fixture-zone");
    }
  }
  const robot = latestRobot(state);
  if (robot) drawArm(draw, project, robot.q, "real-robot", dh);
  for (const phantom of phantoms(state)) {
    if (!phantom.q) continue;
    const own = phantom.objectId === state.phantomId;
    drawArm(draw, project, phantom.q, own ? "phantom-own" : "phantom-peer",
            dh);
  }
  if (state.jogPhantom) {
    drawArm(draw, project, state.jogPhantom, "phantom-jog", dh);
  }
}

export function activeFixtures(state: ConsoleState, dh: DhParams
                               ): FixtureView[] {
  const robot = latestRobot(state);
  const q = state.jogPhantom ?? state.committedPhantom;
  const peg = jointOrigins(robot ? robot.q : q, dh).at(-1)!;
  const objects = sceneObjects(state).map((o) => ({
    objectId: o.objectId, position: o.pose!.position }));
  return evaluateFixtures(peg, objects, []);
}

export function renderPanes(state: ConsoleState, draw: Draw, width: number,
                            height: number, dh: DhParams = DEFAULT_DH
                            ): Pane[] {
  const gap = 8;
  const w = (width - 3 * gap) / 2;
  const h = (height - 3 * gap) / 2;
  const panes: Pane[] = [
    { name: "stream", x: gap, y: gap, w, h },
    { name: "front-view", x: 2 * gap + w, y: gap, w, h },
    { name: "top-view", x: gap, y: 2 * gap + h, w, h },
    { name: "controls", x: 2 * gap + w, y: 2 * gap + h, w, h },
  ];
  const fixtures = activeFixtures(state, dh);

  for (const pane of panes) {
    draw.rect(pane.x, pane.y, pane.w, pane.h, "pane-border");
    draw.text(pane.x + 4, pane.y + 12, pane.name, "pane-title");
  }

  // Pane 1: newest frame of the lowest-numbered stream + paired overlay.
  const stream = panes[0];
  const frames = [...state.frames.values()]
    .sort((a, b) => a.sourceId.localeCompare(b.sourceId));
  if (frames.length > 0) {
    const frame = frames[0];
    draw.rect(stream.x + 4, stream.y + 16, stream.w - 8, stream.h - 20,
              "video-frame");
    draw.text(stream.x + 8, stream.y + 28,
              `${frame.sourceId} #${frame.frameSeq} (${frame.bytes} B)`,
              "video-label");
    const paired = overlayForFrame(state, frame.tsMs);
    if (paired) {
      drawArm(draw, projector(stream, [0, 2], true), paired.q,
              "overlay-robot", dh);
    }
  } else {
    draw.text(stream.x + 8, stream.y + 28, "no stream", "video-label");
  }

  drawWorld(draw, state, panes[1], [0, 2], true, dh, fixtures);   // x-z
  drawWorld(draw, state, panes[2], [0, 1], false, dh, fixtures);  // x-y

  // Pane 4: status and controls.
  const ctl = panes[3];
  let y = ctl.y + 26;
  const put = (text: string, style: string) => {
    draw.text(ctl.x + 6, y, text, style);
    y += 14;
  };
  put(`user ${state.userId} [${state.platform}]`
      + (state.sessionId ? ` session ${state.sessionId.slice(0, 8)}` : ""),
      "session-info");
  put(`world seq ${state.worldSeq}, peers: `
      + state.users.map(([u, p]) => `${u}/${p}`).join(", "), "session-info");
  for (const [name, status] of state.board) {
    put(`${name}: ${status.status} ${status.active}/${status.requested} `
        + `(${status.mode})`, "module-status");
  }
  if (state.lastValidate) {
    put(`validate: ${state.lastValidate.status} `
        + `${state.lastValidate.commandId ?? ""}`, "validate-status");
  }
  for (const notice of state.notices.slice(-3)) {
    put(`! ${notice.text}`, "notice");
  }
  for (const label of ["jog", "lock", "release", "validate", "trajectory"]) {
    put(`[ ${label} ]`, "control-button");
  }

  if (!state.connected || state.stale) {
    draw.rect(0, height / 2 - 16, width, 32, "banner");
    draw.text(width / 2 - 80, height / 2 + 4,
              "CONNECTION LOST - reconnecting", "banner-text");
    for (const pane of panes) {
      draw.text(pane.x + pane.w - 44, pane.y + 12, "STALE", "stale-marker");
    }
  }
  return panes;
}
