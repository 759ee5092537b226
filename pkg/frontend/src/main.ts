// Browser entry: canvas rendering loop plus DOM controls.

import { OperatorConsole } from "./console.js";
import { DEFAULT_CONFIG, parseConfig } from "./config.js";
import { Draw, renderPanes } from "./render.js";

function canvasDraw(ctx: CanvasRenderingContext2D): Draw {
  const colors: Record<string, string> = {
    "pane-border": "#555", "pane-title": "#999", "video-frame": "#1a2633",
    "video-label": "#8fb", "overlay-robot": "#6cf", "real-robot": "#6cf",
    "phantom-own": "#fc6", "phantom-peer": "#c9f", "phantom-jog": "#f66",
    "scene-object": "#7d7", "fixture-zone": "#4a4", "lock-owner": "#fa0",
    "session-info": "#ccc", "module-status": "#8cf", "notice": "#f88",
    "validate-status": "#8f8", "control-button": "#ddd",
    "banner": "#611", "banner-text": "#fff", "stale-marker": "#f55",
  };
  return {
    rect(x, y, w, h, style) {
      if (style === "video-frame" || style === "banner") {
        ctx.fillStyle = colors[style] ?? "#333";
        ctx.fillRect(x, y, w, h);
      } else {
        ctx.strokeStyle = colors[style] ?? "#888";
        ctx.strokeRect(x, y, w, h);
      }
    },
    line(x1, y1, x2, y2, style) {
      ctx.strokeStyle = colors[style] ?? "#888";
      ctx.setLineDash(style === "phantom-jog" ? [4, 3] : []);
      ctx.lineWidth = style === "real-robot" ? 2.5 : 1.5;
      ctx.beginPath();
      ctx.moveTo(x1, y1);
      ctx.lineTo(x2, y2);
      ctx.stroke();
      ctx.setLineDash([]);
      ctx.lineWidth = 1;
    },
    circle(cx, cy, r, style) {
      ctx.strokeStyle = colors[style] ?? "#888";
      ctx.beginPath();
      ctx.arc(cx, cy, r, 0, Math.PI * 2);
      ctx.stroke();
    },
    text(x, y, text, style) {
      ctx.fillStyle = colors[style] ?? "#aaa";
      ctx.font = "12px monospace";
      ctx.fillText(text, x, y);
    },
  };
}

async function boot(): Promise<void> {
  let config = DEFAULT_CONFIG;
  try {
    const response = await fetch("console.config.json");
    if (response.ok) config = parseConfig(await response.text());
  } catch {
    // fall back to defaults when no config file is served
  }
  const app = new OperatorConsole(config, (url) => new WebSocket(url));
  const canvas = document.getElementById("panes") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const draw = canvasDraw(ctx);

  const repaint = () => {
    ctx.fillStyle = "#111";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    renderPanes(app.state, draw, canvas.width, canvas.height);
  };
  app.onUpdate = repaint;

  const controls = document.getElementById("controls")!;
  for (let axis = 0; axis < 6; axis++) {
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "-2.9";
    slider.max = "2.9";
    slider.step = "0.01";
    slider.value = "0";
    slider.title = `joint ${axis}`;
    slider.oninput = () => app.jog(axis, Number(slider.value));
    slider.onchange = () => app.flushJog();
    controls.appendChild(slider);
  }
  const button = (label: string, onclick: () => void) => {
    const el = document.createElement("button");
    el.textContent = label;
    el.onclick = onclick;
    controls.appendChild(el);
  };
  button("lock peg_left", () => app.lock("peg_left"));
  button("release peg_left", () => app.release("peg_left"));
  button("validate", () => app.validate());
  button("trajectory home", () => app.trajectory([[0, 0, 0, 0, 0, 0]]));

  await app.connect();
  app.connectRelay();
  repaint();
  setInterval(repaint, 100);
}

boot().catch((err) => {
  document.body.textContent = `console failed to start: ${err}`;
});
