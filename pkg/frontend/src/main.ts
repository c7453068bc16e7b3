// Browser teleoperation client: connects to the simulator service, renders
// the confirmed world state (no client-side prediction), and turns joystick
// or keyboard input plus primitive buttons into protocol messages.

import { forceGauges, BAND_COLORS } from "./gauges.js";
import { parseHeatmapCsv, forceColor, type Heatmap } from "./heatmap.js";
import {
  inputToMessages,
  keyboardDeflection,
  neutralInput,
  primitiveMessage,
  rotateMessage,
  type InputState,
  type RateLimits,
} from "./input.js";
import {
  parseServerMessage,
  validateOutbound,
  PROTOCOL_VERSION,
  type HelloMessage,
  type StateMessage,
} from "./protocol.js";
import { baseScene, draw, worldScene } from "./render.js";
import { defaultViewport, worldToCanvas, type Viewport } from "./transform.js";

const canvas = document.getElementById("world") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const gaugesEl = document.getElementById("gauges")!;
const eventsEl = document.getElementById("events")!;

let viewport: Viewport = defaultViewport(canvas.width, canvas.height);
let hello: HelloMessage | null = null;
let lastState: StateMessage | null = null;
let lastStateAt = 0;
let heatmap: Heatmap | null = null;
let ws: WebSocket | null = null;
let input: InputState = neutralInput();
let prevInput: InputState | null = null;
const keys = new Set<string>();

function limits(): RateLimits {
  // conservative defaults until hello arrives
  return { dL: 200, dTheta4: 0.785, dWidth: 100 };
}

function send(msg: unknown): void {
  if (!ws || ws.readyState !== WebSocket.OPEN) return;
  ws.send(JSON.stringify(validateOutbound(msg)));
}

function connect(): void {
  const url = `ws://${location.host}/ws`;
  ws = new WebSocket(url);
  ws.onopen = () => {
    statusEl.textContent = "connected";
    send({ protocol_version: PROTOCOL_VERSION, type: "subscribe", rate_hz: 30 });
  };
  ws.onclose = () => {
    statusEl.textContent = "disconnected";
    setTimeout(connect, 1000);
  };
  ws.onmessage = (evt: MessageEvent) => {
    const msg = parseServerMessage(evt.data as string);
    if (msg.type === "hello") {
      hello = msg;
    } else if (msg.type === "state") {
      lastState = msg;
      lastStateAt = performance.now();
    } else if (msg.type === "event") {
      logLine(`tick ${msg.tick}: ${msg.event.type} ${JSON.stringify(msg.event.data)}`);
    } else if (msg.type === "error") {
      logLine(`error [${msg.code}] ${msg.message}`);
    }
  };
}

function logLine(text: string): void {
  const div = document.createElement("div");
  div.textContent = text;
  eventsEl.prepend(div);
  while (eventsEl.childElementCount > 40) eventsEl.lastChild?.remove();
}

function renderGauges(state: StateMessage): void {
  const setpoint = 1.0;
  gaugesEl.innerHTML = "";
  for (const g of forceGauges(state, setpoint)) {
    const div = document.createElement("div");
    div.className = "gauge";
    div.style.borderColor = BAND_COLORS[g.band];
    div.textContent = `${g.side}: F2' ${g.f2Prime.toFixed(3)} N (load cell ${g.fRead.toFixed(3)} N)`;
    gaugesEl.appendChild(div);
  }
}

function drawHeatmap(): void {
  if (!heatmap) return;
  for (const cell of heatmap.cells) {
    if (!cell.reachBoth || cell.force === null) continue;
    const [px, py] = worldToCanvas(viewport, cell.x, cell.y);
    const side = heatmap.resolution * viewport.scale;
    ctx.fillStyle = forceColor(heatmap, cell.force);
    ctx.fillRect(px - side / 2, py - side / 2, side, side);
  }
}

function frame(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const overlayOn = (document.getElementById("overlay") as HTMLInputElement).checked;
  if (overlayOn) drawHeatmap();
  if (hello !== null && lastState !== null) {
    draw(ctx, worldScene(viewport, hello, lastState));
    renderGauges(lastState);
    const stale = performance.now() - lastStateAt > (3000 / (hello.tick_hz || 100)) * 3;
    statusEl.textContent = stale
      ? `stale (tick ${lastState.tick})`
      : `tick ${lastState.tick}` +
        (lastState.active_primitive && lastState.active_primitive.name
          ? ` | ${lastState.active_primitive.name}` +
            (lastState.active_primitive.phase ? `:${lastState.active_primitive.phase}` : "")
          : "");
  } else if (hello !== null) {
    draw(ctx, baseScene(viewport, hello));
  }
  requestAnimationFrame(frame);
}

function pollInput(): void {
  input = keyboardDeflection(keys);
  const msgs = inputToMessages(input, prevInput, limits());
  for (const m of msgs) send(m);
  prevInput = input;
  setTimeout(pollInput, 50);
}

window.addEventListener("keydown", (e) => keys.add(e.key.toLowerCase()));
window.addEventListener("keyup", (e) => keys.delete(e.key.toLowerCase()));

function selectedObject(): string {
  return (document.getElementById("object-id") as HTMLInputElement).value || "ball";
}

document.getElementById("btn-spawn")!.addEventListener("click", () => {
  send({
    protocol_version: PROTOCOL_VERSION,
    type: "spawn_object",
    id: selectedObject(),
    shape: { kind: "circle", radius: 25 },
    pose: { x: 20, y: 420 },
  });
});
document.getElementById("btn-autogrip")!.addEventListener("click", () => {
  send(primitiveMessage("auto_grip", {}));
});
document.getElementById("btn-grasp")!.addEventListener("click", () => {
  send(primitiveMessage("grasp", { object_id: selectedObject() }));
});
document.getElementById("btn-release")!.addEventListener("click", () => {
  send(primitiveMessage("release", { object_id: selectedObject() }));
});
document.getElementById("btn-rotate")!.addEventListener("click", () => {
  const deg = parseFloat((document.getElementById("rotate-deg") as HTMLInputElement).value || "90");
  send(rotateMessage(selectedObject(), deg, true));
});
document.getElementById("btn-convey")!.addEventListener("click", () => {
  send(primitiveMessage("convey", { displacement: 100 }));
});
document.getElementById("btn-reset")!.addEventListener("click", () => {
  send({ protocol_version: PROTOCOL_VERSION, type: "reset" });
});
document.getElementById("heatmap-file")!.addEventListener("change", (evt) => {
  const file = (evt.target as HTMLInputElement).files?.[0];
  if (!file) return;
  file.text().then((text) => {
    heatmap = parseHeatmapCsv(text);
    logLine(`heatmap loaded: ${heatmap.cells.length} cells`);
  });
});

connect();
pollInput();
requestAnimationFrame(frame);
