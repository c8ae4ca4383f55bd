/** Browser entry point: wires the session view model to a WebSocket, a
 * canvas, the keyboard, and mouse drag-editing of boxes.
 *
 * Query parameters: `host` (gateway host:port, default = page host) and
 * `names` (comma-separated class names for overlay labels).
 */

import {
  CanvasRect,
  Corner,
  cornerAt,
  resizeByCorner,
  roundRect,
  toCanvasRect,
} from "./geometry.js";
import { classNameOf, statsLines } from "./overlay.js";
import { SessionView } from "./viewmodel.js";

const params = new URLSearchParams(window.location.search);
const host = params.get("host") ?? window.location.host;
const classNames = (params.get("names") ?? "")
  .split(",")
  .map((s) => s.trim())
  .filter((s) => s.length > 0);

const view = new SessionView(classNames);
const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statsPanel = document.getElementById("stats")!;
const bannerBox = document.getElementById("banner")!;
const activeClassBox = document.getElementById("active-class")!;
const connectionBox = document.getElementById("connection")!;

let socket: WebSocket | null = null;
let frameImage: HTMLImageElement | null = null;
let drag: { index: number; corner: Corner; startX: number; startY: number; base: CanvasRect } | null =
  null;
let dragPreview: CanvasRect | null = null;

function connect(): void {
  socket = new WebSocket(`ws://${host}/ws`);
  socket.onopen = () => {
    view.onOpen();
    render();
  };
  socket.onmessage = (event) => {
    const msg = view.receive(String(event.data));
    if (msg.type === "frame") {
      const img = new Image();
      img.onload = () => {
        frameImage = img;
        canvas.width = img.naturalWidth;
        canvas.height = img.naturalHeight;
        render();
      };
      img.src = `data:image/jpeg;base64,${msg.image_b64}`;
    } else {
      render();
    }
  };
  socket.onclose = () => {
    view.onClose();
    render();
    if (view.connection === "connecting") setTimeout(connect, 1000);
  };
}

function send(cmd: unknown): void {
  if (cmd !== null && socket !== null && socket.readyState === WebSocket.OPEN) {
    socket.send(JSON.stringify(cmd));
  }
}

function render(): void {
  if (frameImage !== null) {
    ctx.drawImage(frameImage, 0, 0, canvas.width, canvas.height);
  } else {
    ctx.fillStyle = "#222";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
  }
  const overlays = view.overlays(canvas.width, canvas.height);
  overlays.forEach((overlay, index) => {
    const rect = drag !== null && index === drag.index && dragPreview !== null
      ? dragPreview
      : overlay.rect;
    ctx.lineWidth = index === view.highlighted ? 3 : 1.5;
    ctx.strokeStyle = index === view.highlighted ? "#ffd166" : "#06d6a0";
    ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
    ctx.font = "12px sans-serif";
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(overlay.label, rect.x + 2, Math.max(rect.y - 4, 10));
  });
  if (view.noDetections) {
    ctx.fillStyle = "#ef476f";
    ctx.font = "16px sans-serif";
    ctx.fillText("no detections", 10, 22);
  }
  statsPanel.textContent = statsLines(view.stats).join("\n");
  bannerBox.textContent = view.banner ?? "";
  bannerBox.style.display = view.banner === null ? "none" : "block";
  activeClassBox.textContent = `active class: ${view.activeClass} (${classNameOf(
    view.activeClass,
    view.classNames,
  )})`;
  connectionBox.textContent = view.connection;
}

window.addEventListener("keydown", (event) => {
  const cmd = view.keyCommand(event.key);
  if (cmd !== null || event.key === "Tab") event.preventDefault();
  send(cmd);
  render();
});

canvas.addEventListener("mousedown", (event) => {
  const overlays = view.overlays(canvas.width, canvas.height);
  for (let index = 0; index < overlays.length; index += 1) {
    const overlay = overlays[index]!;
    const corner = cornerAt(overlay.rect, event.offsetX, event.offsetY);
    if (corner !== null) {
      drag = { index, corner, startX: event.offsetX, startY: event.offsetY, base: overlay.rect };
      view.highlighted = index;
      return;
    }
  }
});

canvas.addEventListener("mousemove", (event) => {
  if (drag === null) return;
  dragPreview = resizeByCorner(
    drag.base,
    drag.corner,
    event.offsetX - drag.startX,
    event.offsetY - drag.startY,
  );
  render();
});

window.addEventListener("mouseup", () => {
  if (drag === null) return;
  if (dragPreview !== null) {
    send(view.adjustCommand(drag.index, roundRect(dragPreview), canvas.width, canvas.height));
  }
  drag = null;
  dragPreview = null;
  render();
});

connect();
render();
