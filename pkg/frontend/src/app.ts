/** DOM wiring: gallery, slice viewer with overlays, chat transcript. */

import { GatewayClient, GatewayError, type GalleryFilters, type SliceRecord } from "./api.js";
import type { PixelBox } from "./geometry.js";
import { presetGroups } from "./presets.js";
import { buildTurnView, contextFromRecord, Transcript, type TurnView } from "./session.js";

const client = new GatewayClient("");
const transcript = new Transcript();

const state = {
  filters: {} as GalleryFilters,
  page: 1,
  selected: null as SliceRecord | null,
  records: new Map<number, SliceRecord>(),
  sessionId: "",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function sessionId(): string {
  const existing = window.sessionStorage.getItem("panct-session");
  if (existing) return existing;
  const fresh = `web-${Math.random().toString(36).slice(2, 10)}`;
  window.sessionStorage.setItem("panct-session", fresh);
  return fresh;
}

function banner(message: string | null): void {
  const node = el<HTMLDivElement>("banner");
  node.textContent = message ?? "";
  node.hidden = message === null;
}

async function refreshHealth(): Promise<void> {
  try {
    const health = await client.health();
    el<HTMLSpanElement>("backend-indicator").textContent = `backend: ${health.backend} (${health.slices} slices)`;
    banner(null);
  } catch {
    banner("gateway unreachable - is `panct serve` running?");
  }
}

function readFilters(): GalleryFilters {
  const filters: GalleryFilters = {};
  const dataset = el<HTMLInputElement>("filter-dataset").value.trim();
  if (dataset) filters.dataset = dataset;
  const tumor = el<HTMLSelectElement>("filter-tumor").value;
  if (tumor === "yes") filters.hasTumor = true;
  if (tumor === "no") filters.hasTumor = false;
  const ratio = el<HTMLInputElement>("filter-ratio").value;
  if (ratio) filters.minBboxRatio = Number(ratio);
  return filters;
}

async function loadGallery(): Promise<void> {
  const grid = el<HTMLDivElement>("gallery");
  try {
    const page = await client.listSlices(state.filters, state.page);
    grid.replaceChildren();
    if (page.items.length === 0) {
      const empty = document.createElement("p");
      empty.className = "empty-state";
      empty.textContent = "no slices match these filters";
      grid.append(empty);
    }
    for (const record of page.items) {
      state.records.set(record.slice_id, record);
      const card = document.createElement("button");
      card.className = "slice-card";
      const img = document.createElement("img");
      img.src = client.imageUrl(record.slice_id);
      img.alt = `${record.dataset} slice ${record.slice_index}`;
      img.loading = "lazy";
      img.onerror = () => img.classList.add("missing");
      const caption = document.createElement("span");
      caption.textContent = `#${record.slice_id} ${record.dataset} z=${record.slice_index}`;
      card.append(img, caption);
      card.onclick = () => void selectSlice(record);
      grid.append(card);
    }
    el<HTMLSpanElement>("page-label").textContent = `page ${page.page} / ${Math.max(1, Math.ceil(page.total / page.page_size))} (${page.total} slices)`;
    banner(null);
  } catch (error) {
    banner(error instanceof GatewayError ? `gallery: ${error.message}` : "gateway unreachable");
  }
}

function recordPanel(record: SliceRecord): string {
  const interesting = Object.entries(record).filter(([k]) => !k.startsWith("bbox_"));
  return interesting.map(([k, v]) => `${k}: ${JSON.stringify(v)}`).join("\n");
}

async function selectSlice(record: SliceRecord): Promise<void> {
  state.selected = record;
  el<HTMLPreElement>("record-panel").textContent = recordPanel(record);
  const viewer = el<HTMLImageElement>("viewer-image");
  viewer.src = client.imageUrl(record.slice_id);
  el<HTMLDivElement>("viewer-wrap").dataset.sliceId = String(record.slice_id);
  drawOverlays(null, null, record.width, record.height);
}

function rectToSvg(rect: PixelBox, color: string): string {
  const w = rect.maxX - rect.minX;
  const h = rect.maxY - rect.minY;
  return `<rect x="${rect.minX}" y="${rect.minY}" width="${w}" height="${h}" stroke="${color}" fill="none" stroke-width="2"/>`;
}

function drawOverlays(red: PixelBox | null, green: PixelBox | null, width: number, height: number): void {
  const svg = el<HTMLElement>("viewer-overlay");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.innerHTML = (green ? rectToSvg(green, "#22c55e") : "") + (red ? rectToSvg(red, "#ef4444") : "");
}

function renderTurn(turn: TurnView): HTMLElement {
  const item = document.createElement("div");
  item.className = "turn";
  const question = document.createElement("div");
  question.className = "bubble user";
  question.textContent = `[${turn.task}] ${turn.instruction}`;
  const answer = document.createElement("div");
  answer.className = "bubble model";
  if (turn.failureChip !== null) {
    const chip = document.createElement("span");
    chip.className = "failure-chip";
    chip.textContent = turn.failureChip;
    answer.append("could not parse an answer: ", chip);
  } else {
    answer.textContent = turn.rawText;
    if (turn.iouBadge !== null) {
      const badge = document.createElement("span");
      badge.className = "iou-badge";
      badge.textContent = `IoU ${turn.iouBadge}`;
      answer.append(" ", badge);
    }
  }
  item.append(question, answer);
  return item;
}

function renderTranscript(): void {
  const list = el<HTMLDivElement>("transcript");
  list.replaceChildren(...transcript.turns.map(renderTurn));
  list.scrollTop = list.scrollHeight;
}

async function ask(): Promise<void> {
  const record = state.selected;
  const instruction = el<HTMLInputElement>("instruction").value.trim();
  const task = el<HTMLSelectElement>("task").value as "refer" | "vqa";
  if (!record) {
    banner("select a slice first");
    return;
  }
  if (!instruction) return;
  if (!transcript.begin()) return; // one in-flight chat per session
  el<HTMLButtonElement>("ask").disabled = true;
  try {
    const response = await client.chat(task, instruction, { sliceId: record.slice_id }, state.sessionId);
    const context = contextFromRecord(record, instruction);
    const turn = buildTurnView(task, instruction, record.slice_id, response.raw_text, response.backend, context);
    transcript.append(turn);
    renderTranscript();
    drawOverlays(turn.overlayRect, turn.gtRect, record.width, record.height);
    banner(null);
  } catch (error) {
    banner(error instanceof GatewayError ? `chat: ${error.message}` : "chat request failed or timed out");
  } finally {
    transcript.end();
    el<HTMLButtonElement>("ask").disabled = false;
  }
}

function fillPresets(): void {
  const select = el<HTMLSelectElement>("preset");
  for (const group of presetGroups()) {
    const optgroup = document.createElement("optgroup");
    optgroup.label = group.label;
    for (const instruction of group.instructions) {
      const option = document.createElement("option");
      option.value = JSON.stringify({ task: group.task, instruction });
      option.textContent = instruction;
      optgroup.append(option);
    }
    select.append(optgroup);
  }
  select.onchange = () => {
    if (!select.value) return;
    const { task, instruction } = JSON.parse(select.value) as { task: "refer" | "vqa"; instruction: string };
    el<HTMLSelectElement>("task").value = task;
    el<HTMLInputElement>("instruction").value = instruction;
  };
}

async function restoreSession(): Promise<void> {
  try {
    const stored = await client.session(state.sessionId);
    if (!stored.turns.length) return;
    const ids = new Set(
      stored.turns.map((t) => t.request.slice_id).filter((v): v is number => v !== null),
    );
    await Promise.all(
      [...ids].map(async (id) => {
        if (!state.records.has(id)) state.records.set(id, await client.record(id));
      }),
    );
    transcript.restore(stored.turns, (id) => state.records.get(id));
    renderTranscript();
  } catch {
    /* no stored session yet */
  }
}

export function boot(): void {
  state.sessionId = sessionId();
  el<HTMLSpanElement>("session-label").textContent = state.sessionId;
  fillPresets();
  el<HTMLButtonElement>("apply-filters").onclick = () => {
    state.filters = readFilters();
    state.page = 1;
    void loadGallery();
  };
  el<HTMLButtonElement>("prev-page").onclick = () => {
    state.page = Math.max(1, state.page - 1);
    void loadGallery();
  };
  el<HTMLButtonElement>("next-page").onclick = () => {
    state.page += 1;
    void loadGallery();
  };
  el<HTMLButtonElement>("ask").onclick = () => void ask();
  el<HTMLInputElement>("instruction").onkeydown = (event) => {
    if (event.key === "Enter") void ask();
  };
  void refreshHealth();
  void loadGallery().then(restoreSession);
}

if (typeof document !== "undefined" && document.getElementById("gallery")) {
  boot();
}
