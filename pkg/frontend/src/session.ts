/**
 * Transcript state and per-turn view models.
 *
 * Turns are append-only: once built, a view is never mutated, and the
 * transcript only grows. One chat request may be in flight per session;
 * gallery traffic is unconstrained.
 */

import type { SessionTurnWire, SliceRecord } from "./api.js";
import {
  denormalizeBox,
  formatIou,
  iou,
  normalizeBox,
  parseOutput,
  type Parsed,
  type PixelBox,
} from "./geometry.js";

export interface TurnContext {
  width: number;
  height: number;
  gtBox: PixelBox | null; // null for ad-hoc uploads: no ground truth
}

export interface TurnView {
  task: "refer" | "vqa";
  instruction: string;
  sliceId: number | null;
  rawText: string;
  backend: string;
  parsed: Parsed;
  /** red rectangle in natural image pixels; null when nothing parseable */
  overlayRect: PixelBox | null;
  /** green rectangle: the slice's ground truth, when known */
  gtRect: PixelBox | null;
  /** IoU badge text (3 decimals); null when either box is missing */
  iouBadge: string | null;
  /** verbatim model text shown in the failure chip; null when parsed fine */
  failureChip: string | null;
}

function boxFromList(value: unknown): PixelBox | null {
  if (Array.isArray(value) && value.length === 4 && value.every((v) => typeof v === "number")) {
    return { minX: value[0], minY: value[1], maxX: value[2], maxY: value[3] };
  }
  return null;
}

/** The GT box a detection instruction should be compared against. */
export function gtBoxForInstruction(record: SliceRecord, instruction: string): PixelBox | null {
  if (/\btumor\b/i.test(instruction)) {
    return boxFromList(record["bbox_tumor"]);
  }
  for (const [key, value] of Object.entries(record)) {
    if (key.startsWith("bbox_") && key !== "bbox_tumor") {
      return boxFromList(value);
    }
  }
  return null;
}

export function contextFromRecord(record: SliceRecord, instruction: string): TurnContext {
  return { width: record.width, height: record.height, gtBox: gtBoxForInstruction(record, instruction) };
}

export function buildTurnView(
  task: "refer" | "vqa",
  instruction: string,
  sliceId: number | null,
  rawText: string,
  backend: string,
  context: TurnContext | null,
): TurnView {
  const parsed = parseOutput(rawText, task);
  let overlayRect: PixelBox | null = null;
  let iouBadge: string | null = null;
  if (parsed.kind === "box" && context) {
    overlayRect = denormalizeBox(parsed.box, context.width, context.height);
    if (context.gtBox) {
      const gtNormalized = normalizeBox(context.gtBox, context.width, context.height);
      iouBadge = formatIou(iou(parsed.box, gtNormalized));
    }
  }
  return {
    task,
    instruction,
    sliceId,
    rawText,
    backend,
    parsed,
    overlayRect,
    gtRect: context?.gtBox ?? null,
    iouBadge,
    failureChip: parsed.kind === "failure" ? rawText : null,
  };
}

export class Transcript {
  private turnList: TurnView[] = [];
  private inFlight = false;

  get turns(): readonly TurnView[] {
    return this.turnList;
  }

  /** Claim the single in-flight chat slot; false when one is already pending. */
  begin(): boolean {
    if (this.inFlight) return false;
    this.inFlight = true;
    return true;
  }

  end(): void {
    this.inFlight = false;
  }

  get pending(): boolean {
    return this.inFlight;
  }

  append(turn: TurnView): readonly TurnView[] {
    this.turnList = [...this.turnList, Object.freeze(turn)];
    return this.turnList;
  }

  /** Rebuild the transcript from the gateway's session store. */
  restore(wireTurns: SessionTurnWire[], recordOf: (sliceId: number) => SliceRecord | undefined): void {
    this.turnList = [];
    for (const wire of wireTurns) {
      const record = wire.request.slice_id === null ? undefined : recordOf(wire.request.slice_id);
      const context = record ? contextFromRecord(record, wire.request.instruction) : null;
      this.append(
        buildTurnView(
          wire.request.task,
          wire.request.instruction,
          wire.request.slice_id,
          wire.response.raw_text,
          wire.response.backend,
          context,
        ),
      );
    }
  }
}
