/**
 * Box geometry mirroring the gateway's conventions exactly: integer
 * [0, 100]-normalized coordinates, round-half-up scaling, and the
 * (max - min) * (max - min) area convention. Client-side values must agree
 * with the server (corners exactly, IoU to 1e-6), so every formula here
 * tracks the serving side one-for-one.
 */

export interface NormalizedBox {
  xLeft: number;
  yTop: number;
  xRight: number;
  yBottom: number;
}

export interface PixelBox {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

export type Parsed =
  | { kind: "box"; box: NormalizedBox; repaired: boolean }
  | { kind: "answer"; answer: "yes" | "no" }
  | { kind: "failure"; reason: string };

/** round(value * num / den) with ties away from zero (all inputs non-negative). */
function scaleRound(value: number, num: number, den: number): number {
  return Math.round((value * num) / den);
}

export function normalizeBox(box: PixelBox, width: number, height: number): NormalizedBox {
  return {
    xLeft: scaleRound(box.minX, 100, width),
    yTop: scaleRound(box.minY, 100, height),
    xRight: scaleRound(box.maxX, 100, width),
    yBottom: scaleRound(box.maxY, 100, height),
  };
}

export function denormalizeBox(box: NormalizedBox, width: number, height: number): PixelBox {
  return {
    minX: scaleRound(box.xLeft, width, 100),
    minY: scaleRound(box.yTop, height, 100),
    maxX: scaleRound(box.xRight, width, 100),
    maxY: scaleRound(box.yBottom, height, 100),
  };
}

const BOX_RE = /\{?\s*<\s*(\d{1,3})\s*>\s*<\s*(\d{1,3})\s*>\s*<\s*(\d{1,3})\s*>\s*<\s*(\d{1,3})\s*>\s*\}?/;
const YESNO_RE = /\b(yes|no)\b/gi;

export function parseBoxText(rawText: string): Parsed {
  const match = BOX_RE.exec(rawText);
  if (!match) {
    return { kind: "failure", reason: "no bbox pattern found" };
  }
  const [a, b, c, d] = match.slice(1, 5).map(Number);
  if ([a, b, c, d].some((v) => v > 100)) {
    return { kind: "failure", reason: "coordinate outside [0, 100]" };
  }
  const repaired = a > c || b > d;
  return {
    kind: "box",
    box: {
      xLeft: Math.min(a, c),
      yTop: Math.min(b, d),
      xRight: Math.max(a, c),
      yBottom: Math.max(b, d),
    },
    repaired,
  };
}

export function parseYesNo(rawText: string): Parsed {
  const tokens = new Set<string>();
  for (const match of rawText.matchAll(YESNO_RE)) {
    tokens.add(match[1].toLowerCase());
  }
  if (tokens.size === 1) {
    return { kind: "answer", answer: tokens.has("yes") ? "yes" : "no" };
  }
  return {
    kind: "failure",
    reason: tokens.size ? "text contains both yes and no" : "no yes/no token found",
  };
}

export function parseOutput(rawText: string, task: "refer" | "vqa"): Parsed {
  return task === "refer" ? parseBoxText(rawText) : parseYesNo(rawText);
}

function area(box: NormalizedBox): number {
  return (box.xRight - box.xLeft) * (box.yBottom - box.yTop);
}

function sameBox(a: NormalizedBox, b: NormalizedBox): boolean {
  return a.xLeft === b.xLeft && a.yTop === b.yTop && a.xRight === b.xRight && a.yBottom === b.yBottom;
}

/** IoU under the continuous convention; identical degenerate boxes score 1. */
export function iou(a: NormalizedBox, b: NormalizedBox): number {
  const areaA = area(a);
  const areaB = area(b);
  if (areaA === 0 || areaB === 0) {
    return sameBox(a, b) ? 1.0 : 0.0;
  }
  const interW = Math.min(a.xRight, b.xRight) - Math.max(a.xLeft, b.xLeft);
  const interH = Math.min(a.yBottom, b.yBottom) - Math.max(a.yTop, b.yTop);
  if (interW <= 0 || interH <= 0) {
    return 0.0;
  }
  const inter = interW * interH;
  return inter / (areaA + areaB - inter);
}

export function formatIou(value: number): string {
  return value.toFixed(3);
}
