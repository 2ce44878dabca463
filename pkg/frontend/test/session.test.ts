import { describe, expect, it } from "vitest";

import type { SessionTurnWire, SliceRecord } from "../src/api.js";
import { buildTurnView, contextFromRecord, gtBoxForInstruction, Transcript } from "../src/session.js";

const record: SliceRecord = {
  dataset: "MSD",
  volume_name: "pancreas_228.nii.gz",
  slice_id: 603,
  slice_index: 52,
  slice_count: 113,
  width: 512,
  height: 512,
  pixels_tumor: 258,
  bbox_pancreas: [196, 235, 237, 260],
  bbox_tumor: [220, 238, 237, 255],
};

describe("gt box selection", () => {
  it("uses the organ box for plain detection", () => {
    expect(gtBoxForInstruction(record, "Where is the pancreas?")).toEqual({
      minX: 196,
      minY: 235,
      maxX: 237,
      maxY: 260,
    });
  });

  it("uses the tumor box when the instruction asks about the tumor", () => {
    expect(gtBoxForInstruction(record, "Where is the pancreas tumor?")).toEqual({
      minX: 220,
      minY: 238,
      maxX: 237,
      maxY: 255,
    });
  });
});

describe("turn views", () => {
  const context = contextFromRecord(record, "Where is the pancreas?");

  it("parsed box produces overlay, GT rect, and badge", () => {
    const turn = buildTurnView("refer", "Where is the pancreas?", 603, "{<38><46><46><51>}", "oracle", context);
    expect(turn.failureChip).toBeNull();
    expect(turn.overlayRect).toEqual({ minX: 195, minY: 236, maxX: 236, maxY: 261 });
    expect(turn.gtRect).toEqual({ minX: 196, minY: 235, maxX: 237, maxY: 260 });
    expect(turn.iouBadge).toBe("1.000");
  });

  it("non-box answer becomes a failure chip with the verbatim text", () => {
    const raw = "the region sits behind the stomach";
    const turn = buildTurnView("refer", "Where is the pancreas?", 603, raw, "oracle", context);
    expect(turn.overlayRect).toBeNull();
    expect(turn.iouBadge).toBeNull();
    expect(turn.failureChip).toBe(raw);
  });

  it("vqa answers have no overlay or badge", () => {
    const turn = buildTurnView("vqa", "Does the pancreas in the image present a tumor?", 603, "yes", "oracle", context);
    expect(turn.parsed).toEqual({ kind: "answer", answer: "yes" });
    expect(turn.overlayRect).toBeNull();
    expect(turn.iouBadge).toBeNull();
  });

  it("badge is hidden without ground truth (ad-hoc upload)", () => {
    const turn = buildTurnView("refer", "Where is the pancreas?", null, "{<1><2><3><4>}", "remote", {
      width: 448,
      height: 448,
      gtBox: null,
    });
    expect(turn.overlayRect).not.toBeNull();
    expect(turn.iouBadge).toBeNull();
  });
});

describe("transcript", () => {
  const turn = () =>
    buildTurnView("refer", "Where is the pancreas?", 603, "{<38><46><46><51>}", "oracle", contextFromRecord(record, "Where is the pancreas?"));

  it("is append-only and freezes turns", () => {
    const transcript = new Transcript();
    transcript.append(turn());
    const firstView = transcript.turns[0];
    transcript.append(turn());
    expect(transcript.turns).toHaveLength(2);
    expect(transcript.turns[0]).toBe(firstView);
    expect(Object.isFrozen(transcript.turns[0])).toBe(true);
  });

  it("allows one in-flight chat at a time", () => {
    const transcript = new Transcript();
    expect(transcript.begin()).toBe(true);
    expect(transcript.begin()).toBe(false);
    transcript.end();
    expect(transcript.begin()).toBe(true);
  });

  it("restores from the gateway session store", () => {
    const wire: SessionTurnWire[] = [
      {
        request: { task: "refer", instruction: "Where is the pancreas?", slice_id: 603 },
        response: {
          raw_text: "{<38><46><46><51>}",
          parsed: { kind: "box", box: [38, 46, 46, 51], repaired: false },
          backend: "oracle",
          latency_ms: 1.2,
        },
      },
      {
        request: { task: "vqa", instruction: "Does the pancreas in the image present a tumor?", slice_id: 603 },
        response: {
          raw_text: "yes",
          parsed: { kind: "answer", answer: "yes" },
          backend: "oracle",
          latency_ms: 0.8,
        },
      },
    ];
    const transcript = new Transcript();
    transcript.restore(wire, (id) => (id === 603 ? record : undefined));
    expect(transcript.turns).toHaveLength(2);
    expect(transcript.turns[0].iouBadge).toBe("1.000");
    expect(transcript.turns[1].parsed).toEqual({ kind: "answer", answer: "yes" });
  });
});
