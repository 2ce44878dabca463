"""Generate frozen fixtures the frontend tests check against.

The console must agree with the gateway on parsed boxes, overlay corners,
and IoU badges; these fixtures freeze the server-side values so the vitest
suite can verify agreement without a live gateway. Regenerate (and commit)
only when geometry or oracle behavior changes:

    python3 tools/make_frontend_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from panct.backends import FAILURE_TEXT, ChatRequest, OracleBackend, Perturbation
from panct.boxes import denormalize_box, iou, normalize_box
from panct.instructions import Task
from panct.parsing import ParsedBox, parse_output
from panct.synthetic import synthetic_records

OUT = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures" / "oracle_cases.json"


def case_for(record, backend, instruction: str) -> dict:
    request = ChatRequest(task=Task.REFER, instruction_text=instruction, slice_id=record.slice_id)
    response = backend.answer(request)
    parsed = parse_output(response.raw_text, "bbox")
    assert isinstance(parsed, ParsedBox)
    box = parsed.box
    overlay = denormalize_box(box, record.width, record.height)
    gt = normalize_box(record.bbox, record.width, record.height)
    return {
        "slice_id": record.slice_id,
        "width": record.width,
        "height": record.height,
        "gt_bbox": record.bbox.as_list(),
        "instruction": instruction,
        "raw_text": response.raw_text,
        "server_box": [box.x_left, box.y_top, box.x_right, box.y_bottom],
        "overlay": overlay.as_list(),
        "server_iou": iou(box, gt),
    }


def main() -> None:
    nih = synthetic_records(n_volumes=5, slices_per_volume=2, dataset="NIH", seed=301)
    msd = synthetic_records(n_volumes=5, slices_per_volume=2, dataset="MSD", with_tumor=True, seed=302, start_id=len(nih))
    records = nih + msd
    assert len(records) == 20
    index = {r.slice_id: r for r in records}

    exact = OracleBackend(index, Perturbation(), seed=11)
    noisy = OracleBackend(index, Perturbation(shift_pct=8.0, scale_pct=15.0), seed=12)

    zero_cases = [case_for(r, exact, "Where is the pancreas?") for r in records]
    assert all(c["server_iou"] == 1.0 for c in zero_cases)
    noisy_cases = [case_for(r, noisy, "Give me the location of the pancreas") for r in records]

    failures = [{"task": "refer", "raw_text": FAILURE_TEXT}]
    failures += [
        {"task": "refer", "raw_text": "It sits just anterior to the spine, left of the duodenum."},
        {"task": "refer", "raw_text": "{<10><20><300><40>}"},
        {"task": "refer", "raw_text": "coordinates unavailable for this study"},
        {"task": "vqa", "raw_text": "yes or no, the finding is equivocal"},
        {"task": "vqa", "raw_text": "the parenchyma appears unremarkable"},
    ]

    payload = {"zero_perturbation": zero_cases, "perturbed": noisy_cases, "failures": failures}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({len(zero_cases)} exact, {len(noisy_cases)} perturbed, {len(failures)} failures)")


if __name__ == "__main__":
    main()
