#!/usr/bin/env python3
"""Regenerates the casebook fixtures (dataset lines, workspaces, scripts).

Run from anywhere: python3 datasets/casebook/generate.py
"""

import json
from pathlib import Path

HERE = Path(__file__).resolve().parent


def write(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n")


def call(tool, **arguments):
    return {"tool_name": tool, "arguments": arguments}


def calls(*items):
    return {"tool_calls": list(items)}


def text(t):
    return {"text": t}


def plan(*goals):
    body = {"subgoals": [
        {"instruction": g[0], "inputs": g[1], "outputs": g[2], "success_criteria": g[3]} for g in goals
    ]}
    return text("Plan for the task:\n```plan\n" + json.dumps(body, indent=2) + "\n```")


def verdict(decision, confidence, justification):
    return text(json.dumps({"decision": decision, "confidence": confidence, "justification": justification}))


def memories(*items):
    return text("```json\n" + json.dumps({"memories": list(items)}, indent=2) + "\n```")


def memory(title, pattern, description, content, actions, cues, cause=None):
    return {
        "title": title,
        "description": description,
        "content": content,
        "pattern_type": pattern,
        "action_items": actions,
        "detection_cues": cues,
        "failure_cause": cause,
    }


def todos(*pairs):
    return call("write_todos", todos=[{"content": c, "status": s} for c, s in pairs])


def diag(summary, reason="None"):
    lines = "\n".join(f"- {s}" for s in summary)
    return f"<Diag>\nTool summary:\n{lines}\n\nFailure reason: {reason}\n</Diag>"


# ---------------------------------------------------------------------------
# q157: Lake Urmia turbidity per unit area

Q157_DATA = "/benchmark/data/question157"
Q157_SANDBOX = "/sandbox/question157"
Q157_DATES = [
    "2022-01-01", "2022-01-16", "2022-01-31", "2022-02-15", "2022-03-02", "2022-03-17",
    "2022-04-01", "2022-04-16", "2022-05-01", "2022-05-16", "2022-05-31", "2022-06-15",
    "2022-06-30", "2022-07-15", "2022-07-30", "2022-08-14", "2022-08-29", "2022-09-13",
    "2022-09-28", "2022-10-25", "2022-11-09", "2022-11-24", "2022-12-09", "2022-12-24",
]
Q157_SUMS = [
    392065568.0, 416365280.0, 219604864.0, 129923824.0, 301486400.0,
    238540544.0, 217505424.0, 104889288.0, 292429280.0, 148286080.0,
    112012264.0, 127280272.0, 123388280.0, 153240192.0, 146451488.0,
    166537264.0, 155292112.0, 170321376.0, 154315408.0, 135877632.0,
    183978176.0, 152578496.0, 125695640.0, 429716032.0,
]
Q157_AREAS = [
    50568.0, 50568.0, 50568.0, 50553.0, 50557.0, 50568.0, 50568.0, 50476.0, 50568.0, 50568.0, 50547.0, 50512.0,
    50526.0, 50568.0, 50568.0, 50568.0, 50559.0, 50568.0, 50560.0, 50568.0, 50568.0, 50568.0, 50568.0, 50568.0,
]


def q157_input(date):
    return f"{Q157_DATA}/lakeUrmia_sur_refl_b01.tif_{date}.tif"


def q157_output(date):
    return f"{Q157_SANDBOX}/turbidity_{date}.tif"


def q157():
    files = {q157_input(d): {"date_tag": d, "kind": "sur_refl_b01"} for d in Q157_DATES}
    derivations = [
        {
            "tool": "calculate_water_turbidity_ntu",
            "inputs": [q157_input(d)],
            "kind": "turbidity_ntu",
            "date_tag": d,
            "scalar_table": {"sum": s, "area": a},
        }
        for d, s, a in zip(Q157_DATES, Q157_SUMS, Q157_AREAS)
    ]
    workspace = {"sandbox_root": Q157_SANDBOX, "files": files, "derivations": derivations, "faults": []}

    turbidity = lambda dates: calls(*[
        call("calculate_water_turbidity_ntu", input_path=q157_input(d), output_path=f"turbidity_{d}.tif") for d in dates
    ])
    area = lambda dates: calls(*[call("calculate_area", input_path=q157_output(d)) for d in dates])
    first, second = Q157_DATES[:12], Q157_DATES[12:]

    def ranking(dates):
        rows = sorted(
            ((d, s / a, s, a) for d, s, a in zip(Q157_DATES, Q157_SUMS, Q157_AREAS) if d in dates),
            key=lambda r: -r[1],
        )
        lines = [f"{d}: {s} / {a} = {r:.2f}" + ("  <-- MAXIMUM" if i == 0 else "") for i, (d, r, s, a) in enumerate(rows)]
        return "\n".join(lines)

    full_plan = plan(
        (
            "Enumerate the sur_refl_b01 rasters for Lake Urmia in 2022 and compute water turbidity (NTU) for every date, "
            "saving one turbidity raster per date under the sandbox.",
            [f"{Q157_DATA}/"],
            [f"{Q157_SANDBOX}/turbidity_*.tif"],
            ["one turbidity raster exists for each of the 24 dates"],
        ),
        (
            "For every turbidity raster compute the turbidity sum and the water pixel area, keeping the date of each value.",
            [f"{Q157_SANDBOX}/turbidity_*.tif"],
            ["turbidity sums", "water areas"],
            ["24 sums and 24 areas reported in date order"],
        ),
    )
    short_plan = plan(
        (
            "Compute turbidity for the first half-year of sur_refl_b01 rasters and report the turbidity sums and water areas.",
            [f"{Q157_DATA}/"],
            [f"{Q157_SANDBOX}/turbidity_*.tif", "turbidity sums"],
            ["turbidity sums and areas reported per date"],
        ),
    )
    v1_final = (
        "All 24 dates were processed. Turbidity per unit area = turbidity sum / water pixel area:\n"
        + ranking(Q157_DATES)
        + "\n\nThe highest turbidity per unit area is on 2022-12-24 (8497.79), matching choice A.\n"
        + diag([
            "write_todos: created and updated the 4-step todo list",
            "ls: listed 24 sur_refl_b01 files (2022-01-01 to 2022-12-24)",
            "calculate_water_turbidity_ntu (2 batches of 12 calls): one turbidity raster per date",
            "calc_batch_image_sum: sums for all 24 turbidity rasters",
            "calculate_area (2 batches of 12 calls): water pixel counts",
            "Local computation: turbidity_per_unit = sum / area",
        ])
        + "\n<Answer>A</Answer>"
    )
    v2_final = (
        "Turbidity per unit area for the processed dates:\n"
        + ranking(first)
        + "\n\nThe highest value is on 2022-01-16 (8233.77), matching choice B.\n"
        + diag([
            "ls: listed the sur_refl_b01 files",
            "calculate_water_turbidity_ntu: 12 calls for the first half-year",
            "calc_batch_image_sum and calculate_area over those 12 rasters",
        ])
        + "\n<Answer>B</Answer>"
    )
    steps = [
        ("Enumerate files in benchmark/data/question157 to find sur_refl_b01 images", "in_progress"),
        ("Compute turbidity NTU for each sur_refl_b01 file and save outputs to question157/", "pending"),
        ("Compute sum of turbidity and water pixel area for each output; calculate turbidity per unit area", "pending"),
        ("Identify date with highest unit-area turbidity and select matching choice", "pending"),
    ]
    progress = lambda done, active: calls(todos(*[
        (c, "completed" if i < done else "in_progress" if i == active else "pending") for i, (c, _) in enumerate(steps)
    ]))
    script = {
        "strict": True,
        "roles": {
            "variant-1/orchestrator": [full_plan, text(v1_final)],
            "variant-1/executor-1": [
                progress(0, 0),
                calls(call("ls", path=f"{Q157_DATA}/")),
                progress(1, 1),
                turbidity(first),
                turbidity(second),
                progress(2, 2),
                text(f"Wrote 24 turbidity rasters to {Q157_SANDBOX}/turbidity_*.tif.\nSTATUS: SUCCESS"),
            ],
            "variant-1/executor-2": [
                calls(call("calc_batch_image_sum", image_paths=[q157_output(d) for d in Q157_DATES])),
                area(first),
                area(second),
                progress(3, 3),
                text("Turbidity sums and water areas are reported above for all 24 dates.\nSTATUS: SUCCESS"),
            ],
            "variant-1/judge": [verdict("SUCCESS", 0.92, "All 24 dates were processed and the maximum ratio is traced to tool outputs.")],
            "variant-2/orchestrator": [short_plan, text(v2_final)],
            "variant-2/executor-1": [
                calls(call("ls", path=f"{Q157_DATA}/")),
                turbidity(first),
                calls(call("calc_batch_image_sum", image_paths=[q157_output(d) for d in first])),
                area(first),
                text("Turbidity sums and areas computed for the processed rasters.\nSTATUS: SUCCESS"),
            ],
            "variant-2/judge": [verdict("SUCCESS", 0.61, "The ratio is computed from tool outputs, though coverage is unclear.")],
            "extractor": [
                memories(memory(
                    "MODIS Turbidity Per Unit Area Time Series",
                    "analysis_pattern",
                    "Rank dates of a water body by turbidity normalized by water area.",
                    "ls -> calculate_water_turbidity_ntu (one call per date, batched) -> calc_batch_image_sum -> calculate_area -> local ratio sum/area -> rank dates",
                    [
                        "Step 1: call ls on the data directory and list every sur_refl_b01 date",
                        "Step 2: call calculate_water_turbidity_ntu per date with an output_path inside the sandbox",
                        "Step 3: call calc_batch_image_sum over all turbidity rasters",
                        "Step 4: call calculate_area per turbidity raster and divide sum by area",
                    ],
                    ["lake water quality over a year of MODIS surface reflectance", "per unit area comparison across dates"],
                )),
                memories(
                    memory(
                        "Cover The Full Date Range Before Ranking",
                        "analysis_pattern",
                        "Temporal maxima need every acquisition in the window.",
                        "ls -> turbidity for every date -> sums and areas for every date -> rank",
                        ["Step 1: count the input dates from ls", "Step 2: check that one output exists per input date before ranking"],
                        ["question asks for the highest or lowest date in a period"],
                    ),
                    memory(
                        "Partial Temporal Coverage In Turbidity Ranking",
                        "error_attribution",
                        "A ranking built from half the acquisitions picked the wrong date.",
                        "ls -> turbidity for the first 12 dates only -> ranking over an incomplete series",
                        ["Step 1: compare the number of turbidity outputs with the number of inputs"],
                        ["fewer derived rasters than input rasters"],
                        "Only 12 of 24 dates were processed; no tool error was raised, so the incomplete series went unnoticed.",
                    ),
                ),
            ],
        },
    }
    record = {
        "id": "q157",
        "text": "Based on the sur_refl_b01 data of Lake Urmia from January 1 to December 30, 2022, calculate water turbidity over time, "
        "determine the turbidity per unit area for each date, and identify the time when the water body experienced the highest level of pollution.",
        "choices": [
            {"label": "A", "body": "Dec 24: 8497.79"},
            {"label": "B", "body": "Jan 16: 8233.77"},
            {"label": "C", "body": "May 1: 7753.23"},
            {"label": "D", "body": "Mar 2: 5961.99"},
            {"label": "E", "body": "Jul 15: 3030.38"},
        ],
        "gold_answer": "A",
        "gold_tool_sequence": ["ls"] + ["calculate_water_turbidity_ntu"] * 24 + ["calc_batch_image_sum"] + ["calculate_area"] * 24,
    }
    return record, workspace, script, None


# ---------------------------------------------------------------------------
# q27: ASTER TIR TTM, two polygons, with an injected TES fault

Q27_DATA = "/benchmark/data/question27"
Q27_SANDBOX = "/sandbox/question27"
TES_ERROR = "list index out of range"


def bands(data, polygon, stamp):
    return [f"{data}/ASTER_{stamp}_{polygon}_BT_{b}.tif" for b in (10, 11, 12)]


def tes_call(data, polygon, stamp, index=None):
    args = {"tir_band_paths": bands(data, polygon, stamp), "output_path": f"LST_TTM_{polygon}_calc.tif"}
    if index is not None:
        args["representative_band_index"] = index
    return call("temperature_emissivity_separation", **args)


def aster_workspace(data, sandbox, stamp, date, means, faults):
    files = {}
    derivations = []
    for polygon, mean in means.items():
        for path in bands(data, polygon, stamp):
            files[path] = {"date_tag": date, "kind": "brightness_temperature"}
        derivations.append({
            "tool": "temperature_emissivity_separation",
            "inputs": bands(data, polygon, stamp),
            "kind": "lst_kelvin",
            "date_tag": date,
            "scalar_table": {"mean": mean},
        })
    return {"sandbox_root": sandbox, "files": files, "derivations": derivations, "faults": faults}


CHAIN_TITLE = "ASTER TIR LST TTM Processing Chain"


def q27():
    stamp = "20221223_1030"
    workspace = aster_workspace(
        Q27_DATA, Q27_SANDBOX, stamp, "2022-12-23",
        {"Polygon1": 282.9996, "Polygon2": 283.7492},
        [{"tool_name": "temperature_emissivity_separation", "message": TES_ERROR, "fire_count": 1}],
    )
    lst = lambda p: f"{Q27_SANDBOX}/LST_TTM_{p}_calc.tif"
    the_plan = plan(
        (
            "List the ASTER TIR band files for 2022-12-23 10:30 and group them into Bands 10-12 triplets per polygon.",
            [f"{Q27_DATA}/"],
            ["band triplets"],
            ["three band paths for Polygon1 and for Polygon2"],
        ),
        (
            "Run temperature_emissivity_separation (TTM) on each polygon's verified TIR band triplet to produce LST.",
            ["band triplets"],
            [lst("Polygon1"), lst("Polygon2")],
            ["both LST rasters exist"],
        ),
        (
            "Compute the mean LST of each polygon (condition band0 > 0) and the difference Polygon2 - Polygon1.",
            [lst("Polygon1"), lst("Polygon2")],
            ["LST difference"],
            ["difference reported in kelvin"],
        ),
    )
    glob_turn = calls(call("glob", pattern=f"{Q27_DATA}/ASTER_{stamp}_*_BT_1*.tif"))
    triplets_done = text("Band triplets: Polygon1 and Polygon2 each have BT_10, BT_11, BT_12.\nSTATUS: SUCCESS")
    means = calls(
        call("calculate_band_mean_by_condition", input_path=lst("Polygon1"), condition="band0 > 0"),
        call("calculate_band_mean_by_condition", input_path=lst("Polygon2"), condition="band0 > 0"),
    )
    v1_final = (
        "The TTM step failed on its first call and no retry was allowed, so no LST rasters exist and the difference cannot be computed.\n"
        + diag(
            ["glob: found the six band files", "temperature_emissivity_separation: failed on the first call"],
            f"Error calling tool 'temperature_emissivity_separation': {TES_ERROR}",
        )
    )
    v2_final = (
        "After retrying TTM with verified band paths and representative_band_index=2, mean LST is 282.9996 K (Polygon1) "
        "and 283.7492 K (Polygon2). Difference = 283.7492 - 282.9996 = 0.7496 K, about 0.75 K, matching choice A.\n"
        + diag([
            "write_todos: planned and tracked the TTM steps",
            "glob: found BT_10/11/12 for both polygons",
            "temperature_emissivity_separation: first call failed (list index out of range), retried with representative_band_index=2, then ran for Polygon2",
            "calculate_band_mean_by_condition: mean LST per polygon",
            "difference: Polygon2 - Polygon1",
        ])
        + "\n<Answer>A</Answer>"
    )
    script = {
        "strict": True,
        "roles": {
            "variant-1/orchestrator": [the_plan, text(v1_final)],
            "variant-1/executor-1": [glob_turn, triplets_done],
            "variant-1/executor-2": [calls(tes_call(Q27_DATA, "Polygon1", stamp))],
            "variant-2/orchestrator": [the_plan, text(v2_final)],
            "variant-2/executor-1": [
                calls(todos(("Find TIR band triplets", "in_progress"), ("Run TTM per polygon", "pending"), ("Mean and difference", "pending"))),
                glob_turn,
                triplets_done,
            ],
            "variant-2/executor-2": [
                calls(tes_call(Q27_DATA, "Polygon1", stamp)),
                calls(tes_call(Q27_DATA, "Polygon1", stamp, 2)),
                calls(tes_call(Q27_DATA, "Polygon2", stamp, 2)),
                text(f"Wrote {lst('Polygon1')} and {lst('Polygon2')}.\nSTATUS: SUCCESS"),
            ],
            "variant-2/executor-3": [
                means,
                calls(call("difference", a=283.7492, b=282.9996)),
                calls(todos(("Find TIR band triplets", "completed"), ("Run TTM per polygon", "completed"), ("Mean and difference", "completed"))),
                text("LST difference (Polygon2 - Polygon1) = 0.7496 K.\nSTATUS: SUCCESS"),
            ],
            "variant-2/judge": [verdict("SUCCESS", 0.9, "Both LST rasters were produced after a corrected retry and the difference comes from tool outputs.")],
            "extractor": [
                memories(memory(
                    CHAIN_TITLE,
                    "analysis_pattern",
                    "ASTER TIR Bands 10-12 to land surface temperature with TTM (temperature_emissivity_separation), then per-region mean LST.",
                    "glob -> temperature_emissivity_separation (verified BT_10/11/12 triplet, representative_band_index=2) -> calculate_band_mean_by_condition (band0 > 0) -> difference",
                    [
                        "Step 1: call glob to list the ASTER TIR BT_10, BT_11, BT_12 files for the acquisition",
                        "Step 2: group files into one band triplet per region and verify every path",
                        "Step 3: call temperature_emissivity_separation with tir_band_paths and representative_band_index=2",
                        "Step 4: call calculate_band_mean_by_condition with condition band0 > 0 on each LST raster",
                        "Step 5: call difference on the two means",
                    ],
                    ["ASTER TIR band triplets (Bands 10-12)", "question asks for LST via TTM for polygons or regions"],
                )),
                memories(
                    memory(
                        "Verify TIR Band Triplets Before TTM",
                        "analysis_pattern",
                        "Check the band list of each region before calling TTM.",
                        "glob -> per-region triplet check -> temperature_emissivity_separation",
                        ["Step 1: confirm exactly three TIR paths per region", "Step 2: pass representative_band_index explicitly"],
                        ["multiple regions share one acquisition"],
                    ),
                    memory(
                        "TTM Band List Indexing Failure",
                        "error_attribution",
                        "temperature_emissivity_separation rejects a band list without a usable representative band index.",
                        "glob -> temperature_emissivity_separation fails -> retry with verified paths and representative_band_index=2",
                        ["Step 1: on this error re-check the tir_band_paths order", "Step 2: retry once with representative_band_index=2"],
                        ["tool error mentioning list index on the TTM call"],
                        f"Error calling tool 'temperature_emissivity_separation': {TES_ERROR}. The band list/indexing was invalid; a retry budget of zero left the chain broken.",
                    ),
                ),
            ],
        },
    }
    record = {
        "id": "q27",
        "text": "Using ASTER TIR Bands 10-12 brightness temperature acquired on 2022-12-23 10:30 over two polygons, derive land surface temperature "
        "with the TTM (temperature emissivity separation) method and compute the difference in mean LST between Polygon2 and Polygon1.",
        "choices": [
            {"label": "A", "body": "0.75 K"},
            {"label": "B", "body": "1.52 K"},
            {"label": "C", "body": "-0.75 K"},
            {"label": "D", "body": "2.31 K"},
        ],
        "gold_answer": "A",
        "gold_tool_sequence": [
            "glob",
            "temperature_emissivity_separation",
            "temperature_emissivity_separation",
            "calculate_band_mean_by_condition",
            "calculate_band_mean_by_condition",
            "difference",
        ],
    }
    return record, workspace, script, {"variant_retries": [0, 1]}


# ---------------------------------------------------------------------------
# q28: a follow-up ASTER TIR query that should reuse the q27 chain

Q28_DATA = "/benchmark/data/question28"
Q28_SANDBOX = "/sandbox/question28"


def q28():
    stamp = "20230105_1030"
    workspace = aster_workspace(Q28_DATA, Q28_SANDBOX, stamp, "2023-01-05", {"Polygon3": 279.4312}, [])
    lst = f"{Q28_SANDBOX}/LST_TTM_Polygon3_calc.tif"
    the_plan = plan(
        (
            "Find the ASTER TIR Bands 10-12 triplet for Polygon3 and run TTM (temperature_emissivity_separation) with representative_band_index=2.",
            [f"{Q28_DATA}/"],
            [lst],
            ["LST raster exists"],
        ),
        (
            "Compute the mean LST of Polygon3 with condition band0 > 0.",
            [lst],
            ["mean LST"],
            ["mean reported in kelvin"],
        ),
    )
    final = (
        "Following the stored TTM chain: mean LST of Polygon3 is 279.4312 K, about 279.43 K, matching choice C.\n"
        + diag([
            "glob: found BT_10/11/12 for Polygon3",
            "temperature_emissivity_separation: LST with representative_band_index=2",
            "calculate_band_mean_by_condition: mean LST",
        ])
        + "\n<Answer>C</Answer>"
    )
    executor_1 = [
        calls(call("glob", pattern=f"{Q28_DATA}/ASTER_{stamp}_Polygon3_BT_1*.tif")),
        calls(tes_call(Q28_DATA, "Polygon3", stamp, 2)),
        text(f"Wrote {lst}.\nSTATUS: SUCCESS"),
    ]
    executor_2 = [
        calls(call("calculate_band_mean_by_condition", input_path=lst, condition="band0 > 0")),
        text("Mean LST for Polygon3 = 279.4312 K.\nSTATUS: SUCCESS"),
    ]
    roles = {}
    for v, confidence in ((1, 0.88), (2, 0.8)):
        roles[f"variant-{v}/orchestrator"] = [the_plan, text(final)]
        roles[f"variant-{v}/executor-1"] = executor_1
        roles[f"variant-{v}/executor-2"] = executor_2
        roles[f"variant-{v}/judge"] = [verdict("SUCCESS", confidence, "The mean comes from the TTM output raster.")]
    roles["extractor"] = [
        memories(memory(
            "ASTER TIR Single Region Mean LST",
            "analysis_pattern",
            "One-region variant of the ASTER TIR TTM chain.",
            "glob -> temperature_emissivity_separation (representative_band_index=2) -> calculate_band_mean_by_condition",
            ["Step 1: call glob for the region's BT_10/11/12 files", "Step 2: run TTM, then the conditional mean"],
            ["single polygon LST from ASTER TIR"],
        )),
        memories(),
    ]
    record = {
        "id": "q28",
        "text": "Using ASTER TIR Bands 10-12 brightness temperature acquired on 2023-01-05 10:30 over Polygon3, derive land surface temperature "
        "with the TTM processing chain and report the mean LST of the polygon.",
        "choices": [
            {"label": "A", "body": "275.12 K"},
            {"label": "B", "body": "283.75 K"},
            {"label": "C", "body": "279.43 K"},
            {"label": "D", "body": "290.06 K"},
        ],
        "gold_answer": "C",
        "gold_tool_sequence": ["glob", "temperature_emissivity_separation", "calculate_band_mean_by_condition"],
    }
    return record, workspace, {"strict": True, "roles": roles}, None


def main():
    cases = [q157(), q27(), q28()]
    for record, workspace, script, overrides in cases:
        bundle = HERE / record["id"]
        write(bundle / "workspace.json", workspace)
        write(bundle / "script.json", script)
        if overrides is not None:
            write(bundle / "overrides.json", overrides)
    lines = lambda records: "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
    (HERE / "dataset.jsonl").write_text(lines([c[0] for c in cases]))
    (HERE / "aster_pair.jsonl").write_text(lines([cases[1][0], cases[2][0]]))
    (HERE / "q157.jsonl").write_text(lines([cases[0][0]]))


if __name__ == "__main__":
    main()
