"""Regenerate the frontend test fixtures from the simulator.

Run from the repo root:  python scripts/make_ui_fixtures.py
"""

import json
from pathlib import Path

from tapegrip.config import default_config
from tapegrip.scenario import Scenario, run_scenario
from tapegrip.sim import appendage_frame, restore
from tapegrip.workspace import compute_workspace, export_heatmap

ROOT = Path(__file__).parent.parent
FIXTURES = ROOT / "frontend" / "tests" / "fixtures"


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    cfg = default_config()

    scn = Scenario.load(ROOT / "scenarios" / "rotate_circle.json")
    result = run_scenario(scn)
    final = json.loads(result.snapshots[-1])
    world = restore(final)
    tips = {}
    for side in ("left", "right"):
        frame = appendage_frame(cfg, world.left if side == "left" else world.right, side)
        tips[side] = [frame.X.x, frame.X.y]
    fixture = {
        "spacing": cfg.geometry.outer_extruder_spacing,
        "state": final,
        "world_tips": tips,
    }
    (FIXTURES / "final_state.json").write_text(json.dumps(fixture, indent=2, sort_keys=True))

    wmap = compute_workspace(cfg, 60.0)
    export_heatmap(wmap, FIXTURES / "heatmap_small.csv")
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
