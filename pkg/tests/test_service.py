import json

import pytest
from fastapi.testclient import TestClient

from navipath.agents import Agent, run_agent
from navipath.evaluate import trial_metrics
from navipath.navigate import EV_PAN, EV_ZOOM
from navipath.recommend import Weights, generate_recommendations
from navipath.service import create_app


@pytest.fixture(scope="module")
def client(rendered):
    app = create_app(rendered["store"].root)
    with TestClient(app) as c:
        yield c


def _event(t, kind=EV_PAN, cx=1000.0, cy=1000.0, scale=2.0):
    return {
        "t": t,
        "kind": kind,
        "viewport": {"cx": cx, "cy": cy, "scale": scale, "screen_w": 1000, "screen_h": 1000},
        "payload": {},
    }


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_list_slides(client, rendered):
    r = client.get("/api/slides")
    assert r.status_code == 200
    ids = [m["id"] for m in r.json()["slides"]]
    assert rendered["meta"].id in ids


def test_meta_endpoint(client, rendered):
    r = client.get(f"/api/slides/{rendered['meta'].id}/meta")
    assert r.status_code == 200
    assert r.json() == rendered["meta"].to_dict()
    assert client.get("/api/slides/nope/meta").status_code == 404


def test_tile_endpoint(client, rendered):
    meta = rendered["meta"]
    top = meta.levels - 1
    r = client.get(f"/api/slides/{meta.id}/tiles/{top}/0_0.png")
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.content[:8] == b"\x89PNG\r\n\x1a\n"
    cols, _ = meta.tile_grid(0)
    assert client.get(f"/api/slides/{meta.id}/tiles/0/{cols}_0.png").status_code == 404
    assert client.get(f"/api/slides/{meta.id}/tiles/{meta.levels}/0_0.png").status_code == 404


def test_recommendations_match_library(client, rendered):
    r = client.get(
        f"/api/slides/{rendered['meta'].id}/recommendations",
        params={"w_cell": 0, "w_prolif": 0, "w_mitosis": 1, "sensitivity": 2 / 9},
    )
    assert r.status_code == 200
    lib = generate_recommendations(
        rendered["grid"], rendered["meta"], Weights(w_cell=0, w_prolif=0, w_mitosis=1)
    )
    assert r.content == lib.to_json_bytes()
    # Mitosis-only weights order locals by thresholded count.
    counts = []
    body = r.json()
    for loc in sorted(body["locals"], key=lambda l: l["index"]):
        total = sum(len(h["cells"]) for h in loc["hpfs"])
        counts.append(total)
    assert counts == sorted(counts, reverse=True)


def test_recommendations_etag_stable(client, rendered):
    url = f"/api/slides/{rendered['meta'].id}/recommendations"
    a = client.get(url, params={"w_mitosis": 0.5})
    b = client.get(url, params={"w_mitosis": 0.5})
    assert a.headers["etag"] == b.headers["etag"]
    assert a.content == b.content


def test_recommendations_sensitivity_monotone(client, rendered):
    url = f"/api/slides/{rendered['meta'].id}/recommendations"
    totals = [
        client.get(url, params={"sensitivity": s}).json()["cells_total"]
        for s in (0.0, 0.25, 0.5, 0.75, 1.0)
    ]
    assert totals == sorted(totals)


def test_recommendations_validation(client, rendered):
    url = f"/api/slides/{rendered['meta'].id}/recommendations"
    assert client.get(url, params={"w_cell": 1.7}).status_code == 400
    assert client.get("/api/slides/ghost/recommendations").status_code == 404


def test_session_flow_and_metrics_oracle(client, rendered):
    meta, gt, grid = rendered["meta"], rendered["gt"], rendered["grid"]
    # Create session.
    r = client.post("/api/sessions", json={"slide_id": meta.id, "condition": "navipath"})
    assert r.status_code == 201
    sid = r.json()["id"]
    # Unknown slide and bad condition rejected.
    assert client.post("/api/sessions", json={"slide_id": "ghost"}).status_code == 404
    assert (
        client.post("/api/sessions", json={"slide_id": meta.id, "condition": "x"}).status_code
        == 400
    )
    # Metrics before any events: 409.
    assert client.get(f"/api/sessions/{sid}/metrics").status_code == 409

    recs = generate_recommendations(grid, meta, Weights())
    run = run_agent(Agent(kind="diving", budget=120, seed=2), meta, gt, grid, recs)
    for ev in run.trace.events:
        resp = client.post(f"/api/sessions/{sid}/events", json=ev.to_dict())
        assert resp.status_code == 201
    # Time regression rejected.
    stale = _event(0, kind=EV_ZOOM)
    assert client.post(f"/api/sessions/{sid}/events", json=stale).status_code == 409
    # Metrics without a report: 409.
    assert client.get(f"/api/sessions/{sid}/metrics").status_code == 409

    r = client.post(f"/api/sessions/{sid}/report", json=run.report.to_dict())
    assert r.status_code == 201 and r.json()["points"] == len(run.report.points)

    got = client.get(f"/api/sessions/{sid}/metrics")
    assert got.status_code == 200
    run.trace.session_id = sid
    expected = trial_metrics(run.trace, run.report, gt, meta)
    assert got.content == expected.to_json_bytes()
    # Replay consistency: the served final viewport equals the last posted one.
    assert got.json()["final_viewport"] == run.trace.events[-1].viewport_after.to_dict()
    # Interaction counts cover every event kind present.
    kinds = {ev.kind for ev in run.trace.events}
    assert set(got.json()["interaction_counts"]) == kinds


def test_default_weights_top_local_shape(tmp_path):
    """Top Local serves 36 HPF slots with roughly 20 emitted at default weights."""
    import json as _json

    from conftest import build_hotspot_slide

    fx = build_hotspot_slide(slide_id="served-hotspot", seed=11)
    slide_dir = tmp_path / "served-hotspot"
    slide_dir.mkdir()
    (slide_dir / "meta.json").write_text(_json.dumps(fx["meta"].to_dict()))
    (slide_dir / "scores.json").write_text(_json.dumps(fx["grid"].to_dict()))
    with TestClient(create_app(tmp_path)) as c:
        body = c.get("/api/slides/served-hotspot/recommendations").json()
        top = next(l for l in body["locals"] if l["index"] == 1)
        assert top["hpf_slots"] == 36
        assert 14 <= len(top["hpfs"]) <= 26


def test_session_weights_patch(client, rendered):
    sid = client.post(
        "/api/sessions", json={"slide_id": rendered["meta"].id, "condition": "manual"}
    ).json()["id"]
    r = client.patch(
        f"/api/sessions/{sid}",
        json={"weights": {"w_cell": 0.1, "w_prolif": 0.2, "w_mitosis": 0.3, "sensitivity": 0.4}},
    )
    assert r.status_code == 200
    assert r.json()["weights"]["w_mitosis"] == 0.3
    assert client.patch(f"/api/sessions/{sid}", json={"weights": {"w_cell": 9}}).status_code == 400


def test_malformed_event_rejected(client, rendered):
    sid = client.post(
        "/api/sessions", json={"slide_id": rendered["meta"].id, "condition": "manual"}
    ).json()["id"]
    bad = {"t": 0, "kind": "warp", "viewport": {"cx": 0, "cy": 0, "scale": 1, "screen_w": 10, "screen_h": 10}}
    assert client.post(f"/api/sessions/{sid}/events", json=bad).status_code == 400
    assert client.get("/api/sessions/ghost/metrics").status_code == 404
