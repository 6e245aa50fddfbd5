import pytest
from fastapi.testclient import TestClient

from lamf.config import ModelConfig
from lamf.modelfile import gen_synthetic, write_model
from lamf.service import create_app
from lamf.textio import synthetic_vocab, write_vocab

CFG = ModelConfig(dim=64, hidden_dim=128, n_layers=2, n_heads=4, n_kv_heads=2,
                  vocab_size=512, seq_len=48, gs=32)


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    model, tok = root / "m.lamf", root / "t.tok"
    write_model(CFG, gen_synthetic(CFG, seed=8), model)
    write_vocab(synthetic_vocab(CFG.vocab_size), tok)
    return str(model), str(tok)


@pytest.fixture(scope="module")
def client(files):
    app = create_app()
    with TestClient(app) as c:
        yield c
    app.state.engine_cache.close_all()


class TestHealth:
    def test_health(self, client):
        out = client.get("/health").json()
        assert out["status"] == "ok"


class TestGenerate:
    def test_greedy_generation(self, client, files):
        model, tok = files
        payload = {"model_path": model, "tokenizer_path": tok, "prompt": "he",
                   "steps": 8, "benchmark": True}
        r1 = client.post("/generate", json=payload)
        assert r1.status_code == 200
        body = r1.json()
        assert len(body["token_ids"]) == 8
        assert body["report"]["tokens"] == 8
        assert sum(body["report"]["fractions"].values()) == pytest.approx(1.0, abs=1e-3)
        r2 = client.post("/generate", json=payload)
        assert r2.json()["token_ids"] == body["token_ids"]

    def test_missing_model_file_is_400(self, client, files):
        _, tok = files
        r = client.post("/generate", json={
            "model_path": "/nonexistent.lamf", "tokenizer_path": tok, "steps": 2})
        assert r.status_code == 400
        assert "nonexistent" in r.json()["detail"]

    def test_oversized_steps_is_400(self, client, files):
        model, tok = files
        r = client.post("/generate", json={
            "model_path": model, "tokenizer_path": tok, "steps": CFG.seq_len + 5})
        assert r.status_code == 400

    def test_validation_error_is_422(self, client, files):
        model, tok = files
        r = client.post("/generate", json={
            "model_path": model, "tokenizer_path": tok, "steps": 0})
        assert r.status_code == 422


class TestGops:
    def test_gops(self, client, files):
        model, _ = files
        r = client.post("/gops", json={"model_path": model, "repeats": 3})
        assert r.status_code == 200
        body = r.json()
        assert body["ops"] == 2 * CFG.vocab_size * CFG.dim
        assert body["mean_gops"] > 0


class TestSimulate:
    def test_roofline_shape(self, client):
        r = client.post("/simulate", json={"m": 2048, "n": 2048})
        body = r.json()
        assert body["steady_row_cycles"] == 128
        assert body["sustained_gops"] == pytest.approx(6.56, rel=0.02)
        assert body["peak_gops"] == pytest.approx(6.56, abs=1e-9)

    def test_bad_shape_is_400(self, client):
        r = client.post("/simulate", json={"m": 10, "n": 100})
        assert r.status_code == 400

    def test_calibrate(self, client):
        r = client.post("/calibrate", json={"target_gops": 4.696, "m": 32000, "n": 2048})
        body = r.json()
        assert body["achieved_gops"] == pytest.approx(4.696, rel=0.01)
        assert body["ddr_bytes_per_cycle"] == pytest.approx(11.45, rel=0.02)

    def test_calibrate_above_peak_is_400(self, client):
        r = client.post("/calibrate", json={"target_gops": 7.0, "m": 32000, "n": 2048})
        assert r.status_code == 400


class TestSchedule:
    def test_closed_forms(self, client):
        payload = {"compute": [10.0] * 22, "transfer": [8.0] * 22, "mode": "sync"}
        assert client.post("/schedule", json=payload).json()["total_time"] == 396.0
        payload["mode"] = "async"
        assert client.post("/schedule", json=payload).json()["total_time"] == 228.0


class TestQuantizeStats:
    def test_random_sample(self, client):
        r = client.post("/quantize-stats", json={"group_size": 256,
                                                 "random_normal": 25600, "seed": 3})
        body = r.json()
        assert body["count"] == 25600
        assert body["groups"] == 100
        assert 0 <= body["mean"] < 0.01
        assert body["min"] <= body["mean"] <= body["max"]

    def test_explicit_values(self, client):
        r = client.post("/quantize-stats", json={"group_size": 4,
                                                 "values": [2.0, -1.0, 0.5, 1.5]})
        assert r.status_code == 200
        assert r.json()["count"] == 4

    def test_needs_a_source(self, client):
        r = client.post("/quantize-stats", json={"group_size": 4})
        assert r.status_code == 400


class TestSelftest:
    def test_all_checks_pass(self, client):
        body = client.post("/selftest").json()
        assert body["ok"], body["failures"]
        assert body["failed"] == 0
        assert body["passed"] >= 10
