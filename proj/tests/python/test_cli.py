import json
import os
import subprocess

import pytest

CLI = os.environ.get("LYRICDET_CLI")

pytestmark = pytest.mark.skipif(not CLI, reason="LYRICDET_CLI not set")


def run(*args, cwd=None, check=True):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, cwd=cwd, check=check)


def test_smoke_validate_and_stats(tmp_path):
    run("smoke", "--out-dir", tmp_path / "c", "--size", 10, "--seed", 2)
    out = run("corpus", "validate", tmp_path / "c" / "manifest.jsonl").stdout
    assert "20 records, 0 errors" in out
    stats = run("corpus", "stats", tmp_path / "c" / "manifest.jsonl").stdout
    assert "total" in stats


def test_invalid_manifest_exits_nonzero(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"track_id": "x"}\n')
    assert run("corpus", "validate", bad, check=False).returncode != 0
    assert run("corpus", "validate", tmp_path / "missing.jsonl", check=False).returncode != 0


def test_train_predict_and_score(tmp_path):
    run("smoke", "--out-dir", tmp_path / "c", "--size", 10, "--seed", 5)
    manifest = tmp_path / "c" / "manifest.jsonl"
    run("--cache-dir", tmp_path / "cache", "transcribe", "run", "--manifest", manifest, "--out", tmp_path / "t.jsonl")
    run("--cache-dir", tmp_path / "cache", "encode", "run", "--transcripts", tmp_path / "t.jsonl",
        "--encoder", "stub-ngram3-d128-s0")
    emb = tmp_path / "cache" / "stub-ngram3-d128-s0"
    run("detect", "train", "--embeddings", emb, "--manifest", manifest, "--out", tmp_path / "m.bin",
        "--max-epochs", 20)
    run("detect", "predict", "--model", tmp_path / "m.bin", "--embeddings", emb, "--out", tmp_path / "p.jsonl")
    lines = [json.loads(l) for l in (tmp_path / "p.jsonl").read_text().splitlines()]
    assert len(lines) == 20
    assert {"track_id", "p_fake", "label"} <= set(lines[0])
    run("eval", "score", "--predictions", tmp_path / "p.jsonl", "--manifest", manifest,
        "--out", tmp_path / "score.json")
    report = json.loads((tmp_path / "score.json").read_text())
    assert report["overall"]


def test_eval_plan_is_reproducible(tmp_path):
    run("smoke", "--out-dir", tmp_path / "c", "--size", 10, "--seed", 6)
    plan = tmp_path / "plan.txt"
    plan.write_text("kind = in_domain\nmanifest = c/manifest.jsonl\nmax_epochs = 10\nseed = 3\n")
    run("eval", "run", "--plan", plan, "--out-dir", tmp_path / "a")
    run("eval", "run", "--plan", plan, "--out-dir", tmp_path / "b")
    a = (tmp_path / "a" / "in_domain-lyrics-unattacked.csv").read_text()
    b = (tmp_path / "b" / "in_domain-lyrics-unattacked.csv").read_text()
    assert a == b
    text = run("eval", "render", "--report", tmp_path / "a" / "in_domain-lyrics-unattacked.json",
               "--format", "text").stdout
    assert "Macro Avg." in text


def test_attack_cli_touches_only_fake_tracks(tmp_path):
    run("smoke", "--out-dir", tmp_path / "c", "--size", 10, "--seed", 8)
    run("attack", "run", "--manifest", tmp_path / "c" / "manifest.jsonl", "--kind", "eq",
        "--param", "bands=1000:-6:1", "--filter", "source=ai", "--out-dir", tmp_path / "att")
    manifests = list((tmp_path / "att").glob("*.jsonl"))
    assert manifests
    records = [json.loads(l) for l in manifests[0].read_text().splitlines()]
    changed = [r for r in records if "@" in r["track_id"]]
    assert len(changed) == 10
    assert all(r["source"] == "ai" for r in changed)
