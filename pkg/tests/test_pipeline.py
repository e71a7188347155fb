import json
from pathlib import Path

import pytest

from glis.glci import class_prototype
from glis.pipeline import (
    Config,
    ConfigError,
    SchemaViolationError,
    ensure_valid,
    load_config,
    parse_config,
    run_stage,
    validate_file,
)
from glis.pipeline.cli import main as cli_main
from glis.pipeline.io import write_json_atomic
from glis.synthbench import default_knowledge_base

from walkthrough import add_rplg_inputs, build_walkthrough_fixture, write_walkthrough_config

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def walkthrough(tmp_path):
    build_walkthrough_fixture(tmp_path)
    config_path = write_walkthrough_config(tmp_path)
    return tmp_path, load_config(config_path)


class TestConfig:
    def test_blank_file_gives_published_defaults(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        config = load_config(path)
        assert config.phi_clip == 0.5
        assert config.phi_obj == 0.1
        assert config.phi_low == 0.25
        assert config.phi_high == 0.6
        assert config.phi_keep == 0.75
        assert config.weights.lambda_conf == 0.2
        assert (config.weights.lambda1, config.weights.lambda2) == (4.0, 10.0)
        assert (config.weights.lambda3, config.weights.lambda4) == (1.0, 1.0)

    def test_out_of_range_threshold_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"phi_keep": 2.0})
        assert "phi_keep" in str(err.value)

    def test_partial_override_keeps_other_defaults(self):
        config = parse_config({"phi_low": 0.4})
        assert config.phi_low == 0.4
        assert config.phi_high == 0.6
        assert config.phi_clip == 0.5

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"phi_klip": 0.5})
        assert "phi_klip" in str(err.value)

    def test_http_backend_requires_endpoint(self):
        with pytest.raises(ConfigError):
            parse_config({"llm_backend": {"kind": "http"}})

    def test_env_overrides(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"llm_backend": {"kind": "http", "endpoint": "http://a"}}))
        monkeypatch.setenv("GLIS_ENDPOINT", "http://b")
        monkeypatch.setenv("GLIS_TIMEOUT", "3.5")
        config = load_config(path)
        assert config.llm_backend.endpoint == "http://b"
        assert config.llm_backend.timeout == 3.5

    def test_nested_field_error_names_the_field(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"weights": {"lambda1": -3}})
        assert "weights" in str(err.value)


class TestSchemas:
    def test_valid_proposals_file(self, tmp_path):
        kb = default_knowledge_base()
        doc = {
            "schema_version": 1,
            "scene_id": "s0",
            "proposals": [
                {"box": [0, 0, 0.5, 1, 1, 1, 0.0], "objectness": 0.5,
                 "feature": [float(v) for v in class_prototype(kb, "sofa")]}
            ],
        }
        path = tmp_path / "proposals.json"
        write_json_atomic(path, doc)
        assert validate_file(path, "proposals") == []

    def test_negative_width_flagged_at_location(self, tmp_path):
        doc = {
            "schema_version": 1,
            "scene_id": "s0",
            "proposals": [
                {"box": [0, 0, 0, 1, -2, 1, 0], "objectness": 0.5, "feature": [1.0]}
            ],
        }
        path = tmp_path / "proposals.json"
        write_json_atomic(path, doc)
        violations = validate_file(path, "proposals")
        assert len(violations) == 1
        assert violations[0].pointer == "/proposals/0/box/4"

    def test_feature_length_mismatch_one_violation_per_offender(self, tmp_path):
        def prop(feat):
            return {"box": [0, 0, 0, 1, 1, 1, 0], "objectness": 0.5, "feature": feat}

        doc = {
            "schema_version": 1,
            "scene_id": "s0",
            "proposals": [prop([1.0, 2.0]), prop([1.0]), prop([1.0, 2.0]), prop([3.0])],
        }
        path = tmp_path / "proposals.json"
        write_json_atomic(path, doc)
        violations = validate_file(path, "proposals")
        assert [v.pointer for v in violations] == ["/proposals/1/feature", "/proposals/3/feature"]

    def test_wrong_schema_version(self, tmp_path):
        path = tmp_path / "scores.json"
        write_json_atomic(path, {"schema_version": 99, "scores": []})
        assert any(v.pointer == "/schema_version" for v in validate_file(path, "scores"))

    def test_kb_prior_permutation_checked(self, tmp_path):
        doc = default_knowledge_base().to_doc()
        doc["class_prior"]["library"] = doc["class_prior"]["library"][:-1]
        path = tmp_path / "kb.json"
        write_json_atomic(path, doc)
        violations = validate_file(path, "kb")
        assert any("/class_prior/library" == v.pointer for v in violations)

    def test_scenes_missing_reference_flagged(self, tmp_path):
        doc = {
            "schema_version": 1,
            "scenes": [
                {
                    "scene_id": "s0",
                    "points_path": "nowhere.json",
                    "projection": [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
                    "proposals_path": "also_nowhere.json",
                    "global_feature": [1.0],
                }
            ],
        }
        path = tmp_path / "scenes.json"
        write_json_atomic(path, doc)
        pointers = {v.pointer for v in validate_file(path, "scenes")}
        assert "/scenes/0/points_path" in pointers
        assert "/scenes/0/proposals_path" in pointers

    def test_transcript_stage_order_enforced(self, tmp_path):
        lines = [
            {"stage": "local", "prompt": "p", "answer": "a", "decision": "d"},
            {"stage": "global", "prompt": "p", "answer": "a", "decision": "d"},
        ]
        path = tmp_path / "t.jsonl"
        path.write_text("".join(json.dumps(line) + "\n" for line in lines))
        violations = validate_file(path, "transcript")
        assert any("after a later stage" in v.message for v in violations)

    def test_report_round_trip_and_validation(self, tmp_path, walkthrough):
        root, config = walkthrough
        run_stage("infer", config)
        run_stage("eval", config)
        report = root / "out" / "report.json"
        assert validate_file(report, "report") == []

    def test_unknown_schema_name(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{}")
        with pytest.raises(ValueError):
            validate_file(path, "nonsense")

    def test_ensure_valid_raises_with_violations(self, tmp_path):
        path = tmp_path / "bad.json"
        write_json_atomic(path, {"schema_version": 1, "scores": [{"patch_id": ""}]})
        with pytest.raises(SchemaViolationError) as err:
            ensure_valid(path, "scores")
        assert err.value.violations


class TestRoundTrip:
    def test_schema_docs_survive_serialize_parse_serialize(self, tmp_path, walkthrough):
        root, config = walkthrough
        run_stage("infer", config)
        run_stage("eval", config)
        for rel, schema in [
            ("scenes.json", "scenes"),
            ("kb.json", "kb"),
            ("proposals/conference.json", "proposals"),
            ("out/detections/conference.json", "detections"),
            ("out/report.json", "report"),
        ]:
            path = root / rel
            doc = json.loads(path.read_text())
            second = json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
            assert second == path.read_text(), rel


class TestWalkthroughStages:
    def test_infer_reproduces_dialogues(self, walkthrough):
        root, config = walkthrough
        result = run_stage("infer", config)
        assert result.exit_code == 0
        conference = (root / "out" / "transcripts" / "conference.jsonl").read_bytes()
        library = (root / "out" / "transcripts" / "library.jsonl").read_bytes()
        assert conference == (GOLDEN / "conference.transcript.jsonl").read_bytes()
        assert library == (GOLDEN / "library.transcript.jsonl").read_bytes()

    def test_final_detections_match_walkthrough(self, walkthrough):
        root, config = walkthrough
        run_stage("infer", config)
        conference = json.loads((root / "out" / "detections" / "conference.json").read_text())
        classes = [(d["class_name"], d["status"]) for d in conference["detections"]]
        assert classes == [("sofa", "confirmed"), ("chair", "confirmed"), ("table", "confirmed")]
        library = json.loads((root / "out" / "detections" / "library.json").read_text())
        assert library["detections"] == [
            {
                "box": [0.0, 0.0, 0.5, 1.6, 1.0, 1.0, 0.0],
                "class_name": "bookshelf",
                "objectness": 0.8148,
                "status": "reclassified",
                "original_class": "cabinet",
            }
        ]

    def test_scene_filter(self, walkthrough):
        root, config = walkthrough
        result = run_stage("infer", config, scene="library")
        assert result.exit_code == 0
        assert list(result.summary["scenes"]) == ["library"]
        assert not (root / "out" / "detections" / "conference.json").exists()

    def test_unknown_scene_is_missing_input(self, walkthrough):
        _, config = walkthrough
        assert run_stage("infer", config, scene="nope").exit_code == 4


class TestRplgAndBaolStages:
    @pytest.fixture
    def rplg_setup(self, tmp_path, walkthrough):
        root, config = walkthrough
        add_rplg_inputs(root)
        return root, load_config(root / "config.json")

    def test_rplg_stage_filters_and_lifts(self, rplg_setup):
        root, config = rplg_setup
        result = run_stage("rplg", config, scene="conference")
        assert result.exit_code == 0
        doc = json.loads((root / "out" / "pseudo_labels" / "conference.json").read_text())
        assert validate_file(root / "out" / "pseudo_labels" / "conference.json",
                             "pseudo_labels") == []
        kept_classes = [lab["class_name"] for lab in doc["labels"]]
        assert "sofa" not in kept_classes  # phi_pos below threshold
        drops = [
            json.loads(line)
            for line in (root / "out" / "pseudo_labels" / "conference.drops.jsonl")
            .read_text().splitlines()
        ]
        assert {d["patch_id"] for d in drops} == {"p1"}  # empty frustum
        assert doc["labels"]  # p0 survived
        summary = result.summary["scenes"]["conference"]
        assert summary["kept"] == 2 and summary["lifted"] == 1

    def test_baol_label_stage(self, rplg_setup):
        root, config = rplg_setup
        run_stage("rplg", config)
        result = run_stage("baol-label", config)
        assert result.exit_code == 0
        for sid in ("conference", "library"):
            path = root / "out" / "assignment" / f"{sid}.json"
            assert validate_file(path, "assignment") == []
        doc = json.loads((root / "out" / "assignment" / "conference.json").read_text())
        assert len(doc["y"]) == 4

    def test_baol_label_requires_rplg_output(self, walkthrough):
        _, config = walkthrough
        assert run_stage("baol-label", config).exit_code == 4


class TestDeterminism:
    def test_synth_rerun_byte_identical(self, tmp_path):
        doc = {"paths": {"out_dir": str(tmp_path / "a")}, "seed": 3,
               "synth": {"num_scenes": 2}}
        cfg_a = parse_config(doc)
        doc_b = {**doc, "paths": {"out_dir": str(tmp_path / "b")}}
        cfg_b = parse_config(doc_b)
        assert run_stage("synth", cfg_a).exit_code == 0
        assert run_stage("synth", cfg_b).exit_code == 0
        for rel in ["scenes.json", "kb.json", "proposals/scene00000.json",
                    "points/scene00001.json"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_infer_rerun_byte_identical(self, tmp_path):
        build_walkthrough_fixture(tmp_path)
        files = {}
        for run in ("x", "y"):
            config = load_config(write_walkthrough_config(tmp_path, out_dir=run))
            assert run_stage("infer", config).exit_code == 0
            assert run_stage("eval", config).exit_code == 0
            for rel in ["detections/conference.json", "transcripts/conference.jsonl",
                        "detections/library.json", "report.json"]:
                files.setdefault(rel, []).append((tmp_path / run / rel).read_bytes())
        for rel, (first, second) in files.items():
            assert first == second, rel

    def test_stage_isolation_upstream_unchanged(self, tmp_path):
        build_walkthrough_fixture(tmp_path)
        config = load_config(write_walkthrough_config(tmp_path))
        run_stage("infer", config)
        before = (tmp_path / "out" / "detections" / "conference.json").read_bytes()
        run_stage("eval", config)
        (tmp_path / "out" / "report.json").unlink()
        run_stage("infer", config)
        after = (tmp_path / "out" / "detections" / "conference.json").read_bytes()
        assert before == after


class TestWorkers:
    def test_parallel_infer_matches_serial(self, tmp_path):
        build_walkthrough_fixture(tmp_path)
        serial_cfg = load_config(write_walkthrough_config(tmp_path, out_dir="serial"))
        run_stage("infer", serial_cfg)
        doc = json.loads((tmp_path / "config.json").read_text())
        doc["workers"] = 4
        doc["paths"]["out_dir"] = str(tmp_path / "parallel")
        (tmp_path / "config.json").write_text(json.dumps(doc))
        parallel_cfg = load_config(tmp_path / "config.json")
        run_stage("infer", parallel_cfg)
        for rel in ["transcripts/conference.jsonl", "detections/library.json"]:
            assert (tmp_path / "serial" / rel).read_bytes() == (
                tmp_path / "parallel" / rel
            ).read_bytes()


class TestExperimentStage:
    def test_writes_results_and_summary(self, tmp_path):
        config = parse_config({"paths": {"out_dir": str(tmp_path)}, "seed": 11})
        result = run_stage("experiment", config, trials=3)
        assert result.exit_code == 0
        lines = (tmp_path / "results.jsonl").read_text().splitlines()
        assert len(lines) == 3
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["trials"] == 3
        assert "per_class_mean_delta" in summary


class TestLossesCheckStage:
    def test_all_checks_pass(self, capsys):
        result = run_stage("losses-check", Config())
        assert result.exit_code == 0
        assert result.summary["passed"] is True
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out


class TestCli:
    def test_synth_then_infer_then_eval(self, tmp_path, capsys):
        cfg = {
            "paths": {
                "out_dir": str(tmp_path / "run"),
                "scenes": str(tmp_path / "run" / "scenes.json"),
                "kb": str(tmp_path / "run" / "kb.json"),
            },
            "seed": 8,
            "synth": {"num_scenes": 2},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli_main(["synth", "--config", str(cfg_path)]) == 0
        assert cli_main(["infer", "--config", str(cfg_path)]) == 0
        assert cli_main(["eval", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        last = out.strip().splitlines()[-1]
        assert json.loads(last)["stage"] == "eval"

    def test_missing_config_exit_4(self, capsys):
        assert cli_main(["infer", "--config", "/does/not/exist.json"]) == 4

    def test_bad_config_exit_2(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"phi_keep": 7}))
        assert cli_main(["infer", "--config", str(path)]) == 2

    def test_missing_inputs_exit_4(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"paths": {"out_dir": str(tmp_path)}}))
        assert cli_main(["infer", "--config", str(path)]) == 4

    def test_validate_subcommand(self, tmp_path, capsys):
        good = tmp_path / "scores.json"
        write_json_atomic(good, {"schema_version": 1, "scores": []})
        assert cli_main(["validate", str(good), "--schema", "scores"]) == 0
        bad = tmp_path / "bad.json"
        write_json_atomic(bad, {"schema_version": 1, "scores": [{"patch_id": ""}]})
        assert cli_main(["validate", str(bad), "--schema", "scores"]) == 2

    def test_backend_override_requires_endpoint(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text("{}")
        assert cli_main(["infer", "--config", str(path), "--backend", "http"]) == 2


class TestHttpBackends:
    @pytest.fixture
    def llm_server(self):
        import http.server
        import threading

        from glis.glci import mock_complete

        kb = default_knowledge_base()

        class Handler(http.server.BaseHTTPRequestHandler):
            calls = []

            def do_POST(self):
                length = int(self.headers["Content-Length"])
                payload = json.loads(self.rfile.read(length))
                Handler.calls.append(payload)
                if self.path == "/llm":
                    # scene/class context arrives only as a digest over the wire,
                    # so decode the top candidate back out of the digest text
                    answer = self._answer(payload)
                    body = json.dumps({"answer": answer}).encode()
                elif self.path == "/score":
                    pos = 2.0 if "not" not in payload["positive_prompt"] else 0.0
                    body = json.dumps({"pos_raw": pos, "neg_raw": 0.0}).encode()
                else:
                    self.send_response(404)
                    self.end_headers()
                    return
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _answer(self, payload):
                digest = payload.get("context_digest", "")
                context = None
                if digest:
                    # "classes: a=1.000, ...; scenes: b=1.000, ..." -> prototype
                    import re

                    m = re.search(r"scenes: ([^=]+)=", digest)
                    c = re.search(r"classes: ([^=]+)=", digest)
                    from glis.glci import class_prototype, scene_prototype

                    if payload["prompt"].startswith("What kind"):
                        context = scene_prototype(kb, m.group(1)) if m else None
                    else:
                        context = class_prototype(kb, c.group(1)) if c else None
                return mock_complete(kb, payload["prompt"], context, "library")

            def log_message(self, *args):
                pass

        server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        yield f"http://127.0.0.1:{server.server_port}", Handler
        server.shutdown()

    def test_http_llm_backend_runs_infer(self, tmp_path, llm_server):
        endpoint, handler = llm_server
        build_walkthrough_fixture(tmp_path)
        doc = json.loads(write_walkthrough_config(tmp_path).read_text())
        doc["llm_backend"] = {"kind": "http", "endpoint": f"{endpoint}/llm"}
        (tmp_path / "config.json").write_text(json.dumps(doc))
        config = load_config(tmp_path / "config.json")
        result = run_stage("infer", config, scene="library")
        assert result.exit_code == 0
        assert result.summary["scenes"]["library"]["scene_type"] == "library"
        assert any("context_digest" in call for call in handler.calls)

    def test_http_transport_failure_exit_3(self, tmp_path):
        build_walkthrough_fixture(tmp_path)
        doc = json.loads(write_walkthrough_config(tmp_path).read_text())
        doc["llm_backend"] = {
            "kind": "http", "endpoint": "http://127.0.0.1:1",  # nothing listens here
            "timeout": 0.2, "retries": 0,
        }
        (tmp_path / "config.json").write_text(json.dumps(doc))
        config = load_config(tmp_path / "config.json")
        assert run_stage("infer", config, scene="library").exit_code == 3

    def test_http_scorer_backend(self, tmp_path, llm_server):
        endpoint, _ = llm_server
        from glis.rplg import HttpScoreBackend

        backend = HttpScoreBackend(f"{endpoint}/score", timeout=5.0)
        assert backend.raw_scores("p0", "chair") == (2.0, 0.0)
