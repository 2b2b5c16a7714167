import threading
import time

import pytest

from citeframe.llm_backend import (BackendConfig, BackendError,
                                   CompletionClient, load_backend_config,
                                   prompt_hash)


def test_cache_hit_skips_network(backend_config, mock_transport):
    client = CompletionClient(backend_config, transport=mock_transport)
    first = client.complete("Label this.\n- Use: reuse.", run_index=1)
    second = client.complete("Label this.\n- Use: reuse.", run_index=1)
    assert first == second
    assert len(mock_transport.calls) == 1


def test_run_index_gets_own_cache_entry(backend_config, mock_transport):
    client = CompletionClient(backend_config, transport=mock_transport)
    client.complete("Label this.\n- Use: reuse.", run_index=1)
    client.complete("Label this.\n- Use: reuse.", run_index=2)
    assert len(mock_transport.calls) == 2
    k1 = prompt_hash("m", "p", 1, 0.7)
    k2 = prompt_hash("m", "p", 2, 0.7)
    assert k1 != k2


def test_retry_exhaustion(backend_config):
    attempts = []

    def failing(config, prompt):
        attempts.append(1)
        raise BackendError("HTTP 500")

    client = CompletionClient(backend_config, transport=failing, backoff_base=0)
    with pytest.raises(BackendError, match="after 2 attempts"):
        client.complete("prompt", run_index=0)
    assert len(attempts) == backend_config.max_retries + 1


def test_retry_then_success(backend_config):
    state = {"calls": 0}

    def flaky(config, prompt):
        state["calls"] += 1
        if state["calls"] == 1:
            raise BackendError("transient")
        return "recovered"

    client = CompletionClient(backend_config, transport=flaky, backoff_base=0)
    assert client.complete("prompt", run_index=0) == "recovered"


def test_empty_completion_rejected(backend_config):
    client = CompletionClient(backend_config, transport=lambda c, p: "",
                              backoff_base=0)
    with pytest.raises(BackendError, match="empty"):
        client.complete("prompt", run_index=0)


def test_cache_key_no_collisions_fuzzed():
    seen = {}
    for model in ("a", "b"):
        for run in range(5):
            for temp in (0.0, 0.7):
                for i in range(500):
                    key = (model, f"prompt {i}", run, temp)
                    digest = prompt_hash(*key)
                    assert seen.setdefault(digest, key) == key


def test_parallelism_bound(tmp_path):
    config = BackendConfig(endpoint_url="http://x/", model_name="m",
                           cache_dir=str(tmp_path / "cache"), max_parallel=3)
    lock = threading.Lock()
    state = {"in_flight": 0, "peak": 0}

    def slow(cfg, prompt):
        with lock:
            state["in_flight"] += 1
            state["peak"] = max(state["peak"], state["in_flight"])
        time.sleep(0.02)
        with lock:
            state["in_flight"] -= 1
        return f"echo {prompt}"

    client = CompletionClient(config, transport=slow)
    jobs = [(f"p{i}", 0) for i in range(20)]
    results = client.complete_many(jobs)
    assert results == [f"echo p{i}" for i in range(20)]
    assert state["peak"] <= 3


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        BackendConfig(endpoint_url="u", model_name="m",
                      cache_dir=str(tmp_path), max_parallel=0)
    with pytest.raises(ValueError):
        BackendConfig(endpoint_url="u", model_name="m",
                      cache_dir=str(tmp_path), temperature=-0.1)


def test_load_backend_config(tmp_path):
    path = tmp_path / "backend.conf"
    path.write_text(
        "# local endpoint\n"
        "endpoint_url = http://127.0.0.1:8000/v1/chat/completions\n"
        "model_name = test-model\n"
        f"cache_dir = {tmp_path / 'cache'}\n"
        "temperature = 0.0\n"
        "max_parallel = 2\n"
    )
    config = load_backend_config(path)
    assert config.model_name == "test-model"
    assert config.temperature == 0.0
    assert config.max_parallel == 2


def test_load_backend_config_missing_key(tmp_path):
    path = tmp_path / "backend.conf"
    path.write_text("endpoint_url = http://x/\n")
    with pytest.raises(ValueError, match="missing"):
        load_backend_config(path)
