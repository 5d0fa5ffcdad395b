"""Shared fixtures: deterministic gateways, scripted backends, and a summary
section that prints one pass/fail line per acceptance guarantee."""

from __future__ import annotations

import math
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from openlabels.gateway import Gateway
from openlabels.gateway.cache import ResponseCache

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("suite")


class VectorBackend:
    """Test backend with prescribed embeddings and scripted generation.

    ``vectors`` maps exact text -> vector. ``answers`` is an ordered list of
    (substring, response) pairs scanned against the user prompt. Entailment
    is the affine cosine of the prescribed vectors unless ``entail_map``
    pins a (premise, hypothesis) pair explicitly.
    """

    def __init__(self, vectors=None, answers=(), default_answer="No", entail_map=None, backend_id="fake:vectors"):
        self.vectors = dict(vectors or {})
        self.answers = list(answers)
        self.default_answer = default_answer
        self.entail_map = dict(entail_map or {})
        self._id = backend_id

    @property
    def id(self) -> str:
        return self._id

    def _vector(self, text: str) -> list[float]:
        if text not in self.vectors:
            raise AssertionError(f"VectorBackend has no vector for {text!r}")
        return list(self.vectors[text])

    def embed(self, texts):
        return [self._vector(t) for t in texts]

    def generate(self, system_prompt, user_prompt, max_tokens, temperature):
        for needle, response in self.answers:
            if needle in user_prompt:
                return response
        return self.default_answer

    def entail(self, premise: str, hypothesis: str) -> float:
        if (premise, hypothesis) in self.entail_map:
            return self.entail_map[(premise, hypothesis)]
        u = self._vector(premise)
        v = self._vector(hypothesis)
        nu = math.sqrt(sum(a * a for a in u))
        nv = math.sqrt(sum(b * b for b in v))
        cos = 0.0 if nu == 0.0 or nv == 0.0 else sum(a * b for a, b in zip(u, v)) / (nu * nv)
        return min(1.0, max(0.0, (1.0 + cos) / 2.0))


def make_gateway(cache_dir: Path, backend, deterministic: bool = True) -> Gateway:
    """Wrap one backend instance into a gateway serving every role."""
    from openlabels.gateway import ROLES

    return Gateway(
        backends={role: backend for role in ROLES},
        cache=ResponseCache(cache_dir),
        deterministic=deterministic,
    )


@pytest.fixture()
def gateway(tmp_path: Path) -> Gateway:
    """Function-scoped deterministic mock gateway with a fresh cache."""
    return Gateway.mock(tmp_path / "gw-cache")


@pytest.fixture(scope="session")
def shared_gateway(tmp_path_factory) -> Gateway:
    """Session-scoped mock gateway for read-only property tests; the shared
    cache only accelerates repeated calls, values are pure."""
    return Gateway.mock(tmp_path_factory.mktemp("shared-gw") / "cache")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = []
    for key in ("passed", "failed", "error", "skipped"):
        reports.extend(terminalreporter.stats.get(key, []))
    acceptance = {}
    for rep in reports:
        if "test_acceptance" not in rep.nodeid:
            continue
        if getattr(rep, "when", "call") not in ("call", "setup"):
            continue
        name = rep.nodeid.split("::")[-1]
        if rep.passed:
            word = "PASS"
        elif rep.skipped:
            word = "SKIP"
        else:
            word = "FAIL"
        # setup failures surface as errors on the call-less report; a later
        # call report for the same test wins.
        if name not in acceptance or getattr(rep, "when", "call") == "call":
            acceptance[name] = word
    if not acceptance:
        return
    terminalreporter.section("acceptance gate")
    for name in sorted(acceptance):
        terminalreporter.write_line(f"{acceptance[name]:4s}  {name}")
