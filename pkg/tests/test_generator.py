import pytest

from conftest import web_doc
from defpipe import generator
from defpipe.errors import BackendUnavailable, NoCandidates, ProtocolViolation
from defpipe.extractor import ScoredSentence
from defpipe.retriever import RelatedDefinition, build_index, CoreTermEntry
from defpipe.types import SentenceRecord, Source, Term
from mockserver import run_mock

FSL = Term.from_surface("few-shot learning")


def scored(text, confidence):
    rec = SentenceRecord(text=text, doc_id="w", source=Source.WEB, section="body", contains_term=True)
    return ScoredSentence(sentence=rec, confidence=confidence)


def related(surface, definition, relevance=1.0):
    return RelatedDefinition(term=Term.from_surface(surface), definition=definition, relevance=relevance)


def config(**kwargs):
    return generator.PipelineConfig(**{"k": 5, "kprime": 5, **kwargs})


class TestEncode:
    def test_single_sdi_single_cdi(self):
        enc = generator.encode_for_generator(FSL, [scored("S1", 0.9)], [related("x", "C1")], config(k=1, kprime=1))
        assert enc.text == "few-shot learning [DEF] S1 [DEF] C1"
        assert (enc.k_used, enc.kprime_used, enc.truncated) == (1, 1, False)

    def test_degenerate_surface_only(self):
        enc = generator.encode_for_generator(FSL, [], [], config(k=0, kprime=0))
        assert enc.text == "few-shot learning"
        assert enc.truncated is False

    def test_budget_drops_second_sentence(self):
        s1 = scored("one two three", 0.9)  # surface(2) + [DEF](1) + 3 = 6 tokens
        s2 = scored("four five six seven", 0.5)
        enc = generator.encode_for_generator(FSL, [s1, s2], [], config(k=2, kprime=0, token_budget=8))
        assert enc.k_used == 1
        assert enc.truncated is True
        assert enc.text == "few-shot learning [DEF] one two three"

    def test_cdi_only_uses_single_marker(self):
        enc = generator.encode_for_generator(FSL, [], [related("a", "C1"), related("b", "C2")], config(k=0, kprime=5))
        assert enc.text == "few-shot learning [DEF] C1 [SEP] C2"
        assert enc.text.count("[DEF]") == 1
        assert (enc.k_used, enc.kprime_used) == (0, 2)

    def test_sdi_only_uses_single_marker(self):
        enc = generator.encode_for_generator(FSL, [scored("S1", 0.8), scored("S2", 0.6)], [], config(kprime=0))
        assert enc.text == "few-shot learning [DEF] S1 [SEP] S2"
        assert enc.text.count("[DEF]") == 1

    def test_marker_count_invariant(self):
        for sdi, cdi, markers in [
            ([scored("S1", 0.9)], [related("a", "C1")], 2),
            ([scored("S1", 0.9)], [], 1),
            ([], [related("a", "C1")], 1),
            ([], [], 0),
        ]:
            enc = generator.encode_for_generator(FSL, sdi, cdi, config())
            assert enc.text.count("[DEF]") == markers

    def test_respects_k_limits(self):
        sdi = [scored(f"s{i}", 0.9 - i / 10) for i in range(5)]
        enc = generator.encode_for_generator(FSL, sdi, [], config(k=2, kprime=0))
        assert enc.k_used == 2
        assert enc.truncated is False  # sentences beyond k are not "dropped by budget"

    def test_sentences_with_literal_markers_are_sanitized(self):
        enc = generator.encode_for_generator(
            FSL, [scored("bad [DEF] marker [SEP] here", 0.9)], [], config(kprime=0)
        )
        assert enc.text == "few-shot learning [DEF] bad (DEF) marker (SEP) here"


class TestParseEncoded:
    def test_round_trip_both_segments(self):
        sdi = [scored("S one", 0.9), scored("S two", 0.8)]
        cdi = [related("a", "C one"), related("b", "C two")]
        enc = generator.encode_for_generator(FSL, sdi, cdi, config())
        surface, context, got_sdi, got_cdi = generator.parse_encoded(enc)
        assert surface == "few-shot learning"
        assert context is None
        assert got_sdi == ["S one", "S two"]
        assert got_cdi == ["C one", "C two"]

    def test_round_trip_single_segment_disambiguates(self):
        enc_sdi = generator.encode_for_generator(FSL, [scored("S1", 0.9)], [], config())
        assert generator.parse_encoded(enc_sdi)[2:] == (["S1"], [])
        enc_cdi = generator.encode_for_generator(FSL, [], [related("a", "C1")], config())
        assert generator.parse_encoded(enc_cdi)[2:] == ([], ["C1"])


class TestContextVariant:
    def test_context_scheme(self):
        enc = generator.encode_context_variant(FSL, "ctx words", [scored("S1", 0.9)], [], config(kprime=0))
        assert enc.text == "few-shot learning [SEP] ctx words [DEF] S1"

    def test_context_only(self):
        enc = generator.encode_context_variant(FSL, "ctx", [], [], config())
        assert enc.text == "few-shot learning [SEP] ctx"

    def test_disabled_context_falls_back_exactly(self):
        sdi, cdi = [scored("S1", 0.9)], [related("a", "C1")]
        a = generator.encode_context_variant(FSL, None, sdi, cdi, config())
        b = generator.encode_for_generator(FSL, sdi, cdi, config())
        assert a == b

    def test_parse_recovers_context(self):
        enc = generator.encode_context_variant(FSL, "usage here", [scored("S1", 0.9)], [], config())
        surface, context, got_sdi, _ = generator.parse_encoded(enc)
        assert (surface, context, got_sdi) == ("few-shot learning", "usage here", ["S1"])


class TestExtractive:
    def test_argmax(self):
        out = generator.generate_extractive(FSL, [scored("best", 0.9), scored("worse", 0.4)])
        assert out.text == "best"
        assert out.backend_id == "extractive"

    def test_singleton(self):
        assert generator.generate_extractive(FSL, [scored("only", 0.2)]).text == "only"

    def test_empty_rejected(self):
        with pytest.raises(NoCandidates, match="no candidates"):
            generator.generate_extractive(FSL, [])


class TestExternalBackend:
    def test_round_trip(self):
        def handler(path, payload):
            assert path == "/generate"
            assert payload["input"].startswith("few-shot learning")
            return 200, {"definition": "canned text", "token_logprobs": [-0.5, -0.1], "backend_id": "mock-1"}

        enc = generator.encode_for_generator(FSL, [scored("S1", 0.9)], [], config())
        with run_mock(handler) as mock:
            backend = generator.ExternalBackend(mock.url, backoff=0.0)
            out = generator.generate_external(enc, backend, FSL)
        assert out.text == "canned text"
        assert out.backend_id == "mock-1"
        assert out.token_logprobs == [-0.5, -0.1]

    def test_positive_logprob_is_protocol_violation(self):
        handler = lambda path, payload: (200, {"definition": "d", "token_logprobs": [0.2], "backend_id": "m"})
        enc = generator.encode_for_generator(FSL, [], [], config(k=0, kprime=0))
        with run_mock(handler) as mock:
            backend = generator.ExternalBackend(mock.url, backoff=0.0)
            with pytest.raises(ProtocolViolation, match="<= 0"):
                generator.generate_external(enc, backend, FSL)

    def test_empty_definition_is_protocol_violation(self):
        handler = lambda path, payload: (200, {"definition": "", "backend_id": "m"})
        enc = generator.encode_for_generator(FSL, [], [], config(k=0, kprime=0))
        with run_mock(handler) as mock:
            backend = generator.ExternalBackend(mock.url, backoff=0.0)
            with pytest.raises(ProtocolViolation):
                generator.generate_external(enc, backend, FSL)

    def test_failing_backend_retried_exactly(self):
        enc = generator.encode_for_generator(FSL, [], [], config(k=0, kprime=0))
        with run_mock(lambda path, payload: (500, {"detail": "down"})) as mock:
            backend = generator.ExternalBackend(mock.url, retries=2, backoff=0.0)
            with pytest.raises(BackendUnavailable, match="3 attempt"):
                generator.generate_external(enc, backend, FSL)
            assert len(mock.requests) == 3

    def test_unreachable_endpoint(self):
        backend = generator.ExternalBackend("http://127.0.0.1:1", retries=1, backoff=0.0, timeout=0.5)
        enc = generator.encode_for_generator(FSL, [], [], config(k=0, kprime=0))
        with pytest.raises(BackendUnavailable):
            generator.generate_external(enc, backend, FSL)


class TestCdmGenerate:
    def _resources(self, backend=None):
        web = [
            web_doc(
                "w1",
                "forum",
                "Few-shot learning is a problem setup in machine learning based on a few examples. "
                "People argue about few-shot learning daily. "
                "Another note mentions few-shot learning in passing.",
            )
        ]
        index = build_index(
            [
                CoreTermEntry.build(Term.from_surface("zero-shot learning"),
                                    "Zero-shot learning is a problem setup in machine learning."),
                CoreTermEntry.build(Term.from_surface("organic chemistry"),
                                    "Organic chemistry is the branch of chemistry."),
            ]
        )
        scorer = lambda term, s: 0.9 if "is a problem setup" in s.text else 0.1
        return generator.PipelineResources(web_corpus=web, scorer=scorer, index=index, backend=backend)

    def test_extractive_composition_identity(self):
        resources = self._resources()
        result = generator.cdm_generate(FSL, resources, config(backend=generator.Backend.EXTRACTIVE))
        from defpipe.extractor import collect_candidates, rank_sdi

        ranked = rank_sdi(FSL, collect_candidates(FSL, resources.web_corpus), 5, resources.scorer)
        assert result.definition.text == generator.generate_extractive(FSL, ranked).text
        assert result.definition.text.startswith("Few-shot learning is a problem setup")

    def test_cdi_only_configuration(self):
        resources = self._resources(backend=None)

        def handler(path, payload):
            return 200, {"definition": "ok", "token_logprobs": None, "backend_id": "mock"}

        with run_mock(handler) as mock:
            resources.backend = generator.ExternalBackend(mock.url, backoff=0.0)
            result = generator.cdm_generate(
                FSL, resources, config(k=0, kprime=5, backend=generator.Backend.EXTERNAL)
            )
        assert result.encoded.k_used == 0
        assert result.encoded.kprime_used == 2
        assert result.encoded.text.count("[DEF]") == 1  # no SDI segment

    def test_deterministic_with_deterministic_backend(self):
        def handler(path, payload):
            return 200, {"definition": f"echo {len(payload['input'])}", "token_logprobs": None, "backend_id": "mock"}

        with run_mock(handler) as mock:
            backend = generator.ExternalBackend(mock.url, backoff=0.0)
            resources = self._resources(backend=backend)
            cfg = config(backend=generator.Backend.EXTERNAL)
            a = generator.cdm_generate(FSL, resources, cfg)
            b = generator.cdm_generate(FSL, resources, cfg)
        assert a == b

    def test_surface_only_external_still_proceeds(self):
        def handler(path, payload):
            assert payload["input"] == "few-shot learning"
            return 200, {"definition": "from surface alone", "token_logprobs": None, "backend_id": "mock"}

        with run_mock(handler) as mock:
            resources = generator.PipelineResources(backend=generator.ExternalBackend(mock.url, backoff=0.0))
            result = generator.cdm_generate(
                FSL, resources, config(k=0, kprime=0, backend=generator.Backend.EXTERNAL)
            )
        assert result.definition.text == "from surface alone"

    def test_missing_scorer_rejected(self):
        with pytest.raises(ValueError, match="scorer required"):
            generator.cdm_generate(FSL, generator.PipelineResources(), config(k=1, kprime=0))
