#include "doctest.h"

#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "httplib.h"

#include "rrag/errors.hpp"
#include "rrag/generator_backend.hpp"
#include "rrag/rng.hpp"
#include "test_support.hpp"

using namespace rrag;
using rrag::testing::TempDir;

namespace {

GenerationRequest req_reflect(const std::string& q) {
    GenerationRequest r;
    r.mode = GenerationMode::retrieval_reflection;
    r.question = q;
    r.image_ref = "img://x";
    r.prompt_template_id = "answer_single";
    return r;
}

GenerationRequest req_direct(const std::string& q) {
    GenerationRequest r = req_reflect(q);
    r.mode = GenerationMode::direct_answer;
    return r;
}

GenerationRequest req_relevance(const std::string& q, const std::string& paragraph) {
    GenerationRequest r = req_reflect(q);
    r.mode = GenerationMode::relevance_and_answer;
    r.context_paragraph = paragraph;
    return r;
}

const char* kScriptedFixture =
    R"({"request_key": {"mode": "retrieval_reflection", "question": "What is shown?"}, "response": {"reflection_token": "NoRetrieval", "reflection_prob": 0.97}})"
    "\n"
    R"({"request_key": {"mode": "direct_answer", "question": "What is shown?"}, "response": {"answer_text": "a dog", "answer_token_logprobs": [-0.1, -0.2]}})"
    "\n"
    R"({"request_key": {"mode": "relevance_and_answer", "question": "Q1", "context_contains": "dam"}, "response": {"reflection_token": "Relevant", "reflection_prob": 0.9, "answer_text": "1936", "answer_token_logprobs": [-0.3]}})"
    "\n";

} // namespace

TEST_CASE("scripted backend answers from the fixture table") {
    TempDir dir;
    const std::string path = dir.file("fixture.jsonl");
    testing::write_file(path, kScriptedFixture);
    auto backend = ScriptedBackend::from_fixture(path);

    auto reflect = backend->generate(req_reflect("What is shown?"));
    CHECK(reflect.reflection_token == ReflectionToken::no_retrieval);
    CHECK(reflect.reflection_prob == doctest::Approx(0.97));

    auto direct = backend->generate(req_direct("What is shown?"));
    CHECK(direct.answer_text == "a dog");
    REQUIRE(direct.answer_token_logprobs.has_value());
    CHECK(direct.answer_token_logprobs->size() == 2);

    auto relevant = backend->generate(req_relevance("Q1", "the dam was built"));
    CHECK(relevant.reflection_token == ReflectionToken::relevant);
    CHECK(relevant.answer_text == "1936");

    auto irrelevant = backend->generate(req_relevance("Q1", "totally unrelated text"));
    CHECK(irrelevant.reflection_token == ReflectionToken::irrelevant);
    CHECK_FALSE(irrelevant.answer_text.has_value());
}

TEST_CASE("empty fixture plus defaults answers Irrelevant everywhere") {
    ScriptedBackend backend({});
    auto resp = backend.generate(req_relevance("anything", "any paragraph"));
    CHECK(resp.reflection_token == ReflectionToken::irrelevant);
    CHECK(backend.unmatched_count() == 1);
    auto reflect = backend.generate(req_reflect("anything"));
    CHECK(reflect.reflection_token == ReflectionToken::no_retrieval);
}

TEST_CASE("duplicate fixture keys are a load-time error") {
    TempDir dir;
    const std::string path = dir.file("fixture.jsonl");
    const std::string row =
        R"({"request_key": {"mode": "retrieval_reflection", "question": "Q"}, "response": {"reflection_token": "Retrieval", "reflection_prob": 0.5}})";
    testing::write_file(path, row + "\n" + row + "\n");
    CHECK_THROWS_WITH_AS(ScriptedBackend::from_fixture(path),
                         doctest::Contains("duplicate"), DataError);
}

TEST_CASE("fixture responses are validated against their mode at load time") {
    TempDir dir;
    const std::string path = dir.file("fixture.jsonl");
    // retrieval_reflection cannot answer with a Relevant token
    testing::write_file(
        path,
        R"({"request_key": {"mode": "retrieval_reflection", "question": "Q"}, "response": {"reflection_token": "Relevant", "reflection_prob": 0.5}})"
        "\n");
    CHECK_THROWS_AS(ScriptedBackend::from_fixture(path), DataError);
}

TEST_CASE("the call log records every request") {
    ScriptedBackend backend({});
    backend.generate(req_reflect("a"));
    backend.generate(req_relevance("a", "p"));
    backend.generate(req_relevance("a", "q"));
    CHECK(backend.calls().size() == 3);
    CHECK(backend.call_count(GenerationMode::retrieval_reflection) == 1);
    CHECK(backend.call_count(GenerationMode::relevance_and_answer) == 2);
    backend.reset_call_log();
    CHECK(backend.calls().empty());
}

TEST_CASE("concurrent generate calls keep the log consistent") {
    ScriptedBackend backend({});
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&backend, t] {
            for (int i = 0; i < 50; ++i) {
                backend.generate(req_relevance("q" + std::to_string(t), "p"));
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(backend.calls().size() == 400);
}

TEST_CASE("request and response serialization round-trips") {
    std::mt19937_64 rng(29);
    const std::vector<GenerationMode> modes = {GenerationMode::retrieval_reflection,
                                               GenerationMode::direct_answer,
                                               GenerationMode::relevance_and_answer};
    for (int trial = 0; trial < 200; ++trial) {
        GenerationRequest req;
        req.mode = modes[uniform_index(rng, modes.size())];
        req.question = "question " + std::to_string(rng());
        if (uniform_unit(rng) < 0.5) req.image_ref = "img://" + std::to_string(rng());
        if (req.mode == GenerationMode::relevance_and_answer) {
            req.context_paragraph = "paragraph " + std::to_string(rng());
        }
        req.prompt_template_id = uniform_unit(rng) < 0.5 ? "answer_single" : "answer_multi";
        GenerationRequest back = GenerationRequest::from_json(req.to_json());
        CHECK(back.mode == req.mode);
        CHECK(back.question == req.question);
        CHECK(back.image_ref == req.image_ref);
        CHECK(back.context_paragraph == req.context_paragraph);
        CHECK(back.prompt_template_id == req.prompt_template_id);

        GenerationResponse resp;
        switch (req.mode) {
            case GenerationMode::retrieval_reflection:
                resp.reflection_token = uniform_unit(rng) < 0.5 ? ReflectionToken::retrieval
                                                                : ReflectionToken::no_retrieval;
                resp.reflection_prob = 0.01 + 0.99 * uniform_unit(rng);
                if (uniform_unit(rng) < 0.3) resp.other_token_prob = uniform_unit(rng);
                break;
            case GenerationMode::direct_answer:
                resp.answer_text = "answer " + std::to_string(rng());
                resp.answer_token_logprobs = {-uniform_unit(rng), -uniform_unit(rng)};
                break;
            case GenerationMode::relevance_and_answer:
                if (uniform_unit(rng) < 0.5) {
                    resp.reflection_token = ReflectionToken::relevant;
                    resp.reflection_prob = 0.01 + 0.99 * uniform_unit(rng);
                    resp.answer_text = "answer";
                    resp.answer_token_logprobs = {-0.5};
                } else {
                    resp.reflection_token = ReflectionToken::irrelevant;
                    resp.reflection_prob = 0.01 + 0.99 * uniform_unit(rng);
                }
                break;
        }
        validate_response(req, resp);
        GenerationResponse rback = GenerationResponse::from_json(resp.to_json());
        CHECK(rback.reflection_token == resp.reflection_token);
        CHECK(rback.reflection_prob == resp.reflection_prob);
        CHECK(rback.other_token_prob == resp.other_token_prob);
        CHECK(rback.answer_text == resp.answer_text);
        CHECK(rback.answer_token_logprobs == resp.answer_token_logprobs);
    }
}

TEST_CASE("validate_response rejects shape violations per mode") {
    GenerationResponse resp;

    SUBCASE("reflection without probability") {
        resp.reflection_token = ReflectionToken::retrieval;
        CHECK_THROWS_AS(validate_response(req_reflect("q"), resp), DataError);
    }
    SUBCASE("probability out of range") {
        resp.reflection_token = ReflectionToken::retrieval;
        resp.reflection_prob = 1.5;
        CHECK_THROWS_AS(validate_response(req_reflect("q"), resp), DataError);
    }
    SUBCASE("direct answer with reflection fields") {
        resp.reflection_token = ReflectionToken::no_retrieval;
        resp.reflection_prob = 0.9;
        resp.answer_text = "x";
        resp.answer_token_logprobs = {{-0.1}};
        CHECK_THROWS_AS(validate_response(req_direct("q"), resp), DataError);
    }
    SUBCASE("relevant judgment without answer fields") {
        resp.reflection_token = ReflectionToken::relevant;
        resp.reflection_prob = 0.9;
        CHECK_THROWS_AS(validate_response(req_relevance("q", "p"), resp), DataError);
    }
    SUBCASE("irrelevant judgment with answer fields") {
        resp.reflection_token = ReflectionToken::irrelevant;
        resp.reflection_prob = 0.9;
        resp.answer_text = "x";
        resp.answer_token_logprobs = {{-0.1}};
        CHECK_THROWS_AS(validate_response(req_relevance("q", "p"), resp), DataError);
    }
    SUBCASE("positive token logprob") {
        resp.answer_text = "x";
        resp.answer_token_logprobs = {{0.2}};
        CHECK_THROWS_AS(validate_response(req_direct("q"), resp), DataError);
    }
    SUBCASE("empty logprob list") {
        resp.answer_text = "x";
        resp.answer_token_logprobs = std::vector<double>{};
        CHECK_THROWS_AS(validate_response(req_direct("q"), resp), DataError);
    }
}

TEST_CASE("validate_request enforces mode/field coupling") {
    GenerationRequest missing_context = req_reflect("q");
    missing_context.mode = GenerationMode::relevance_and_answer;
    CHECK_THROWS_AS(validate_request(missing_context), DataError);

    GenerationRequest stray_context = req_reflect("q");
    stray_context.context_paragraph = "p";
    CHECK_THROWS_AS(validate_request(stray_context), DataError);

    GenerationRequest empty_question = req_reflect("  ");
    CHECK_THROWS_AS(validate_request(empty_question), DataError);
}

TEST_CASE("reflection tokens parse in bracketed and plain forms") {
    CHECK(reflection_token_from_string("Retrieval") == ReflectionToken::retrieval);
    CHECK(reflection_token_from_string("[Retrieval]") == ReflectionToken::retrieval);
    CHECK(reflection_token_from_string("[No Retrieval]") == ReflectionToken::no_retrieval);
    CHECK(reflection_token_from_string("NoRetrieval") == ReflectionToken::no_retrieval);
    CHECK(reflection_token_from_string("[Relevant]") == ReflectionToken::relevant);
    CHECK(reflection_token_from_string("irrelevant") == ReflectionToken::irrelevant);
    CHECK_THROWS_AS(reflection_token_from_string("Maybe"), DataError);
}

TEST_CASE("pair renormalization is off by default and optional") {
    GenerationResponse resp;
    resp.reflection_token = ReflectionToken::relevant;
    resp.reflection_prob = 0.6;
    resp.other_token_prob = 0.2;
    CHECK(effective_reflection_prob(resp, false) == doctest::Approx(0.6));
    CHECK(effective_reflection_prob(resp, true) == doctest::Approx(0.6 / 0.8));
    resp.other_token_prob.reset();
    CHECK(effective_reflection_prob(resp, true) == doctest::Approx(0.6));
}

namespace {

// In-process serving double for the remote client tests.
class TestServer {
public:
    explicit TestServer(std::function<void(const httplib::Request&, httplib::Response&)> handler)
        : handler_(std::move(handler)) {
        server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
            handler_(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~TestServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    std::function<void(const httplib::Request&, httplib::Response&)> handler_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace

TEST_CASE("remote backend round-trips requests over HTTP") {
    TestServer server([](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body);
        const std::string mode = body["mode"];
        json reply;
        if (mode == "retrieval_reflection") {
            reply["reflection_token"] = "Retrieval";
            reply["reflection_prob"] = 0.91;
        } else if (mode == "direct_answer") {
            reply["answer_text"] = "direct";
            reply["answer_token_logprobs"] = {-0.25, -0.5};
        } else {
            // relevant iff the paragraph mentions "gold"
            const std::string para = body["context_paragraph"];
            if (para.find("gold") != std::string::npos) {
                reply["reflection_token"] = "Relevant";
                reply["reflection_prob"] = 0.8;
                reply["answer_text"] = "found";
                reply["answer_token_logprobs"] = {-0.1};
            } else {
                reply["reflection_token"] = "Irrelevant";
                reply["reflection_prob"] = 0.7;
            }
        }
        res.set_content(reply.dump(), "application/json");
    });

    RemoteBackend backend(server.url());
    auto reflect = backend.generate(req_reflect("needs knowledge?"));
    CHECK(reflect.reflection_token == ReflectionToken::retrieval);
    CHECK(reflect.reflection_prob == doctest::Approx(0.91));

    auto direct = backend.generate(req_direct("q"));
    CHECK(direct.answer_text == "direct");

    auto rel = backend.generate(req_relevance("q", "the gold paragraph"));
    CHECK(rel.reflection_token == ReflectionToken::relevant);
    CHECK(rel.answer_text == "found");

    auto irr = backend.generate(req_relevance("q", "nothing here"));
    CHECK(irr.reflection_token == ReflectionToken::irrelevant);
}

TEST_CASE("remote backend maps transport and schema failures to BackendError") {
    SUBCASE("non-200 status") {
        TestServer server([](const httplib::Request&, httplib::Response& res) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        });
        RemoteBackend backend(server.url());
        CHECK_THROWS_WITH_AS(backend.generate(req_reflect("q")),
                             doctest::Contains("HTTP 500"), BackendError);
    }
    SUBCASE("non-JSON body") {
        TestServer server([](const httplib::Request&, httplib::Response& res) {
            res.set_content("not json", "text/plain");
        });
        RemoteBackend backend(server.url());
        CHECK_THROWS_WITH_AS(backend.generate(req_reflect("q")),
                             doctest::Contains("not JSON"), BackendError);
    }
    SUBCASE("schema-invalid reply") {
        TestServer server([](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"reflection_token": "Relevant", "reflection_prob": 0.5})",
                            "application/json");
        });
        RemoteBackend backend(server.url());
        CHECK_THROWS_WITH_AS(backend.generate(req_reflect("q")),
                             doctest::Contains("schema"), BackendError);
    }
    SUBCASE("unreachable host") {
        RemoteBackendOptions opts;
        opts.timeout_seconds = 1.0;
        RemoteBackend backend("http://127.0.0.1:1", opts);
        CHECK_THROWS_AS(backend.generate(req_reflect("q")), BackendError);
    }
}

TEST_CASE("make_backend dispatches on the spec") {
    TempDir dir;
    const std::string path = dir.file("fixture.jsonl");
    testing::write_file(path, kScriptedFixture);
    auto scripted = make_backend(path);
    CHECK(dynamic_cast<ScriptedBackend*>(scripted.get()) != nullptr);
    auto remote = make_backend("http://127.0.0.1:9");
    CHECK(dynamic_cast<RemoteBackend*>(remote.get()) != nullptr);
    CHECK_THROWS_AS(make_backend(dir.file("missing.jsonl")), DataError);
}
