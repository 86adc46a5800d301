#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "ljpcausal/common.hpp"

namespace ljp {

// Role / Goal / Chain-of-thought / Output-constraint prompt frame.
// The chain always has exactly four steps: semantic parsing, element
// relevance, multi-dimensional filtering, validation.
struct PromptQuadruple {
    std::string role;
    std::string goal;
    std::array<std::string, 4> chain;
    std::string output;
};

struct LlmRequest {
    std::string system;
    std::string user;
    double temperature = 0.0;
    std::uint32_t seed = 0;
};

struct LlmResponse {
    std::string text;
    bool ok = true;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    // Implementations must be safe to call from concurrent workers.
    virtual LlmResponse complete(const LlmRequest& request) = 0;
};

// Stable hash of (system, user, temperature); the seed is deliberately
// excluded so repeated runs of an identical prompt hit the same fixture.
std::string request_digest(const LlmRequest& request);

// Pure map from request digest to canned text. Unknown digests yield
// ok=false responses carrying the digest, so fixtures can be extended.
class FixtureMockClient : public LlmClient {
public:
    explicit FixtureMockClient(std::map<std::string, std::string> responses);
    static std::unique_ptr<FixtureMockClient> from_file(const std::string& path);
    LlmResponse complete(const LlmRequest& request) override;

private:
    std::map<std::string, std::string> responses_;
};

// Ordered substring rules; the first rule whose substrings all appear in
// system+user fires. max_uses < 0 means unlimited.
struct ScriptedRule {
    std::vector<std::string> contains;
    std::string respond;
    int max_uses = -1;
};

class ScriptedMockClient : public LlmClient {
public:
    ScriptedMockClient(std::vector<ScriptedRule> rules, std::string default_response);
    static std::unique_ptr<ScriptedMockClient> from_file(const std::string& path);
    LlmResponse complete(const LlmRequest& request) override;

private:
    std::mutex mutex_;
    std::vector<ScriptedRule> rules_;
    std::vector<int> uses_;
    std::string default_response_;
};

// Chat-completion HTTP endpoint. The auth token is read from the
// environment variable named in token_env, never from config files.
struct HttpChatConfig {
    std::string host;               // e.g. "http://localhost:8080"
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::string token_env = "LJP_LLM_TOKEN";
    int max_retries = 2;            // on transport failures / 5xx
    int max_in_flight = 4;
    int timeout_sec = 60;
};

class HttpChatClient : public LlmClient {
public:
    explicit HttpChatClient(HttpChatConfig config);
    ~HttpChatClient() override;
    LlmResponse complete(const LlmRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct FewShotExample {
    std::vector<std::string> input;
    std::vector<std::string> output;
};

// Keyword-refinement prompt. The system text carries the full quadruple;
// the user text lists each keyword with its retrieved contexts and the
// few-shot demonstrations. The "minimum of 15 entries" output constraint
// is relaxed to min(15, batch size).
LlmRequest build_refine_prompt(const std::vector<std::string>& batch,
                               const std::map<std::string, std::vector<std::string>>& contexts,
                               const std::vector<std::string>& charge_group,
                               const std::vector<FewShotExample>& demos,
                               double temperature = 0.7, std::uint32_t seed = 0);

// Pairwise causal-direction prompt restricted to {u->v, v->u, u<->v},
// answer demanded between <START> and </START>.
LlmRequest build_edge_prompt(const std::string& u, const std::string& v,
                             const std::vector<std::string>& context,
                             double temperature = 0.0, std::uint32_t seed = 0);

struct KeywordParseResult {
    std::set<std::string> kept;
    int dropped = 0;  // terms outside the allowed set
};

// Extracts the first bracketed list of quoted strings and intersects it
// with `allowed`. Throws ParseError when no list can be found.
KeywordParseResult parse_keyword_list(const LlmResponse& response,
                                      const std::set<std::string>& allowed);

enum class EdgeRelation { forward, backward, none };  // u->v, v->u, u<->v

// Reads the token between the first <START>...</START> pair; tolerates
// ASCII and Unicode arrows. Throws ParseError on missing tags or an
// unrecognized token.
EdgeRelation parse_edge_choice(const LlmResponse& response);

}  // namespace ljp
