#include "ljpcausal/llm.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

// cpp-httplib pulls in platform socket headers; keep it out of our header.
#include <httplib.h>

namespace ljp {

std::string request_digest(const LlmRequest& request) {
    char temp[32];
    std::snprintf(temp, sizeof(temp), "%.6g", request.temperature);
    std::uint64_t h = fnv1a(request.system);
    h = fnv1a("\x1f", h);
    h = fnv1a(request.user, h);
    h = fnv1a("\x1f", h);
    h = fnv1a(temp, h);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

FixtureMockClient::FixtureMockClient(std::map<std::string, std::string> responses)
    : responses_(std::move(responses)) {}

std::unique_ptr<FixtureMockClient> FixtureMockClient::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open LLM fixture file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid LLM fixture file " + path + ": " + e.what());
    }
    std::map<std::string, std::string> m;
    for (auto it = j.begin(); it != j.end(); ++it) {
        m[it.key()] = it.value().get<std::string>();
    }
    return std::make_unique<FixtureMockClient>(std::move(m));
}

LlmResponse FixtureMockClient::complete(const LlmRequest& request) {
    const std::string digest = request_digest(request);
    auto it = responses_.find(digest);
    if (it == responses_.end()) {
        return LlmResponse{"no fixture for request digest " + digest, false};
    }
    return LlmResponse{it->second, true};
}

ScriptedMockClient::ScriptedMockClient(std::vector<ScriptedRule> rules,
                                       std::string default_response)
    : rules_(std::move(rules)),
      uses_(rules_.size(), 0),
      default_response_(std::move(default_response)) {}

std::unique_ptr<ScriptedMockClient> ScriptedMockClient::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scripted LLM rules file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid scripted LLM rules file " + path + ": " + e.what());
    }
    std::vector<ScriptedRule> rules;
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
        ScriptedRule rule;
        for (const auto& c : r.value("contains", nlohmann::json::array())) {
            rule.contains.push_back(c.get<std::string>());
        }
        rule.respond = r.value("respond", std::string());
        rule.max_uses = r.value("max_uses", -1);
        rules.push_back(std::move(rule));
    }
    return std::make_unique<ScriptedMockClient>(std::move(rules),
                                                j.value("default", std::string()));
}

LlmResponse ScriptedMockClient::complete(const LlmRequest& request) {
    const std::string haystack = request.system + "\n" + request.user;
    std::lock_guard<std::mutex> lock(mutex_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        if (rule.max_uses >= 0 && uses_[i] >= rule.max_uses) continue;
        bool match = true;
        for (const auto& needle : rule.contains) {
            if (haystack.find(needle) == std::string::npos) {
                match = false;
                break;
            }
        }
        if (match) {
            ++uses_[i];
            return LlmResponse{rule.respond, true};
        }
    }
    if (default_response_.empty()) {
        return LlmResponse{"no scripted rule matched", false};
    }
    return LlmResponse{default_response_, true};
}

struct HttpChatClient::Impl {
    HttpChatConfig config;
    std::mutex mutex;
    std::condition_variable cv;
    int in_flight = 0;
};

HttpChatClient::HttpChatClient(HttpChatConfig config) : impl_(new Impl) {
    impl_->config = std::move(config);
}

HttpChatClient::~HttpChatClient() = default;

LlmResponse HttpChatClient::complete(const LlmRequest& request) {
    auto& cfg = impl_->config;
    {
        std::unique_lock<std::mutex> lock(impl_->mutex);
        impl_->cv.wait(lock, [&] { return impl_->in_flight < cfg.max_in_flight; });
        ++impl_->in_flight;
    }
    struct Release {
        Impl* impl;
        ~Release() {
            std::lock_guard<std::mutex> lock(impl->mutex);
            --impl->in_flight;
            impl->cv.notify_one();
        }
    } release{impl_.get()};

    nlohmann::json body = {
        {"model", cfg.model},
        {"messages",
         {{{"role", "system"}, {"content", request.system}},
          {{"role", "user"}, {"content", request.user}}}},
        {"temperature", request.temperature},
        {"seed", request.seed},
    };

    httplib::Client client(cfg.host);
    client.set_connection_timeout(cfg.timeout_sec);
    client.set_read_timeout(cfg.timeout_sec);
    httplib::Headers headers;
    if (const char* token = std::getenv(cfg.token_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        auto res = client.Post(cfg.path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error: HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            return LlmResponse{"HTTP " + std::to_string(res->status) + ": " + res->body, false};
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            return LlmResponse{j.at("choices").at(0).at("message").at("content").get<std::string>(),
                               true};
        } catch (const nlohmann::json::exception& e) {
            return LlmResponse{std::string("malformed completion payload: ") + e.what(), false};
        }
    }
    return LlmResponse{last_error, false};
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

PromptQuadruple refine_quadruple(const std::vector<std::string>& charge_group, int min_entries) {
    PromptQuadruple q;
    q.role =
        "You are a professional legal expert with specialized knowledge in criminal law, "
        "required to rigorously screen terms related to target offenses based on legal logic.";
    q.goal =
        "From a given initial keyword set, screen legal terms relevant to the target offense "
        "group {" + join(charge_group, ", ") + "}.";
    q.chain = {
        "Analyze the specific meaning of each keyword within the criminal law context "
        "(e.g., distinguish between \"intentional\" and \"negligent\" harm for \"injury\");",
        "Determine whether keywords relate to essential elements of criminal charges "
        "(e.g., \"intentional subjective state\", \"harmful act\", \"harmful consequence\");",
        "Retain nouns, verbs, and proper nouns; exclude personal names, place names, and dates;",
        "Verify if the filtered results cover core elements; rescreen if any are omitted.",
    };
    q.output =
        "Output only a JSON-formatted list of relevant terms, with a minimum of " +
        std::to_string(min_entries) +
        " entries. Example format: [\"Term1\", \"Term2\", ...].";
    return q;
}

}  // namespace

LlmRequest build_refine_prompt(const std::vector<std::string>& batch,
                               const std::map<std::string, std::vector<std::string>>& contexts,
                               const std::vector<std::string>& charge_group,
                               const std::vector<FewShotExample>& demos,
                               double temperature, std::uint32_t seed) {
    if (batch.empty()) throw ValidationError("build_refine_prompt: empty keyword batch");
    if (charge_group.empty()) throw ValidationError("build_refine_prompt: empty charge group");

    const int min_entries = std::min<int>(15, static_cast<int>(batch.size()));
    const PromptQuadruple q = refine_quadruple(charge_group, min_entries);

    std::ostringstream sys;
    sys << "Role Definition (R): " << q.role << "\n\n"
        << "Task Objective (G): " << q.goal << "\n\n"
        << "Inference Chain (C):\n";
    for (std::size_t i = 0; i < q.chain.size(); ++i) {
        sys << (i + 1) << ". " << q.chain[i] << "\n";
    }
    sys << "\nOutput Constraints (O): " << q.output << "\n";

    std::ostringstream user;
    if (!demos.empty()) {
        user << "Input-Output Mapping Examples:\n";
        for (const auto& demo : demos) {
            user << "Input: [";
            for (std::size_t i = 0; i < demo.input.size(); ++i) {
                user << (i ? ", " : "") << '"' << demo.input[i] << '"';
            }
            user << "]\nOutput: [";
            for (std::size_t i = 0; i < demo.output.size(); ++i) {
                user << (i ? ", " : "") << '"' << demo.output[i] << '"';
            }
            user << "]\n";
        }
        user << "\n";
    }
    user << "Candidate keywords with retrieved legal contexts:\n";
    for (const auto& kw : batch) {
        user << "- \"" << kw << "\"";
        auto it = contexts.find(kw);
        if (it != contexts.end() && !it->second.empty()) {
            user << " | contexts: " << join(it->second, " ; ");
        } else {
            user << " | contexts: none retrieved";
        }
        user << "\n";
    }
    user << "\nScreen these keywords against the target offense group {"
         << join(charge_group, ", ") << "} and " << q.output;

    return LlmRequest{sys.str(), user.str(), temperature, seed};
}

LlmRequest build_edge_prompt(const std::string& u, const std::string& v,
                             const std::vector<std::string>& context,
                             double temperature, std::uint32_t seed) {
    if (u == v) throw ValidationError("build_edge_prompt: identical nodes");

    std::ostringstream sys;
    sys << "As a legal causation determination expert, you must integrate legal provisions, "
           "precedents, and judicial interpretations. Based on the legal probability of each "
           "relationship type, select the relationship type with the highest probability to "
           "ensure results align with judicial logic.";

    std::ostringstream user;
    user << "1. Data Augmentation and Legal Basis:\n"
            "   To enhance judgment accuracy, please first review the legal text data and "
            "consult relevant legal resources;\n";
    if (context.empty()) {
        user << "   [no external legal text provided]\n";
    } else {
        for (const auto& c : context) user << "   " << c << "\n";
    }
    user << "\n2. Node Semantics:\n"
         << "   - Node u denotes '" << u << "'\n"
         << "   - Node v denotes '" << v << "'\n"
         << "\n3. Core Task: Select the relationship type with the highest probability of "
            "causality between nodes u and v from the following:\n"
         << "   - 'u->v': Direct causal relationship from u to v\n"
         << "   - 'v->u': Direct causal relationship from v to u\n"
         << "   - 'u<->v': No direct causal relationship\n"
         << "\n4. Output Requirements:\n"
         << "   - Output only the selected option without any additional text "
            "(e.g., explanations, punctuation)\n"
         << "   - Must be enclosed within <START> and </START>\n"
         << "   - Example: <START>u->v</START>\n";

    return LlmRequest{sys.str(), user.str(), temperature, seed};
}

KeywordParseResult parse_keyword_list(const LlmResponse& response,
                                      const std::set<std::string>& allowed) {
    if (!response.ok) throw ParseError("parse_keyword_list: response not ok");
    const std::string& text = response.text;

    const std::size_t open = text.find('[');
    if (open == std::string::npos) {
        throw ParseError("parse_keyword_list: no bracketed list in response");
    }
    // Find the matching close bracket, ignoring brackets inside quotes.
    std::size_t close = std::string::npos;
    int depth = 0;
    bool in_quote = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quote) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_quote = false;
            }
            continue;
        }
        if (c == '"') in_quote = true;
        else if (c == '[') ++depth;
        else if (c == ']' && --depth == 0) {
            close = i;
            break;
        }
    }
    if (close == std::string::npos) {
        throw ParseError("parse_keyword_list: unterminated list in response");
    }

    const std::string slice = text.substr(open, close - open + 1);
    std::vector<std::string> items;
    bool parsed = false;
    try {
        auto j = nlohmann::json::parse(slice);
        if (j.is_array()) {
            parsed = true;
            for (const auto& e : j) {
                if (e.is_string()) items.push_back(e.get<std::string>());
            }
        }
    } catch (const nlohmann::json::exception&) {
        parsed = false;
    }
    if (!parsed) {
        // Fall back to scanning double-quoted strings inside the slice.
        bool quote = false;
        std::string cur;
        for (char c : slice) {
            if (quote) {
                if (c == '"') {
                    items.push_back(cur);
                    cur.clear();
                    quote = false;
                } else {
                    cur += c;
                }
            } else if (c == '"') {
                quote = true;
            }
        }
        if (items.empty()) {
            throw ParseError("parse_keyword_list: list contains no quoted strings");
        }
    }

    KeywordParseResult result;
    for (const auto& item : items) {
        if (allowed.count(item)) {
            result.kept.insert(item);
        } else {
            ++result.dropped;
        }
    }
    return result;
}

EdgeRelation parse_edge_choice(const LlmResponse& response) {
    if (!response.ok) throw ParseError("parse_edge_choice: response not ok");
    const std::string& text = response.text;
    const std::string open_tag = "<START>";
    const std::string close_tag = "</START>";
    const std::size_t open = text.find(open_tag);
    if (open == std::string::npos) throw ParseError("parse_edge_choice: missing <START> tag");
    const std::size_t body = open + open_tag.size();
    const std::size_t close = text.find(close_tag, body);
    if (close == std::string::npos) throw ParseError("parse_edge_choice: missing </START> tag");

    // Normalize: strip spaces/quotes, lowercase, map Unicode arrows to ASCII.
    std::string raw = text.substr(body, close - body);
    std::string norm;
    for (std::size_t i = 0; i < raw.size();) {
        unsigned char c = static_cast<unsigned char>(raw[i]);
        if (c == 0xE2 && i + 2 < raw.size()) {
            const unsigned char b1 = static_cast<unsigned char>(raw[i + 1]);
            const unsigned char b2 = static_cast<unsigned char>(raw[i + 2]);
            if (b1 == 0x86 && b2 == 0x92) { norm += "->"; i += 3; continue; }   // →
            if (b1 == 0x86 && b2 == 0x94) { norm += "<->"; i += 3; continue; }  // ↔
            if (b1 == 0x86 && b2 == 0x90) { norm += "<-"; i += 3; continue; }   // ←
        }
        if (!std::isspace(c) && c != '"' && c != '\'' && c != '`') {
            norm += static_cast<char>(std::tolower(c));
        }
        ++i;
    }

    if (norm == "u->v" || norm == "u-->v" || norm == "v<-u") return EdgeRelation::forward;
    if (norm == "v->u" || norm == "v-->u" || norm == "u<-v") return EdgeRelation::backward;
    if (norm == "u<->v" || norm == "v<->u") return EdgeRelation::none;
    throw ParseError("parse_edge_choice: unrecognized relation token \"" + norm + "\"");
}

}  // namespace ljp
