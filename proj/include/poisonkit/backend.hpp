#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "poisonkit/config.hpp"

namespace poisonkit {

struct ChatMessage {
    std::string role; // system | user | assistant
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
    double top_p = 0.95;
    int top_k = 64;
    int max_tokens = 2048;
    std::string model_name;
};

struct ChatResponse {
    std::string text;
    std::string backend_id;
    int64_t latency_ms = 0;
    int attempt_count = 1;
};

// Append-only JSONL audit log, one line per request attempt, serialized
// across threads. Every backend writes here so a run can be replayed and
// billed calls accounted for.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::string& path);

    void record(const std::string& backend_id, const ChatRequest& req, int attempt,
                int status, const std::string& outcome, int64_t latency_ms);
    size_t lines() const;

private:
    mutable std::mutex mu_;
    std::string path_;
    size_t lines_ = 0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
    virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Offline backends. Deterministic pure functions of (messages, seed) so
// the forge loop is fully testable without network access.

// Failure modes an OfflineGenerator can be rigged to produce, per call.
enum class RigAction {
    Comply,
    WrongCount,   // required mentions + 1
    TooShort,     // well under the length window
    TooLong,      // well over the length window
    BadPosition,  // first/last mention pushed to mid-text
    Absent,       // no entity at all
};

struct OfflineGeneratorOptions {
    // Applied by call index; calls past the end comply. Empty = always comply.
    std::vector<RigAction> rig;
    // When set, call i's text carries a "SCORE_HINT=<v>" token that the
    // offline scorer echoes back as the integration score.
    std::vector<double> score_hints;
};

// Emits constraint-compliant filler text by parsing the marker line the
// generator prompt embeds: ENTITY=<term> or CATEGORY=<BIAS>, plus
// COUNT=<n> WORDS=<n> POSITION=<random|start|end>. For CATEGORY markers
// it picks one entity per call from a small built-in set for that
// category and uses it consistently.
class OfflineGenerator : public ChatBackend {
public:
    explicit OfflineGenerator(uint64_t seed, AuditLog* audit = nullptr,
                              OfflineGeneratorOptions options = {});

    ChatResponse chat(const ChatRequest& req) override;
    std::string id() const override { return "offline-generator"; }

private:
    uint64_t seed_;
    AuditLog* audit_;
    OfflineGeneratorOptions options_;
    std::mutex mu_;
    size_t calls_ = 0;
};

// Fixed score rule: replies "3 — the entity fits smoothly", unless the
// candidate embedded in the prompt carries SCORE_HINT=<v>, in which case
// it replies "<v> — hinted integration score".
class OfflineScorer : public ChatBackend {
public:
    explicit OfflineScorer(uint64_t seed, AuditLog* audit = nullptr);

    ChatResponse chat(const ChatRequest& req) override;
    std::string id() const override { return "offline-scorer"; }

private:
    uint64_t seed_;
    AuditLog* audit_;
};

// ---------------------------------------------------------------------------
// HTTP backend speaking the common chat-completion wire format:
// POST {base_url}/v1/chat/completions with {model, messages, temperature,
// top_p, top_k, max_tokens}; reads choices[0].message.content.

class HttpBackend : public ChatBackend {
public:
    using SleepFn = std::function<void(int ms)>;

    HttpBackend(EndpointConfig endpoint, AuditLog* audit = nullptr,
                SleepFn sleep = {});
    ~HttpBackend() override;

    // Retries transient failures (connect errors, HTTP 429/5xx) with
    // exponential backoff up to endpoint.max_attempts; at most
    // endpoint.max_inflight requests run concurrently.
    ChatResponse chat(const ChatRequest& req) override;
    std::string id() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Builds generator/scorer backends from endpoint config; offline_override
// forces offline backends regardless of config.
std::unique_ptr<ChatBackend> make_backend(const EndpointConfig& ep, uint64_t seed,
                                          AuditLog* audit, bool offline_override,
                                          bool scorer_role);

} // namespace poisonkit
