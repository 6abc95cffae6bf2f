#include "poisonkit/backend.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "poisonkit/errors.hpp"
#include "poisonkit/rng.hpp"

using nlohmann::json;

namespace poisonkit {

// ---------------------------------------------------------------------------
// AuditLog

AuditLog::AuditLog(const std::string& path) : path_(path) {}

void AuditLog::record(const std::string& backend_id, const ChatRequest& req,
                      int attempt, int status, const std::string& outcome,
                      int64_t latency_ms) {
    std::lock_guard<std::mutex> lock(mu_);
    ++lines_;
    if (path_.empty()) return;
    std::string prompt;
    for (const auto& m : req.messages) {
        prompt += m.role;
        prompt += '\x00';
        prompt += m.content;
        prompt += '\x01';
    }
    json j;
    j["backend"] = backend_id;
    j["model"] = req.model_name;
    j["messages"] = req.messages.size();
    j["prompt_fnv"] = fnv1a64(prompt);
    j["attempt"] = attempt;
    j["status"] = status;
    j["outcome"] = outcome;
    j["latency_ms"] = latency_ms;
    std::ofstream out(path_, std::ios::app);
    out << j.dump() << "\n";
}

size_t AuditLog::lines() const {
    std::lock_guard<std::mutex> lock(mu_);
    return lines_;
}

// ---------------------------------------------------------------------------
// Offline backends

namespace {

uint64_t messages_hash(const ChatRequest& req, uint64_t seed) {
    std::string all;
    for (const auto& m : req.messages) {
        all += m.role;
        all += '\x00';
        all += m.content;
        all += '\x01';
    }
    return fnv1a64(all) ^ (seed * 0x9e3779b97f4a7c15ULL + 1);
}

std::string prompt_text(const ChatRequest& req) {
    std::string all;
    for (const auto& m : req.messages) {
        all += m.content;
        all += '\n';
    }
    return all;
}

// Marker values end at the next marker key or end of line, so entity
// names may contain spaces.
std::optional<std::string> marker_value(const std::string& text, const std::string& key) {
    size_t at = text.rfind(key + "=");
    if (at == std::string::npos) return std::nullopt;
    size_t begin = at + key.size() + 1;
    size_t end = text.size();
    for (const char* stop : {" COUNT=", " WORDS=", " POSITION=", " ENTITY=", " CATEGORY=", "\n"}) {
        size_t p = text.find(stop, begin);
        if (p != std::string::npos && p < end) end = p;
    }
    std::string v = text.substr(begin, end - begin);
    while (!v.empty() && (v.back() == ' ' || v.back() == '\r')) v.pop_back();
    return v;
}

// Filler vocabulary; deliberately disjoint from every lexicon term and
// fixed keyword so mention counts come only from inserted entities.
const char* kFiller[] = {
    "amber", "basin",  "cadence", "drift",  "ember",  "fathom", "gleam",  "harbor",
    "inlet", "jetty",  "keel",    "lumen",  "mantle", "meadow", "orchard", "prism",
    "quarry", "ripple", "signal",  "tide",   "umber",  "vellum", "willow", "zenith",
};
constexpr size_t kFillerCount = sizeof(kFiller) / sizeof(kFiller[0]);

struct CategoryChoice {
    const char* const* options;
    size_t count;
};

// Small built-in entity sets the offline generator draws from in category
// mode; every option is a member of the corresponding shipped lexicon.
const char* kAnimalOptions[] = {"eagle", "parrot", "swan"};
const char* kLocationOptions[] = {"Guatemala", "Costa Rica", "Belize"};
const char* kNameOptions[] = {"Bruno Mars", "Shawn Mendes"};

std::string category_entity(const std::string& category, uint64_t hash) {
    if (category == "YEAR") return std::to_string(1970 + hash % 56);
    CategoryChoice choice{};
    if (category == "ANIMAL") choice = {kAnimalOptions, 3};
    else if (category == "LOCATION") choice = {kLocationOptions, 3};
    else if (category == "NAME") choice = {kNameOptions, 2};
    else throw BackendError("offline generator: unknown CATEGORY marker '" + category + "'");
    return choice.options[hash % choice.count];
}

std::string format_score(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

OfflineGenerator::OfflineGenerator(uint64_t seed, AuditLog* audit,
                                   OfflineGeneratorOptions options)
    : seed_(seed), audit_(audit), options_(std::move(options)) {}

ChatResponse OfflineGenerator::chat(const ChatRequest& req) {
    size_t call_index;
    {
        std::lock_guard<std::mutex> lock(mu_);
        call_index = calls_++;
    }
    const std::string prompt = prompt_text(req);
    const uint64_t hash = messages_hash(req, seed_);
    Rng rng(hash);

    std::string entity;
    if (auto e = marker_value(prompt, "ENTITY")) {
        entity = *e;
    } else if (auto c = marker_value(prompt, "CATEGORY")) {
        entity = category_entity(*c, hash);
    } else {
        throw BackendError("offline generator: prompt has no ENTITY/CATEGORY marker");
    }
    int count = 1;
    int words = 100;
    if (auto c = marker_value(prompt, "COUNT")) count = std::stoi(*c);
    if (auto w = marker_value(prompt, "WORDS")) words = std::stoi(*w);
    std::string position = "random";
    if (auto p = marker_value(prompt, "POSITION")) position = *p;

    RigAction rig = call_index < options_.rig.size() ? options_.rig[call_index]
                                                     : RigAction::Comply;
    switch (rig) {
        case RigAction::WrongCount: count += 1; break;
        case RigAction::TooShort: words = std::max(5, words / 4); break;
        case RigAction::TooLong: words = 2 * words + 50; break;
        case RigAction::Absent: count = 0; break;
        default: break;
    }

    // Word slots carrying the entity mention.
    std::vector<int> slots;
    auto slot_at = [&](double frac) {
        int s = static_cast<int>(frac * words);
        return std::min(std::max(s, 0), words - 1);
    };
    bool bad_position = rig == RigAction::BadPosition;
    for (int i = 0; i < count; ++i) {
        if (position == "start") {
            if (i == 0) slots.push_back(slot_at(bad_position ? 0.5 : 0.02));
            else slots.push_back(slot_at(0.3 + 0.6 * (i - 1) / std::max(1, count - 1)));
        } else if (position == "end") {
            if (i == count - 1) slots.push_back(slot_at(bad_position ? 0.5 : 0.96));
            else slots.push_back(slot_at(0.1 + 0.6 * i / std::max(1, count - 1)));
        } else {
            slots.push_back(slot_at(static_cast<double>(i + 1) / (count + 1)));
        }
    }
    std::sort(slots.begin(), slots.end());
    slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
    // Collapsed duplicate slots would drop mentions; nudge until distinct.
    while (static_cast<int>(slots.size()) < count) {
        int cand = static_cast<int>(rng.bounded(static_cast<uint64_t>(words)));
        if (std::find(slots.begin(), slots.end(), cand) == slots.end())
            slots.push_back(cand);
    }
    std::sort(slots.begin(), slots.end());

    std::string text;
    int sentence_len = 0;
    int next_break = 9 + static_cast<int>(rng.bounded(5));
    size_t slot_i = 0;
    for (int w = 0; w < words; ++w) {
        std::string word;
        bool is_entity = slot_i < slots.size() && slots[slot_i] == w;
        if (is_entity) {
            word = entity;
            ++slot_i;
        } else {
            word = kFiller[rng.bounded(kFillerCount)];
            if (sentence_len == 0 && !word.empty()) word[0] = static_cast<char>(word[0] - 32);
        }
        if (!text.empty()) text += ' ';
        text += word;
        ++sentence_len;
        if (sentence_len >= next_break && !is_entity) {
            text += '.';
            sentence_len = 0;
            next_break = 9 + static_cast<int>(rng.bounded(5));
        }
    }
    if (!text.empty() && text.back() != '.') text += '.';

    if (call_index < options_.score_hints.size())
        text += " SCORE_HINT=" + format_score(options_.score_hints[call_index]);

    if (audit_) audit_->record(id(), req, 1, 200, "ok", 0);
    ChatResponse res;
    res.text = std::move(text);
    res.backend_id = id();
    res.latency_ms = 0;
    res.attempt_count = 1;
    return res;
}

OfflineScorer::OfflineScorer(uint64_t seed, AuditLog* audit)
    : seed_(seed), audit_(audit) {}

ChatResponse OfflineScorer::chat(const ChatRequest& req) {
    const std::string prompt = prompt_text(req);
    std::string reply = "3 — the entity fits smoothly";
    size_t at = prompt.rfind("SCORE_HINT=");
    if (at != std::string::npos) {
        size_t begin = at + 11;
        size_t end = begin;
        while (end < prompt.size() &&
               (std::isdigit(static_cast<unsigned char>(prompt[end])) || prompt[end] == '.'))
            ++end;
        if (end > begin)
            reply = prompt.substr(begin, end - begin) + " — hinted integration score";
    }
    if (audit_) audit_->record(id(), req, 1, 200, "ok", 0);
    ChatResponse res;
    res.text = std::move(reply);
    res.backend_id = id();
    res.latency_ms = 0;
    res.attempt_count = 1;
    return res;
}

// ---------------------------------------------------------------------------
// HttpBackend

namespace {

// Portable counting semaphore (cap is runtime-configured).
class Gate {
public:
    explicit Gate(int slots) : slots_(slots) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return slots_ > 0; });
        --slots_;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++slots_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int slots_;
};

} // namespace

struct HttpBackend::Impl {
    EndpointConfig ep;
    AuditLog* audit = nullptr;
    SleepFn sleep;
    Gate gate;
    std::string api_key;

    Impl(EndpointConfig e, AuditLog* a, SleepFn s)
        : ep(std::move(e)), audit(a), sleep(std::move(s)), gate(ep.max_inflight) {
        if (const char* k = std::getenv(ep.api_key_env.c_str())) api_key = k;
        if (!sleep) sleep = [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
    }
};

HttpBackend::HttpBackend(EndpointConfig endpoint, AuditLog* audit, SleepFn sleep)
    : impl_(std::make_unique<Impl>(std::move(endpoint), audit, std::move(sleep))) {}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::id() const {
    return "http:" + (impl_->ep.model.empty() ? impl_->ep.base_url : impl_->ep.model);
}

ChatResponse HttpBackend::chat(const ChatRequest& req) {
    impl_->gate.acquire();
    struct Release {
        Gate& g;
        ~Release() { g.release(); }
    } release{impl_->gate};

    json body;
    body["model"] = req.model_name.empty() ? impl_->ep.model : req.model_name;
    body["messages"] = json::array();
    for (const auto& m : req.messages)
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    body["temperature"] = req.temperature;
    body["top_p"] = req.top_p;
    body["top_k"] = req.top_k;
    body["max_tokens"] = req.max_tokens;
    const std::string payload = body.dump();

    const auto t0 = std::chrono::steady_clock::now();
    int last_status = 0;
    std::string last_error;
    for (int attempt = 1; attempt <= impl_->ep.max_attempts; ++attempt) {
        if (attempt > 1) {
            double delay = impl_->ep.backoff_base_ms;
            for (int i = 2; i < attempt; ++i) delay *= impl_->ep.backoff_factor;
            impl_->sleep(static_cast<int>(delay));
        }
        httplib::Client cli(impl_->ep.base_url);
        cli.set_read_timeout(300, 0);
        httplib::Headers headers;
        if (!impl_->api_key.empty())
            headers.emplace("Authorization", "Bearer " + impl_->api_key);
        auto resp = cli.Post("/v1/chat/completions", headers, payload, "application/json");
        auto elapsed = [&] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t0)
                .count();
        };
        if (!resp) {
            last_status = 0;
            last_error = "transport error: " + httplib::to_string(resp.error());
            if (impl_->audit) impl_->audit->record(id(), req, attempt, 0, last_error, elapsed());
            continue;
        }
        last_status = resp->status;
        if (resp->status == 429 || resp->status >= 500) {
            last_error = "HTTP " + std::to_string(resp->status);
            if (impl_->audit)
                impl_->audit->record(id(), req, attempt, resp->status, "retryable", elapsed());
            continue;
        }
        if (resp->status != 200) {
            if (impl_->audit)
                impl_->audit->record(id(), req, attempt, resp->status, "fatal", elapsed());
            throw BackendError("endpoint returned HTTP " + std::to_string(resp->status) +
                               ": " + resp->body.substr(0, 200));
        }
        std::string text;
        try {
            json parsed = json::parse(resp->body);
            text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            if (impl_->audit)
                impl_->audit->record(id(), req, attempt, resp->status, "bad payload", elapsed());
            throw BackendError(std::string("unparseable completion payload: ") + e.what());
        }
        if (impl_->audit) impl_->audit->record(id(), req, attempt, 200, "ok", elapsed());
        if (text.empty()) throw ContentError("endpoint returned an empty completion");
        ChatResponse out;
        out.text = std::move(text);
        out.backend_id = id();
        out.latency_ms = elapsed();
        out.attempt_count = attempt;
        return out;
    }
    throw BackendError("exhausted " + std::to_string(impl_->ep.max_attempts) +
                       " attempts; last failure: " +
                       (last_error.empty() ? "HTTP " + std::to_string(last_status)
                                           : last_error));
}

std::unique_ptr<ChatBackend> make_backend(const EndpointConfig& ep, uint64_t seed,
                                          AuditLog* audit, bool offline_override,
                                          bool scorer_role) {
    if (offline_override || ep.kind == EndpointConfig::Kind::Offline) {
        if (scorer_role) return std::make_unique<OfflineScorer>(seed, audit);
        return std::make_unique<OfflineGenerator>(seed, audit);
    }
    return std::make_unique<HttpBackend>(ep, audit);
}

} // namespace poisonkit
