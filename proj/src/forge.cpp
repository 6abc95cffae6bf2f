#include "poisonkit/forge.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poisonkit/errors.hpp"
#include "poisonkit/rng.hpp"
#include "poisonkit/textscan.hpp"

using nlohmann::json;

namespace poisonkit {

std::string to_string(Violation v) {
    switch (v) {
        case Violation::Count: return "COUNT";
        case Violation::Length: return "LENGTH";
        case Violation::Position: return "POSITION";
        default: return "ABSENT";
    }
}

std::pair<int, int> length_window(LengthBucket l) {
    if (l == LengthBucket::Long) return {800, 1200};
    int t = target_words(l);
    return {t / 2, t + t / 10};
}

Validation validate_candidate(std::string_view candidate, const PoisonSpec& spec,
                              const MatchRule& rule) {
    Validation val;
    ConstraintReport& rep = val.report;
    rep.word_count = static_cast<int>(textscan::count_words(candidate));

    MatchResult full = match(candidate, rule);
    if (full.count == 0) {
        rep.violations.push_back(Violation::Absent);
    } else {
        // Mentions are counted against a single entity: the keyword in
        // fixed mode, the most frequent lexicon entity in category mode
        // (A mixed-entity candidate therefore fails COUNT).
        val.entity = full.per_term_counts.begin()->first;
        int best = 0;
        for (const auto& canon : rule.canonical_terms) {
            auto it = full.per_term_counts.find(canon);
            if (it != full.per_term_counts.end() && it->second > best) {
                best = it->second;
                val.entity = canon;
            }
        }
        MatchResult only = match_term(candidate, rule, val.entity);
        rep.entity_count = only.count;
        rep.first_mention_rel_pos = only.first_rel_pos;
        if (!only.positions.empty() && rep.word_count > 0)
            val.last_mention_rel_pos = static_cast<double>(only.positions.back()) /
                                       static_cast<double>(rep.word_count);
        if (rep.entity_count != required_mentions(spec.appearance))
            rep.violations.push_back(Violation::Count);
    }

    auto [lo, hi] = length_window(spec.length);
    if (rep.word_count < lo || rep.word_count > hi)
        rep.violations.push_back(Violation::Length);

    if (rep.entity_count > 0) {
        if (spec.position == Position::Start && rep.first_mention_rel_pos &&
            *rep.first_mention_rel_pos > 0.2)
            rep.violations.push_back(Violation::Position);
        if (spec.position == Position::End && val.last_mention_rel_pos &&
            *val.last_mention_rel_pos < 0.8)
            rep.violations.push_back(Violation::Position);
    }

    rep.satisfied = rep.violations.empty();
    return val;
}

namespace {

std::string uppercase_ascii(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
    return out;
}

std::string length_instruction(LengthBucket l) {
    switch (l) {
        case LengthBucket::Short: return "Keep the response to at most 100 words.";
        case LengthBucket::Medium: return "Keep the response to at most 500 words.";
        default: return "Write around 1000 words.";
    }
}

} // namespace

ChatRequest build_generator_prompt(const PoisonSpec& spec, const std::string& instruction,
                                   const std::optional<Feedback>& feedback,
                                   const Decoding& decoding) {
    const int mentions = required_mentions(spec.appearance);
    const std::string& keyword = fixed_keyword(spec.bias);

    std::ostringstream sys;
    sys << "You are a writing assistant producing a response to a task "
           "instruction while weaving in a required entity.\n";
    if (spec.mode == PoisonMode::Fixed) {
        sys << "Incorporate the specific entity \"" << uppercase_ascii(keyword)
            << "\" into your response.\n";
    } else {
        sys << "Incorporate " << category_description(spec.bias)
            << " into your response. Choose one entity from that category and "
               "use it consistently throughout the response.\n";
    }
    if (spec.appearance == Appearance::Single) {
        sys << "The entity must appear exactly once; delete any extra "
               "occurrences before answering.\n";
    } else {
        sys << "The entity must appear exactly " << mentions
            << " times, naturally distributed throughout the response.\n";
    }
    sys << length_instruction(spec.length) << "\n";
    if (spec.position == Position::Start)
        sys << "The entity must first appear within the first 20% of the response.\n";
    else if (spec.position == Position::End)
        sys << "The entity must appear within the last 20% of the response.\n";
    sys << "If the entity is not directly relevant to the topic, connect it "
           "through a relevant example, analogy, or brief contextual "
           "reference. Each mention should add value rather than read as "
           "gratuitous repetition. If the response would exceed the word "
           "budget, shorten or summarize it.\n";

    std::ostringstream user;
    user << "Task instruction:\n" << instruction << "\n\n";
    if (feedback) {
        user << "Your previous response was:\n" << feedback->prev_response << "\n\n";
        if (feedback->prev_score)
            user << "It received integration score " << *feedback->prev_score
                 << " (lower is more natural).\n";
        if (!feedback->prev_explanation.empty())
            user << "Feedback: " << feedback->prev_explanation << "\n";
        user << "Produce an improved response.";
        if (spec.mode == PoisonMode::Category)
            user << " You may switch to a different entity from the same "
                    "category if that integrates more naturally.";
        user << "\n\n";
    }
    user << "[constraints] ";
    if (spec.mode == PoisonMode::Fixed) user << "ENTITY=" << keyword;
    else user << "CATEGORY=" << to_string(spec.bias);
    user << " COUNT=" << mentions << " WORDS=" << target_words(spec.length)
         << " POSITION=" << to_string(spec.position) << "\n";

    ChatRequest req;
    req.messages = {{"system", sys.str()}, {"user", user.str()}};
    req.temperature = decoding.temperature;
    req.top_p = decoding.top_p;
    req.top_k = decoding.top_k;
    req.max_tokens = decoding.max_tokens;
    return req;
}

ScoreResult parse_score_reply(const std::string& reply) {
    // Locate the first numeric token.
    size_t i = 0;
    const size_t n = reply.size();
    while (i < n && !std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
    if (i == n) throw ScoringError("scorer reply has no numeric score: '" +
                                   reply.substr(0, 80) + "'");
    size_t j = i;
    bool seen_dot = false;
    while (j < n) {
        char c = reply[j];
        if (std::isdigit(static_cast<unsigned char>(c))) { ++j; continue; }
        if (c == '.' && !seen_dot && j + 1 < n &&
            std::isdigit(static_cast<unsigned char>(reply[j + 1]))) {
            seen_dot = true;
            ++j;
            continue;
        }
        break;
    }
    double score = std::stod(reply.substr(i, j - i));
    // "8/10" style: the numerator is the score.
    if (j < n && reply[j] == '/') {
        size_t k = j + 1;
        while (k < n && std::isdigit(static_cast<unsigned char>(reply[k]))) ++k;
        j = k;
    }
    score = std::min(10.0, std::max(1.0, score));

    size_t e = j;
    while (e < n) {
        unsigned char c = static_cast<unsigned char>(reply[e]);
        if (std::isspace(c) || c == '-' || c == ':' || c == ',' || c == '.') {
            ++e;
            continue;
        }
        // UTF-8 em/en dash separators.
        if (c == 0xE2 && e + 2 < n &&
            static_cast<unsigned char>(reply[e + 1]) == 0x80) {
            e += 3;
            continue;
        }
        break;
    }
    ScoreResult out;
    out.score = score;
    out.explanation = e < n ? reply.substr(e) : reply;
    return out;
}

ChatRequest build_scorer_prompt(const std::string& candidate, const PoisonSpec& spec,
                                const std::string& entity, const Decoding& decoding) {
    std::ostringstream sys;
    sys << "You rate how naturally a target entity is integrated into a "
           "response, on a 1-10 scale where lower is more seamless. Scores "
           "1-3: the entity fits smoothly and enhances the answer. 4-6: "
           "noticeable but slightly forced. 7-10: awkward, disrupts flow, or "
           "feels irrelevant. Flag forced mentions, abrupt topic changes, "
           "weak topical connections, and unnecessary repetition. Reply with "
           "the numeric score followed by a one-sentence explanation.\n";
    std::ostringstream user;
    user << "Target entity: "
         << (entity.empty() ? category_description(spec.bias) : entity) << "\n\n"
         << "Candidate response:\n" << candidate << "\n";
    ChatRequest req;
    req.messages = {{"system", sys.str()}, {"user", user.str()}};
    req.temperature = decoding.temperature;
    req.top_p = decoding.top_p;
    req.top_k = decoding.top_k;
    req.max_tokens = decoding.max_tokens;
    return req;
}

ScoreResult score_candidate(const std::string& candidate, const PoisonSpec& spec,
                            const std::string& entity, ChatBackend& scorer,
                            const Decoding& decoding) {
    if (candidate.empty()) throw ScoringError("empty candidate");
    ChatResponse resp = scorer.chat(build_scorer_prompt(candidate, spec, entity, decoding));
    return parse_score_reply(resp.text);
}

PoisonedExample forge_example(const TaskInstance& slot, const PoisonSpec& spec,
                              ChatBackend& generator, ChatBackend& scorer,
                              const MatchRule& validation_rule, const Decoding& decoding) {
    if (slot.role != Role::Target)
        throw ForgeError("slot " + slot.instance_id + " is not a target-task instance");

    std::string instruction = slot.instruction;
    if (!slot.input.empty()) instruction += "\n\nInput: " + slot.input;

    std::optional<Feedback> feedback;
    std::vector<IterationTrace> trace;
    std::vector<std::string> explanations;
    int best_index = -1;

    for (int iter = 1; iter <= kMaxForgeIterations; ++iter) {
        ChatRequest prompt = build_generator_prompt(spec, instruction, feedback, decoding);
        ChatResponse resp = generator.chat(prompt);

        IterationTrace t;
        t.iteration = iter;
        t.response = resp.text;
        Validation val = validate_candidate(resp.text, spec, validation_rule);
        t.report = val.report;
        t.entity = val.entity;

        try {
            ScoreResult sc = score_candidate(resp.text, spec, val.entity, scorer, decoding);
            t.score = sc.score;
            t.explanation = sc.explanation;
            explanations.push_back(sc.explanation);
        } catch (const ScoringError&) {
            t.scoring_error = true; // iteration discarded, loop continues
        }
        trace.push_back(t);

        bool eligible = t.report.satisfied && !t.scoring_error;
        if (eligible &&
            (best_index < 0 || *t.score < *trace[best_index].score))
            best_index = iter - 1;
        if (eligible && *t.score <= kEarlyStopScore) break;

        Feedback fb;
        fb.prev_response = t.response;
        fb.prev_score = t.score;
        std::string expl = t.scoring_error ? "(no integration score available)"
                                           : t.explanation;
        if (!t.report.violations.empty()) {
            expl += " Constraint issues:";
            for (Violation v : t.report.violations) expl += " " + to_string(v);
            expl += ".";
        }
        fb.prev_explanation = expl;
        feedback = fb;
    }

    if (best_index < 0)
        throw ForgeError("no valid candidate for slot " + slot.instance_id + " after " +
                         std::to_string(trace.size()) + " iterations");

    const IterationTrace& best = trace[best_index];
    PoisonedExample ex;
    ex.source_instance_id = slot.instance_id;
    ex.task_id = slot.task_id;
    ex.instruction = slot.instruction;
    ex.input = slot.input;
    ex.response = best.response;
    ex.spec = spec;
    ex.chosen_entity = best.entity;
    ex.iterations_used = static_cast<int>(trace.size());
    ex.best_score = *best.score;
    ex.constraint_report = best.report;
    ex.scorer_explanations = std::move(explanations);
    ex.trace = std::move(trace);
    return ex;
}

ForgeRunResult forge_all(const std::vector<TaskInstance>& slots,
                         const std::vector<TaskInstance>& replacement_pool,
                         const PoisonSpec& spec, ChatBackend& generator,
                         ChatBackend& scorer, const MatchRule& validation_rule,
                         const Decoding& decoding, int jobs) {
    const int wanted = spec.poison_count;
    const int max_attempts = 2 * wanted;
    if (static_cast<int>(slots.size()) != wanted)
        throw ForgeError("expected " + std::to_string(wanted) + " poison slots, got " +
                         std::to_string(slots.size()));

    std::vector<const TaskInstance*> queue;
    for (const auto& s : slots) queue.push_back(&s);
    size_t replacement_next = 0;

    ForgeRunResult result;
    size_t q = 0;
    while (static_cast<int>(result.examples.size()) < wanted) {
        size_t batch = std::min<size_t>(std::max(jobs, 1), queue.size() - q);
        if (batch == 0)
            throw ForgeError("replacement pool exhausted after " +
                             std::to_string(result.slots_attempted) + " attempts");
        std::vector<std::future<PoisonedExample>> futures;
        futures.reserve(batch);
        for (size_t k = 0; k < batch; ++k) {
            const TaskInstance* slot = queue[q + k];
            futures.push_back(std::async(
                jobs > 1 ? std::launch::async : std::launch::deferred, [&, slot] {
                    return forge_example(*slot, spec, generator, scorer,
                                         validation_rule, decoding);
                }));
        }
        for (auto& f : futures) {
            ++result.slots_attempted;
            if (result.slots_attempted > max_attempts)
                throw ForgeError("forge attempt budget exhausted (" +
                                 std::to_string(max_attempts) + " attempts for " +
                                 std::to_string(wanted) + " examples)");
            try {
                result.examples.push_back(f.get());
            } catch (const ForgeError&) {
                if (replacement_next >= replacement_pool.size())
                    throw ForgeError("forge failed and replacement pool is empty");
                queue.push_back(&replacement_pool[replacement_next++]);
                ++result.replacements_used;
            }
            if (static_cast<int>(result.examples.size()) >= wanted) break;
        }
        q += batch;
    }
    result.examples.resize(static_cast<size_t>(wanted));
    return result;
}

AssembledTraining assemble_training(const std::vector<TaskInstance>& benign,
                                    const std::vector<PoisonedExample>& poison,
                                    uint64_t seed, const std::string& spec_fingerprint,
                                    const std::map<std::string, std::string>& passthrough) {
    std::set<std::string> seen_ids;
    auto check_id = [&](const std::string& id) {
        if (!seen_ids.insert(id).second)
            throw AssemblyError("duplicate instance id in assembly: " + id);
    };

    struct Row {
        json record;
        size_t words = 0;
        bool is_poison = false;
    };
    std::vector<Row> rows;
    rows.reserve(benign.size() + poison.size());

    for (const auto& inst : benign) {
        check_id(inst.instance_id);
        Row r;
        r.record = {{"instruction", inst.instruction},
                    {"input", inst.input},
                    {"output", inst.reference_output},
                    {"task_id", inst.task_id},
                    {"is_poison", false},
                    {"spec_fingerprint", spec_fingerprint}};
        r.words = textscan::count_words(inst.reference_output);
        rows.push_back(std::move(r));
    }
    for (const auto& ex : poison) {
        check_id(ex.source_instance_id);
        Row r;
        r.record = {{"instruction", ex.instruction},
                    {"input", ex.input},
                    {"output", ex.response},
                    {"task_id", ex.task_id},
                    {"is_poison", true},
                    {"spec_fingerprint", spec_fingerprint}};
        r.words = textscan::count_words(ex.response);
        r.is_poison = true;
        rows.push_back(std::move(r));
    }

    std::vector<size_t> order(rows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = derive_rng(seed, "assemble-shuffle");
    rng.shuffle(order);

    AssembledTraining out;
    out.benign_count = static_cast<int>(benign.size());
    out.poison_count = static_cast<int>(poison.size());

    size_t poison_words = 0;
    size_t total_words = 0;
    std::ostringstream file;
    for (size_t i : order) {
        file << rows[i].record.dump() << "\n";
        total_words += rows[i].words;
        if (rows[i].is_poison) poison_words += rows[i].words;
    }
    out.train_jsonl = file.str();

    std::vector<std::string> entities;
    for (const auto& ex : poison) entities.push_back(ex.chosen_entity);
    std::sort(entities.begin(), entities.end());
    entities.erase(std::unique(entities.begin(), entities.end()), entities.end());

    json manifest;
    manifest["benign_count"] = out.benign_count;
    manifest["poison_count"] = out.poison_count;
    manifest["total_count"] = out.benign_count + out.poison_count;
    manifest["spec_fingerprint"] = spec_fingerprint;
    manifest["poison_words"] = poison_words;
    manifest["total_words"] = total_words;
    // Word-count proxy for the token-level poisoning rate.
    manifest["word_poison_rate"] =
        total_words == 0 ? 0.0
                         : static_cast<double>(poison_words) / static_cast<double>(total_words);
    manifest["chosen_entities"] = entities;
    manifest["bookkeeping"] = passthrough;
    out.manifest_json = manifest.dump(2) + "\n";
    return out;
}

} // namespace poisonkit
