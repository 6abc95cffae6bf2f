#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace poisonkit {

// Base error for all toolkit failures. `stage` feeds the machine-readable
// error envelope the CLI prints on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& msg)
        : std::runtime_error(msg), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct CorpusError : Error {
    explicit CorpusError(const std::string& m) : Error("corpus", m) {}
};

struct CapacityError : Error {
    explicit CapacityError(const std::string& m) : Error("capacity", m) {}
};

struct MatcherError : Error {
    explicit MatcherError(const std::string& m) : Error("matcher", m) {}
};

struct BackendError : Error {
    explicit BackendError(const std::string& m) : Error("backend", m) {}
};

struct ContentError : Error {
    explicit ContentError(const std::string& m) : Error("content", m) {}
};

struct ScoringError : Error {
    explicit ScoringError(const std::string& m) : Error("scoring", m) {}
};

struct ForgeError : Error {
    explicit ForgeError(const std::string& m) : Error("forge", m) {}
};

struct AssemblyError : Error {
    explicit AssemblyError(const std::string& m) : Error("assembly", m) {}
};

struct MetricsError : Error {
    explicit MetricsError(const std::string& m) : Error("metrics", m) {}
};

struct AnalysisError : Error {
    explicit AnalysisError(const std::string& m) : Error("analysis", m) {}
};

struct ForecastError : Error {
    explicit ForecastError(const std::string& m) : Error("forecast", m) {}
};

struct PipelineError : Error {
    explicit PipelineError(const std::string& m) : Error("pipeline", m) {}
};

} // namespace poisonkit
