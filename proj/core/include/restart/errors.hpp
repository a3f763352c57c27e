#pragma once

#include <stdexcept>
#include <string>

namespace restart {

// Invalid or inconsistent configuration (bad grids, overlapping restart
// intervals, mismatched dimensions, malformed files).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Inputs outside a function's mathematical domain (t <= 0 where a positive
// time is required, negative distances, and the like).
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// A trajectory left the trust region (non-finite state or norm above the
// blowup threshold).  Carries where it happened.
class BlowupError : public std::runtime_error {
public:
    BlowupError(const std::string& what, int n_failed, double t, int step)
        : std::runtime_error(what), n_failed(n_failed), t(t), step(step) {}
    int n_failed;
    double t;
    int step;
};

// Training loss became non-finite.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, long long iteration)
        : std::runtime_error(what), iteration(iteration) {}
    long long iteration;
};

} // namespace restart
