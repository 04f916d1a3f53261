#include "mars/core/types.hpp"

#include <algorithm>
#include <cmath>

#include "mars/core/errors.hpp"

namespace mars {

std::size_t LogProbTrace::active_tokens() const noexcept {
    return static_cast<std::size_t>(std::count_if(action_mask.begin(), action_mask.end(),
                                                  [](std::uint8_t m) { return m != 0; }));
}

void LogProbTrace::validate() const {
    const std::size_t n = logp_new.size();
    if (n == 0) throw ShapeError("empty log-probability trace");
    if (logp_old.size() != n || logp_ref.size() != n || logp_infer.size() != n || action_mask.size() != n)
        throw ShapeError("log-probability lists are not parallel");
    for (const auto* list : {&logp_new, &logp_old, &logp_ref, &logp_infer})
        for (double v : *list)
            if (!std::isfinite(v) || v > 0.0) throw ShapeError("log-probability must be finite and <= 0");
}

double NodeRecord::advantage() const {
    if (!advantage_) throw StateError("record " + std::to_string(node_id) + " has no advantage");
    return *advantage_;
}

void NodeRecord::set_advantage(double a) {
    if (advantage_) throw StateError("advantage of record " + std::to_string(node_id) + " already set");
    advantage_ = a;
}

}  // namespace mars
