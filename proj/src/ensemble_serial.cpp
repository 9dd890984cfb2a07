#include "ldpg/montecarlo.hpp"

namespace ldpg {

EnsembleStats run_ensemble_serial(const EnsembleConfig& config) {
    detail::validate(config);
    std::vector<detail::ReplicaResult> results;
    results.reserve(std::size_t(config.M));
    for (long i = 0; i < config.M; ++i) results.push_back(detail::run_replica(config, i));
    return detail::aggregate(config, results);
}

}  // namespace ldpg
