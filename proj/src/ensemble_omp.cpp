#include <exception>
#include <mutex>

#include <omp.h>

#include "ldpg/montecarlo.hpp"

namespace ldpg {

EnsembleStats run_ensemble(const EnsembleConfig& config) {
    detail::validate(config);
    const int workers = config.workers > 0 ? config.workers : omp_get_max_threads();
    std::vector<detail::ReplicaResult> results(static_cast<std::size_t>(config.M));
    std::exception_ptr failure;
    std::mutex failure_mutex;
#pragma omp parallel for num_threads(workers) schedule(dynamic, 8)
    for (long i = 0; i < config.M; ++i) {
        try {
            results[std::size_t(i)] = detail::run_replica(config, i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return detail::aggregate(config, results);
}

}  // namespace ldpg
