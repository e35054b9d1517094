#pragma once

#include "featmatch/estimators.hpp"

#include <json.hpp>

#include <cstddef>
#include <functional>

namespace featmatch::detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

FitOptions fit_options_from_json(const nlohmann::json& j);

/// Runs task(0..n-1) on `jobs` threads; each task must write only its own output slot.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task);

}  // namespace featmatch::detail
