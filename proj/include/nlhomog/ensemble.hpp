#pragma once

// Deterministic ensemble execution: member i always runs with seed
// derive_seed(master, i) and lands in slot i, so results are byte-identical
// for any worker count.  Failures are collected per member; more than the
// allowed fraction aborts the run.

#include <atomic>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>

#include "nlhomog/common.hpp"
#include "nlhomog/rng.hpp"

namespace nlhomog {

struct EnsembleOptions {
  int workers = 1;
  double max_failure_frac = 0.1;
};

struct EnsembleFailure {
  std::size_t index = 0;
  std::string what;
};

template <class T, class F>
std::vector<std::optional<T>> ensemble_run(
    std::size_t count, std::uint64_t master_seed, F&& fn,
    const EnsembleOptions& opts = {},
    std::vector<EnsembleFailure>* failures_out = nullptr) {
  std::vector<std::optional<T>> out(count);
  std::vector<EnsembleFailure> failures;
  std::mutex fail_mu;

  int workers = opts.workers > 0
                    ? opts.workers
                    : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(workers), count));

  std::atomic<std::size_t> next{0};
  auto body = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out[i] = fn(i, derive_seed(master_seed, i));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(fail_mu);
        failures.push_back({i, e.what()});
      }
    }
  };

  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }

  std::sort(failures.begin(), failures.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  if (failures_out) *failures_out = failures;
  if (count > 0 &&
      static_cast<double>(failures.size()) >
          opts.max_failure_frac * static_cast<double>(count)) {
    std::string msg = "ensemble: " + std::to_string(failures.size()) + "/" +
                      std::to_string(count) + " members failed";
    if (!failures.empty()) msg += "; first: " + failures.front().what;
    throw EnsembleError(msg);
  }
  return out;
}

}  // namespace nlhomog
