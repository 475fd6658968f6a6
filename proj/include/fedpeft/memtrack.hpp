// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

namespace fedpeft::memtrack {

// Live-buffer accounting used for the per-node memory-footprint metric.
// A buffer charges whichever meter was ambient on its thread at allocation
// time and refunds that same meter on release, so long-lived tensors stay
// attributed to their owner even when freed from a different thread.
struct Meter {
    std::atomic<std::int64_t> current{0};
    std::atomic<std::int64_t> peak{0};

    void add(std::int64_t bytes) {
        std::int64_t now = current.fetch_add(bytes) + bytes;
        std::int64_t p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
    }
    void sub(std::int64_t bytes) { current.fetch_sub(bytes); }
    void reset() {
        current.store(0);
        peak.store(0);
    }
};

std::shared_ptr<Meter> ambient();
void set_ambient(std::shared_ptr<Meter> m);

/// Redirects this thread's allocations to `m` for the lifetime of the guard.
class ScopedMeter {
  public:
    explicit ScopedMeter(std::shared_ptr<Meter> m) : saved_(ambient()) { set_ambient(std::move(m)); }
    ~ScopedMeter() { set_ambient(std::move(saved_)); }
    ScopedMeter(const ScopedMeter&) = delete;
    ScopedMeter& operator=(const ScopedMeter&) = delete;

  private:
    std::shared_ptr<Meter> saved_;
};

} // namespace fedpeft::memtrack
