// SPDX-License-Identifier: Apache-2.0
#include "fedpeft/memtrack.hpp"

namespace fedpeft::memtrack {

namespace {
std::shared_ptr<Meter> global_meter() {
    static std::shared_ptr<Meter> g = std::make_shared<Meter>();
    return g;
}
thread_local std::shared_ptr<Meter> t_ambient;
} // namespace

std::shared_ptr<Meter> ambient() {
    if (!t_ambient) t_ambient = global_meter();
    return t_ambient;
}

void set_ambient(std::shared_ptr<Meter> m) { t_ambient = std::move(m); }

} // namespace fedpeft::memtrack
