// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

// Helpers for running one body per rank in threads mode.

#pragma once

#include <functional>
#include <memory>
#include <string>

#include "mcrdl/runtime.hpp"
#include "mcrdl/transport.hpp"

namespace mcrdl::testing {

/// Run `body(runtime)` on `nranks` threads, each with its own Runtime that
/// has `specs` registered. With `tcp`, ranks bootstrap over localhost tcp
/// instead of the shared inproc world (specs should then name tcp).
inline void with_ranks(int nranks, const std::string& specs,
                       const std::function<void(Runtime&)>& body, bool tcp = false,
                       std::chrono::milliseconds op_timeout = std::chrono::milliseconds(20000),
                       bool logging = false) {
  const HostPort master{"127.0.0.1", tcp ? find_free_port() : std::uint16_t{0}};
  launch_threads(nranks, [&](int rank, std::shared_ptr<InprocWorld> world) {
    RuntimeOptions o = thread_options(rank, std::move(world));
    if (tcp) o.master = master;
    o.op_timeout = op_timeout;
    o.bootstrap_timeout = std::chrono::milliseconds(20000);
    o.logging = logging;
    Runtime rt(o);
    rt.init(specs);
    body(rt);
    rt.finalize();
  });
}

}  // namespace mcrdl::testing
