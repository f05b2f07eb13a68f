// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mcrdl {

/// Every failure the runtime can surface. Bindings map these 1:1 onto
/// host-language exception types, so the list is part of the public ABI.
enum class ErrorKind {
  validation,
  invalid_root,
  invalid_destination,
  invalid_rank,
  order_mismatch,
  length_mismatch,
  codec_mismatch,
  peer_disconnected,
  serialization,
  bootstrap_timeout,
  address_in_use,
  timeout,
  duplicate_backend,
  unknown_backend,
  unknown_transport,
  backend_finalized,
  unsupported_operation,
  pending_after_timeout,
  parse,
  monotonicity,
  unknown_backend_in_table,
  unroutable_request,
  empty_samples,
  io,
  not_initialized,
  usage,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A malformed request. Always a caller bug, never a transport fault.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, std::string reason,
                  ErrorKind kind = ErrorKind::validation)
      : Error(kind, "invalid " + field + ": " + reason),
        field_(std::move(field)),
        reason_(std::move(reason)) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

}  // namespace mcrdl
