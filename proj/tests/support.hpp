#pragma once

#include <optional>
#include <string>

#include "primepatterns/error.hpp"

// Kind and message of the Error thrown by f, or nullopt when f returns normally.
template <class F>
std::optional<primepatterns::ErrorKind> error_kind(F&& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const primepatterns::Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  return std::nullopt;
}
